//! Command-line front end. Every subcommand shares one flag set so a single
//! config file can drive all of them; flags a subcommand does not use are
//! ignored.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eps_planner::chooser::{self, plan};
use eps_planner::sensitivity::worst_case_bound;
use eps_planner::trainer::error_rate;
use eps_planner::{utility, BoundMode, Dataset, LossKind, LossSpec, SolverMode, TrainConfig};
use serde_json::json;

use crate::config::{self, parse_grid};
use crate::data::{self, DataFormat};
use crate::error::{HarnessError, Result};
use crate::experiments::{self, Setup};
use crate::output::{self, Summary};

#[derive(Debug, Parser)]
#[command(name = "eps-planner", version, about = "Choose a privacy budget from a single private training run")]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one private model and report its utility.
    Train(RunArgs),
    /// Estimated vs. actual utility over a target grid.
    Estimate(RunArgs),
    /// Pick the budget expected to reach --target-utility.
    ChooseEps(RunArgs),
    /// Average and worst estimation error for each measuring budget.
    SweepMeasuring(RunArgs),
    /// Estimation error as the number of training examples grows.
    SweepSamples(RunArgs),
    /// Analytic derivative against central finite differences.
    OracleCompare(RunArgs),
    /// Write a seeded synthetic dataset.
    GenData(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Estimate(_) => "estimate",
            Command::ChooseEps(_) => "choose-eps",
            Command::SweepMeasuring(_) => "sweep-measuring",
            Command::SweepSamples(_) => "sweep-samples",
            Command::OracleCompare(_) => "oracle-compare",
            Command::GenData(_) => "gen-data",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Train(a)
            | Command::Estimate(a)
            | Command::ChooseEps(a)
            | Command::SweepMeasuring(a)
            | Command::SweepSamples(a)
            | Command::OracleCompare(a)
            | Command::GenData(a) => a,
        }
    }
}

/// Comma list or `start:stop:step` range of positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_grid(s).map(Grid)
    }
}

/// Comma list of sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sizes(pub Vec<usize>);

impl std::str::FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let sizes = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or(format!("bad size `{t}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Sizes(sizes))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err("must be a positive number".into()),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err("must be a non-negative number".into()),
    }
}

fn unit_open(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err("must lie strictly between 0 and 1".into()),
    }
}

fn finite(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err("must be a finite number".into()),
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct RunArgs {
    /// Flat `key = value` file supplying defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dataset file; without it a synthetic dataset is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// csv | sparse_text (default: by file extension, `.csv` or sparse).
    #[arg(long)]
    pub format: Option<DataFormat>,

    /// Synthetic dataset size.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,

    /// Synthetic feature dimension.
    #[arg(long, default_value_t = 10)]
    pub p: usize,

    /// Distance of the synthetic class means from the origin.
    #[arg(long, default_value_t = 0.25, value_parser = non_negative)]
    pub separation: f64,

    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,

    /// logistic | huber_svm[:h] | quadratic | smooth_hinge[:t]
    #[arg(long, default_value = "logistic")]
    pub loss: LossKind,

    /// Loss constants: paper (zeta = 2 sqrt p, lambda = p) or tight.
    #[arg(long, default_value = "tight")]
    pub bounds: BoundMode,

    #[arg(long, default_value_t = 0.01, value_parser = non_negative)]
    pub reg_lambda: f64,

    #[arg(long, default_value_t = 1e-3, value_parser = unit_open)]
    pub delta: f64,

    /// Privacy budget for `train`.
    #[arg(long, value_parser = positive)]
    pub eps: Option<f64>,

    /// Measuring budget(s): comma list or start:stop:step.
    #[arg(long)]
    pub measure_eps: Option<Grid>,

    /// Target budgets (or the measuring grid for sweep-measuring).
    #[arg(long)]
    pub targets: Option<Grid>,

    /// Sample sizes for sweep-samples.
    #[arg(long)]
    pub sizes: Option<Sizes>,

    #[arg(long, default_value_t = 99)]
    pub subsample_seed: u64,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,

    /// Base seed for noise draws.
    #[arg(long, env = "EPS_PLANNER_SEED", default_value_t = 0)]
    pub seed: u64,

    /// exact | sgd
    #[arg(long, default_value = "exact")]
    pub solver: SolverMode,

    /// Gradient-norm tolerance of the exact solver.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub tol: f64,

    /// Finite-difference step relative to epsilon.
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    pub rel_step: f64,

    /// Utility (mean loss) the chosen budget should reach.
    #[arg(long, value_parser = finite)]
    pub target_utility: Option<f64>,

    /// Output file; tables go to stdout without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn train_config(&self) -> TrainConfig {
        let base = match self.solver {
            SolverMode::Exact => TrainConfig::exact(),
            SolverMode::SgdRepro => TrainConfig::sgd_repro(),
        };
        base.with_reg_lambda(self.reg_lambda).with_tolerance(self.tol)
    }

    fn dataset(&self) -> Result<Dataset> {
        match &self.data {
            Some(path) => {
                let format = self.format.unwrap_or_else(|| match path.extension() {
                    Some(ext) if ext == "csv" => DataFormat::Csv,
                    _ => DataFormat::SparseText,
                });
                data::load_dataset(path, format)
            }
            None => data::gen_synthetic(self.n, self.p, self.separation, self.data_seed),
        }
    }

    fn setup(&self) -> Result<Setup> {
        let data = self.dataset()?;
        let spec = LossSpec::with_default_bounds(self.loss, data.p(), self.bounds)?;
        Ok(Setup {
            data,
            spec,
            train: self.train_config(),
            delta: self.delta,
        })
    }

    fn single_measure(&self) -> Result<f64> {
        match &self.measure_eps {
            None => Ok(0.25),
            Some(Grid(v)) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(HarnessError::Usage("--measure-eps takes a single value here".into())),
        }
    }

    fn measures(&self) -> Vec<f64> {
        self.measure_eps
            .clone()
            .map_or_else(|| config::DEFAULT_LOW_MEASURES.to_vec(), |g| g.0)
    }

    fn targets(&self) -> Vec<f64> {
        self.targets.clone().map_or_else(config::default_low_targets, |g| g.0)
    }

    fn inputs(&self, setup: Option<&Setup>) -> serde_json::Value {
        let dataset = match &self.data {
            Some(path) => json!({ "path": path.display().to_string(), "format": self.format.map(|f| format!("{f:?}")) }),
            None => json!({
                "synthetic": { "n": self.n, "p": self.p, "separation": self.separation, "seed": self.data_seed }
            }),
        };
        let mut v = json!({
            "dataset": dataset,
            "loss": self.loss,
            "bounds": self.bounds,
            "reg_lambda": self.reg_lambda,
            "delta": self.delta,
            "eps": self.eps,
            "measure_eps": self.measure_eps.as_ref().map(|g| &g.0),
            "targets": self.targets.as_ref().map(|g| &g.0),
            "sizes": self.sizes.as_ref().map(|s| &s.0),
            "repeats": self.repeats,
            "solver": self.solver,
            "tol": self.tol,
            "rel_step": self.rel_step,
            "target_utility": self.target_utility,
        });
        if let Some(s) = setup {
            v["n"] = json!(s.data.n());
            v["p"] = json!(s.data.p());
            v["loss_spec"] = json!(s.spec);
        }
        v
    }

    fn seeds(&self) -> serde_json::Value {
        json!({
            "base": self.seed,
            "actual_offset": experiments::ACTUAL_SEED_OFFSET,
            "data": self.data.is_none().then_some(self.data_seed),
            "subsample": self.subsample_seed,
        })
    }
}

/// Splices `--config` file entries in front of the real arguments, so any
/// flag repeated on the command line wins.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(args.len(), |i| i + 2);
    let mut out: Vec<OsString> = args[..sub.min(args.len())].to_vec();
    for (k, v) in config::read_config(&path)? {
        if k == "config" {
            return Err(HarnessError::Usage("config files cannot include other config files".into()));
        }
        out.push(format!("--{k}={v}").into());
    }
    out.extend_from_slice(&args[sub.min(args.len())..]);
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    return 0;
                }
                _ => 1,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit_table<T: serde::Serialize>(
    cmd: &Command,
    rows: &[T],
    setup: Option<&Setup>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let args = cmd.args();
    let table = output::csv_table(rows)?;
    match &args.out {
        None => output::write_stdout(stdout, &table),
        Some(path) => {
            output::write_file(path, &table)?;
            let summary = Summary::new(cmd.name(), args.inputs(setup), args.seeds(), json!({ "rows": rows.len(), "table": path.file_name().map(|f| f.to_string_lossy().into_owned()) }));
            summary.write(&output::summary_path(path))
        }
    }
}

/// Key-value report on stdout, plus the JSON summary at `--out` if given.
fn emit_report(cmd: &Command, lines: &[(&str, String)], results: serde_json::Value, setup: &Setup, stdout: &mut dyn Write) -> Result<()> {
    let mut text = String::new();
    for (k, v) in lines {
        text.push_str(&format!("{k}: {v}\n"));
    }
    output::write_stdout(stdout, &text)?;
    if let Some(path) = &cmd.args().out {
        let args = cmd.args();
        Summary::new(cmd.name(), args.inputs(Some(setup)), args.seeds(), results).write(path)?;
    }
    Ok(())
}

fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<()> {
    let args = cmd.args();
    let repeats = args.repeats as usize;
    match cmd {
        Command::GenData(_) => {
            let d = data::gen_synthetic(args.n, args.p, args.separation, args.data_seed)?;
            let text = match args.format.unwrap_or(DataFormat::Csv) {
                DataFormat::Csv => data::to_csv(&d),
                DataFormat::SparseText => data::to_sparse_text(&d),
            };
            match &args.out {
                None => output::write_stdout(stdout, &text),
                Some(path) => output::write_file(path, &text),
            }
        }
        Command::Train(_) => {
            let eps = args
                .eps
                .ok_or_else(|| HarnessError::Usage("train needs --eps".into()))?;
            let setup = args.setup()?;
            let model = setup.train_at(eps, args.seed)?;
            let u = utility(&model.theta, &setup.data, &setup.spec)?;
            let err = error_rate(&model.theta, &setup.data)?;
            let bound = worst_case_bound(
                setup.spec.zeta(),
                model.theta_norm(),
                setup.data.p(),
                setup.delta,
                eps,
                setup.data.n(),
            )?;
            let results = json!({
                "theta": model.theta,
                "utility": u,
                "error_rate": err,
                "grad_norm": model.grad_norm_at_solution,
                "iterations": model.iterations_used,
                "worst_case_bound": bound,
            });
            emit_report(
                cmd,
                &[
                    ("epsilon", format!("{eps:?}")),
                    ("utility", format!("{u:?}")),
                    ("error_rate", format!("{err:?}")),
                    ("theta_norm", format!("{:?}", model.theta_norm())),
                    ("grad_norm", format!("{:?}", model.grad_norm_at_solution)),
                    ("iterations", model.iterations_used.to_string()),
                    ("worst_case_bound", format!("{bound:?}")),
                ],
                results,
                &setup,
                stdout,
            )
        }
        Command::ChooseEps(_) => {
            let target = args
                .target_utility
                .ok_or_else(|| HarnessError::Usage("choose-eps needs --target-utility".into()))?;
            let measure_eps = args.single_measure()?;
            let setup = args.setup()?;
            let p = plan(&setup.data, &setup.spec, &setup.train, measure_eps, setup.delta, target, args.seed)?;
            let mut lines = vec![
                ("chosen_epsilon", format!("{:?}", p.chosen_eps)),
                ("measure_epsilon", format!("{:?}", p.line.measure_eps())),
                ("base_utility", format!("{:?}", p.line.base_utility)),
                ("slope", format!("{:?}", p.line.slope)),
                ("error_scale", format!("{:?}", p.error_scale.scale)),
            ];
            if let Some(w) = &p.warning {
                lines.push(("warning", w.clone()));
            }
            let results = json!({
                "chosen_epsilon": p.chosen_eps,
                "line": p.line,
                "error_scale": p.error_scale,
                "warning": p.warning,
                "trainings": p.trainings,
                "slope_tolerance": chooser::SLOPE_TOLERANCE,
            });
            emit_report(cmd, &lines, results, &setup, stdout)
        }
        Command::Estimate(_) => {
            let setup = args.setup()?;
            let table = experiments::estimate_vs_actual(&setup, &args.measures(), &args.targets(), repeats, args.seed)?;
            emit_table(cmd, &table.rows, Some(&setup), stdout)
        }
        Command::SweepMeasuring(_) => {
            let setup = args.setup()?;
            let rows = experiments::measuring_sweep(&setup, &args.targets(), repeats, args.seed)?;
            emit_table(cmd, &rows, Some(&setup), stdout)
        }
        Command::SweepSamples(_) => {
            let setup = args.setup()?;
            let n = setup.data.n();
            let sizes = args
                .sizes
                .clone()
                .map_or_else(|| vec![(n / 16).max(2), (n / 4).max(2), n], |s| s.0);
            let rows = experiments::sample_sweep(
                &setup,
                &sizes,
                args.single_measure()?,
                &args.targets(),
                repeats,
                args.seed,
                args.subsample_seed,
            )?;
            emit_table(cmd, &rows, Some(&setup), stdout)
        }
        Command::OracleCompare(_) => {
            if args.solver != SolverMode::Exact {
                return Err(HarnessError::Usage("oracle-compare needs --solver exact".into()));
            }
            let setup = args.setup()?;
            let seeds: Vec<u64> = (0..repeats).map(|r| experiments::estimate_seed(args.seed, r)).collect();
            let rows = experiments::oracle_compare(&setup, &args.measures(), &seeds, args.rel_step)?;
            emit_table(cmd, &rows, Some(&setup), stdout)
        }
    }
}

/// Entry point used by the binary.
pub fn main_exit_code() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
