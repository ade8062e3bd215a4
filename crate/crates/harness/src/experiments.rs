//! The three evaluation protocols (estimate vs. actual, measuring-point
//! sweep, sample-count sweep) and the retraining oracle for the implicit
//! derivative.
//!
//! Every unit of work is a pure function of its inputs and seed; units run in
//! parallel and results are assembled in grid order.

use eps_planner::linalg::norm;
use eps_planner::sensitivity::{dtheta_deps, utility_slope};
use eps_planner::{
    extrapolate, measure, train, utility, Dataset, ExtrapolationLine, LossSpec, NoiseDraw, PrivacyBudget,
    PrivateModel, SolveOptions, SolverMode, TrainConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::subsample;
use crate::error::{HarnessError, Result};

/// Seeds of the actual-utility runs are offset from the estimating seeds so
/// the two never share a noise draw.
pub const ACTUAL_SEED_OFFSET: u64 = 1 << 32;

pub fn estimate_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

pub fn actual_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(ACTUAL_SEED_OFFSET).wrapping_add(repeat as u64)
}

/// Dataset, loss and solver settings shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub data: Dataset,
    pub spec: LossSpec,
    pub train: TrainConfig,
    pub delta: f64,
}

impl Setup {
    fn budget(&self, eps: f64) -> Result<PrivacyBudget> {
        Ok(PrivacyBudget::new(eps, self.delta)?)
    }

    fn solve_options(&self, eps: f64) -> SolveOptions {
        match self.train.solver_mode {
            SolverMode::Exact => SolveOptions::default(),
            SolverMode::SgdRepro => {
                let ridge = (self.train.reg_lambda + 2.0 * self.spec.lambda_hess() / eps) / self.data.n() as f64;
                SolveOptions::non_stationary(ridge)
            }
        }
    }

    pub fn train_at(&self, eps: f64, seed: u64) -> Result<PrivateModel> {
        let noise = NoiseDraw::from_seed(seed, self.data.p());
        Ok(train(&self.data, &self.spec, &self.train, self.budget(eps)?, &noise)?)
    }

    /// One training run at `eps` and the utility line through it.
    pub fn line_at(&self, eps: f64, seed: u64) -> Result<ExtrapolationLine> {
        let model = self.train_at(eps, seed)?;
        let (_, line) = measure(&model, &self.data, &self.spec, self.solve_options(eps))?;
        Ok(line)
    }

    pub fn utility_at(&self, eps: f64, seed: u64) -> Result<f64> {
        let model = self.train_at(eps, seed)?;
        Ok(utility(&model.theta, &self.data, &self.spec)?)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_grid(name: &str, grid: &[f64], sorted: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(HarnessError::Usage(format!("{name} grid is empty")));
    }
    if let Some(bad) = grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(HarnessError::Usage(format!("{name} grid contains nonpositive epsilon {bad}")));
    }
    if sorted && grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Usage(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        Err(HarnessError::Usage("repeats must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `lines[m][r]` for every measuring point and repeat.
fn lines(setup: &Setup, measures: &[f64], repeats: usize, base_seed: u64) -> Result<Vec<Vec<ExtrapolationLine>>> {
    let flat: Vec<ExtrapolationLine> = (0..measures.len() * repeats)
        .into_par_iter()
        .map(|k| setup.line_at(measures[k / repeats], estimate_seed(base_seed, k % repeats)))
        .collect::<Result<_>>()?;
    Ok(flat.chunks(repeats).map(<[_]>::to_vec).collect())
}

/// Mean actual utility at each target over `repeats` independent draws.
pub fn actual_curve(setup: &Setup, targets: &[f64], repeats: usize, base_seed: u64) -> Result<Vec<f64>> {
    let flat: Vec<f64> = (0..targets.len() * repeats)
        .into_par_iter()
        .map(|k| setup.utility_at(targets[k / repeats], actual_seed(base_seed, k % repeats)))
        .collect::<Result<_>>()?;
    Ok(flat.chunks(repeats).map(mean).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub measure_eps: f64,
    pub target_eps: f64,
    pub estimated: f64,
    pub actual: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub rows: Vec<EstimateRow>,
    /// `estimates[m][r][t]`: per-repeat extrapolations before averaging.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `measured[m][r]`: utility of the model trained at the measuring point.
    pub measured: Vec<Vec<f64>>,
}

impl EstimateTable {
    pub fn rows_for(&self, measure_eps: f64) -> impl Iterator<Item = &EstimateRow> {
        self.rows.iter().filter(move |r| r.measure_eps == measure_eps)
    }
}

/// For every measuring point and target: extrapolate from one training per
/// repeat, train at the target with an independent draw, and average both
/// over repeats.
pub fn estimate_vs_actual(
    setup: &Setup,
    measures: &[f64],
    targets: &[f64],
    repeats: usize,
    base_seed: u64,
) -> Result<EstimateTable> {
    check_grid("measuring", measures, false)?;
    check_grid("target", targets, true)?;
    check_repeats(repeats)?;
    let lines = lines(setup, measures, repeats, base_seed)?;
    let actual = actual_curve(setup, targets, repeats, base_seed)?;
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for (m, per_repeat) in measures.iter().zip(&lines) {
        let est: Vec<Vec<f64>> = per_repeat
            .iter()
            .map(|line| targets.iter().map(|&t| extrapolate(line, t)).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<_, _>>()?;
        for (t_idx, &target) in targets.iter().enumerate() {
            let column: Vec<f64> = est.iter().map(|row| row[t_idx]).collect();
            let estimated = mean(&column);
            rows.push(EstimateRow {
                measure_eps: *m,
                target_eps: target,
                estimated,
                actual: actual[t_idx],
                abs_diff: (estimated - actual[t_idx]).abs(),
            });
        }
        estimates.push(est);
    }
    let measured = lines
        .iter()
        .map(|ls| ls.iter().map(|l| l.base_utility).collect())
        .collect();
    Ok(EstimateTable {
        rows,
        estimates,
        measured,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub measure_eps: f64,
    pub avg_error: f64,
    pub max_error: f64,
}

/// Uses each grid point in turn as the measuring point to estimate every
/// other grid point; reports the mean absolute error per measuring point.
pub fn measuring_sweep(setup: &Setup, grid: &[f64], repeats: usize, base_seed: u64) -> Result<Vec<SweepRow>> {
    check_grid("measuring", grid, true)?;
    if grid.len() < 2 {
        return Err(HarnessError::Usage("measuring sweep needs at least two grid points".into()));
    }
    check_repeats(repeats)?;
    let lines = lines(setup, grid, repeats, base_seed)?;
    let actual = actual_curve(setup, grid, repeats, base_seed)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (m_idx, per_repeat) in lines.iter().enumerate() {
        let mut errors = Vec::with_capacity(grid.len() - 1);
        for (t_idx, &target) in grid.iter().enumerate() {
            if t_idx == m_idx {
                continue;
            }
            let est: Vec<f64> = per_repeat
                .iter()
                .map(|l| extrapolate(l, target))
                .collect::<std::result::Result<_, _>>()?;
            errors.push((mean(&est) - actual[t_idx]).abs());
        }
        rows.push(SweepRow {
            measure_eps: grid[m_idx],
            avg_error: mean(&errors),
            max_error: errors.iter().copied().fold(0.0, f64::max),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub n: usize,
    pub measure_eps: f64,
    pub mean_error: f64,
    /// Error at the target closest to the measuring point.
    pub nearest_error: f64,
    /// Error at the target farthest from the measuring point.
    pub farthest_error: f64,
}

/// Estimate-vs-actual on nested prefixes of one seeded shuffle of the data.
pub fn sample_sweep(
    setup: &Setup,
    sizes: &[usize],
    measure_eps: f64,
    targets: &[f64],
    repeats: usize,
    base_seed: u64,
    subsample_seed: u64,
) -> Result<Vec<SampleRow>> {
    if sizes.is_empty() {
        return Err(HarnessError::Usage("sample-count grid is empty".into()));
    }
    let (nearest, farthest) = extreme_targets(measure_eps, targets)?;
    sizes
        .iter()
        .map(|&n| {
            let sub = Setup {
                data: subsample(&setup.data, n, subsample_seed)?,
                ..setup.clone()
            };
            let table = estimate_vs_actual(&sub, &[measure_eps], targets, repeats, base_seed)?;
            let errors: Vec<f64> = table.rows.iter().map(|r| r.abs_diff).collect();
            Ok(SampleRow {
                n,
                measure_eps,
                mean_error: mean(&errors),
                nearest_error: errors[nearest],
                farthest_error: errors[farthest],
            })
        })
        .collect()
}

/// Indices of the targets nearest to and farthest from `measure_eps`.
pub fn extreme_targets(measure_eps: f64, targets: &[f64]) -> Result<(usize, usize)> {
    check_grid("target", targets, true)?;
    let dist = |i: &usize| (targets[*i] - measure_eps).abs();
    let nearest = (0..targets.len()).min_by(|a, b| dist(a).total_cmp(&dist(b))).expect("non-empty");
    let farthest = (0..targets.len()).max_by(|a, b| dist(a).total_cmp(&dist(b))).expect("non-empty");
    Ok((nearest, farthest))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub measure_eps: f64,
    pub seed: u64,
    pub step: f64,
    pub analytic_slope: f64,
    pub fd_slope: f64,
    pub fd_slope_half_step: f64,
    pub dtheta_rel_error: f64,
    pub slope_rel_error: f64,
    /// Max over coordinates of |fd(h/2) - fd(h)| / |fd(h) - analytic|;
    /// below 1 when the difference quotient converges towards the analytic
    /// value.
    pub richardson_ratio: f64,
}

/// Finite-difference quotients of the minimizer and utility in epsilon,
/// retraining at `eps +- h` with the same base draw.
pub fn finite_difference(setup: &Setup, noise: &NoiseDraw, eps: f64, h: f64) -> Result<(Vec<f64>, f64)> {
    let at = |e: f64| -> Result<PrivateModel> {
        Ok(train(&setup.data, &setup.spec, &setup.train, setup.budget(e)?, noise)?)
    };
    let (hi, lo) = (at(eps + h)?, at(eps - h)?);
    let dtheta = hi
        .theta
        .iter()
        .zip(&lo.theta)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    let f_hi = utility(&hi.theta, &setup.data, &setup.spec)?;
    let f_lo = utility(&lo.theta, &setup.data, &setup.spec)?;
    Ok((dtheta, (f_hi - f_lo) / (2.0 * h)))
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

/// Analytic derivative and slope against central differences of exact
/// retraining, at relative step `rel_step * eps` and half of it.
pub fn oracle_compare(setup: &Setup, measures: &[f64], seeds: &[u64], rel_step: f64) -> Result<Vec<OracleRow>> {
    if setup.train.solver_mode != SolverMode::Exact {
        return Err(HarnessError::Usage("oracle comparison requires the exact solver".into()));
    }
    check_grid("measuring", measures, false)?;
    let jobs: Vec<(f64, u64)> = measures
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(eps, seed)| {
            let noise = NoiseDraw::from_seed(seed, setup.data.p());
            oracle_row(setup, &noise, eps, seed, rel_step * eps)
        })
        .collect()
}

/// One oracle comparison with an explicit draw.
pub fn oracle_row(setup: &Setup, noise: &NoiseDraw, eps: f64, seed: u64, h: f64) -> Result<OracleRow> {
    let model = train(&setup.data, &setup.spec, &setup.train, setup.budget(eps)?, noise)?;
    let pert = eps_planner::perturbation::materialize(
        noise,
        setup.spec.zeta(),
        setup.delta,
        eps,
        setup.spec.lambda_hess(),
    )?;
    let mut report = dtheta_deps(&model, &setup.data, &setup.spec, &pert, SolveOptions::default())?;
    let slope = utility_slope(&model, &setup.data, &setup.spec, &mut report)?;
    let (fd, fd_slope) = finite_difference(setup, noise, eps, h)?;
    let (fd_half, fd_slope_half) = finite_difference(setup, noise, eps, h / 2.0)?;
    let richardson_ratio = fd
        .iter()
        .zip(&fd_half)
        .zip(&report.dtheta_deps)
        .map(|((f, fh), an)| {
            let gap = (f - an).abs();
            if gap == 0.0 {
                if fh == f { 0.0 } else { f64::INFINITY }
            } else {
                (fh - f).abs() / gap
            }
        })
        .fold(0.0, f64::max);
    Ok(OracleRow {
        measure_eps: eps,
        seed,
        step: h,
        analytic_slope: slope,
        fd_slope,
        fd_slope_half_step: fd_slope_half,
        dtheta_rel_error: rel_error(&report.dtheta_deps, &fd),
        slope_rel_error: ((slope - fd_slope) / fd_slope).abs(),
        richardson_ratio,
    })
}
