//! Dataset ingestion (CSV and svmlight-style sparse text) and seeded
//! synthetic data.

use std::fs;
use std::path::Path;

use eps_planner::model::standard_normals;
use eps_planner::{Dataset, Example};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    SparseText,
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "sparse_text" | "sparse" | "svmlight" | "libsvm" => Ok(Self::SparseText),
            other => Err(format!("unknown data format `{other}`")),
        }
    }
}

/// Name of the CSV column holding labels.
pub const LABEL_COLUMN: &str = "label";

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    match format {
        DataFormat::Csv => parse_csv(&text, LABEL_COLUMN),
        DataFormat::SparseText => parse_sparse(&text, None),
    }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    match token.trim() {
        "1" | "+1" | "1.0" | "+1.0" => Ok(1.0),
        "-1" | "-1.0" | "0" | "0.0" => Ok(-1.0),
        other => Err(HarnessError::Parse {
            line,
            message: format!("unknown label symbol `{other}`"),
        }),
    }
}

/// CSV with a header row; the column named `label_column` holds labels and
/// every other column is a feature.
pub fn parse_csv(text: &str, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| HarnessError::Parse {
            line: 1,
            message: format!("missing `{label_column}` column"),
        })?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(record.len().saturating_sub(1));
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                labels.push(parse_label(field, line)?);
            } else {
                row.push(field.parse::<f64>().map_err(|_| HarnessError::Parse {
                    line,
                    message: format!("bad number `{field}`"),
                })?);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Data("empty file".into()));
    }
    Ok(Dataset::from_raw(rows, &labels)?)
}

/// `label index:value ...` per line with 1-based indices. Blank lines and
/// `#` comments are skipped. With `p = None` the dimension is the largest
/// index seen.
pub fn parse_sparse(text: &str, p: Option<usize>) -> Result<Dataset> {
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        labels.push(parse_label(label, line)?);
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| HarnessError::Parse {
                line,
                message: format!("expected index:value, found `{tok}`"),
            })?;
            let idx: usize = idx.parse().ok().filter(|&i| i >= 1).ok_or_else(|| HarnessError::Parse {
                line,
                message: format!("bad feature index `{idx}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| HarnessError::Parse {
                line,
                message: format!("bad number `{val}`"),
            })?;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(HarnessError::Data("empty file".into()));
    }
    let p = p.unwrap_or(max_index).max(1);
    if max_index > p {
        return Err(HarnessError::Data(format!("feature index {max_index} exceeds p = {p}")));
    }
    let rows = entries
        .into_iter()
        .map(|sparse| {
            let mut dense = vec![0.0; p];
            for (j, v) in sparse {
                dense[j] = v;
            }
            dense
        })
        .collect();
    Ok(Dataset::from_raw(rows, &labels)?)
}

/// Two unit-variance Gaussian clusters centred at `+-separation * w/|w|` for
/// a seeded random direction `w`. Labels alternate starting with `+1`; each
/// row with norm above 1 is scaled back onto the unit sphere.
pub fn gen_synthetic(n: usize, p: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || p < 1 {
        return Err(HarnessError::Usage(format!("synthetic data needs n >= 2 and p >= 1 (got n={n}, p={p})")));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(HarnessError::Usage(format!("invalid separation {separation}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = standard_normals(&mut rng, p);
    let w_norm = eps_planner::linalg::norm(&w);
    let examples = (0..n)
        .map(|i| {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let noise = standard_normals(&mut rng, p);
            let mut row: Vec<f64> = noise
                .iter()
                .zip(&w)
                .map(|(z, wj)| z + f64::from(y) * separation * wj / w_norm)
                .collect();
            let norm = eps_planner::linalg::norm(&row);
            if norm > 1.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            Example::new(row, y)
        })
        .collect();
    Ok(Dataset::new(examples)?)
}

/// A seeded permutation of `0..n`. Prefixes of it give nested subsamples.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    idx
}

/// First `m` examples of the seeded shuffle of `d`.
pub fn subsample(d: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || m > d.n() {
        return Err(HarnessError::Usage(format!("subsample size {m} outside 1..={}", d.n())));
    }
    Ok(d.select(&permutation(d.n(), seed)[..m])?)
}

/// Writes `d` in the sparse text format, zeros omitted.
pub fn to_sparse_text(d: &Dataset) -> String {
    let mut out = String::new();
    for ex in d.examples() {
        out.push_str(if ex.label > 0 { "+1" } else { "-1" });
        for (j, v) in ex.features.iter().enumerate() {
            if *v != 0.0 {
                out.push_str(&format!(" {}:{v:?}", j + 1));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `d` as CSV with columns `x1..xp,label`.
pub fn to_csv(d: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=d.p()).map(|j| format!("x{j}")).collect();
    header.push(LABEL_COLUMN.to_string());
    w.write_record(&header).expect("in-memory write");
    for ex in d.examples() {
        let mut rec: Vec<String> = ex.features.iter().map(|v| format!("{v:?}")).collect();
        rec.push(ex.label.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
