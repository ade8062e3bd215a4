//! Flat `key = value` configuration files and epsilon grid parsing.

use std::path::Path;

use crate::error::{HarnessError, Result};

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
/// Keys may use `-` or `_` and an optional leading `--`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
            line: i + 1,
            message: format!("expected key = value, found `{line}`"),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(HarnessError::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    parse_config(&text)
}

/// A comma list (`0.1,0.25,0.75`) or an inclusive range `start:stop:step`.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let s = s.trim();
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("range `{s}` must be start:stop:step"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}` in `{s}`"));
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(format!("range `{s}` needs step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // index-based so grid points do not accumulate rounding
        (0..count).map(|k| round_grid(start + k as f64 * step)).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}` in `{s}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(format!("grid value {bad} must be positive"));
    }
    Ok(values)
}

/// Snaps `0.30000000000000004`-style values to 12 decimals.
fn round_grid(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// The default target grids: 0.05..1.0 step 0.05 and 1..10 step 0.5.
pub fn default_low_targets() -> Vec<f64> {
    parse_grid("0.05:1.0:0.05").expect("static grid")
}

pub fn default_high_targets() -> Vec<f64> {
    parse_grid("1:10:0.5").expect("static grid")
}

pub const DEFAULT_LOW_MEASURES: [f64; 3] = [0.1, 0.25, 0.75];
pub const DEFAULT_HIGH_MEASURES: [f64; 3] = [1.0, 2.5, 7.5];
