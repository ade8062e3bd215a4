#![allow(dead_code)]

use eps_planner::model::standard_normals;
use eps_planner::{Dataset, Example, LossKind, LossSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Two Gaussian clusters at `+-sep` along the first axis, rows projected
/// into the unit ball, labels alternating.
pub fn clusters(n: usize, p: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let mut x = standard_normals(&mut rng, p);
            x[0] += f64::from(y) * sep;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                x.iter_mut().for_each(|v| *v /= norm);
            }
            Example::new(x, y)
        })
        .collect();
    Dataset::new(examples).unwrap()
}

pub fn tight(kind: LossKind, p: usize) -> LossSpec {
    LossSpec::with_default_bounds(kind, p, eps_planner::BoundMode::Tight).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
