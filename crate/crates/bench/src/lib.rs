//! Seeded instance generators shared by the benchmarks.

use nalgebra::DMatrix;
use otlimit_core::rng::substream;
use otlimit_core::{CostMatrix, DiscreteMeasure, EmpiricalLaw1D, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    substream(seed, 0)
}

/// `n` atoms uniform in the unit square with weights in `[0.5, 1.5]`, normalized.
pub fn random_measure(n: usize, seed: u64) -> DiscreteMeasure {
    let mut r = rng(seed);
    let pts = (0..n)
        .map(|_| Point::new(vec![r.random::<f64>(), r.random::<f64>()]))
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    DiscreteMeasure::new(pts, w).expect("valid weights")
}

/// A square instance with squared Euclidean cost.
pub fn transport_instance(n: usize, seed: u64) -> (DiscreteMeasure, DiscreteMeasure, CostMatrix) {
    let mu = random_measure(n, seed);
    let nu = random_measure(n, seed.wrapping_add(1));
    let c = CostMatrix::squared_euclidean(&mu, &nu).expect("finite cost");
    (mu, nu, c)
}

/// An `n x m` cost with many ties, the hard case for degenerate pivots.
pub fn integer_cost(n: usize, m: usize, seed: u64) -> CostMatrix {
    let mut r = rng(seed);
    CostMatrix::new(DMatrix::from_fn(n, m, |_, _| r.random_range(0..4) as f64)).expect("finite cost")
}

/// Two Gaussian-ish samples of size `n` with a location shift.
pub fn scalar_laws(n: usize, seed: u64) -> (EmpiricalLaw1D, EmpiricalLaw1D) {
    let mut r = rng(seed);
    let mut draw = |shift: f64| {
        (0..n)
            .map(|_| (0..4).map(|_| r.random::<f64>()).sum::<f64>() - 2.0 + shift)
            .collect::<Vec<f64>>()
    };
    let (a, b) = (draw(0.0), draw(0.1));
    (EmpiricalLaw1D::new(a).expect("finite"), EmpiricalLaw1D::new(b).expect("finite"))
}
