//! Shared helpers for the criterion benchmarks: synthetic problem builders
//! with fixed seeds so timings compare like against like.

use glamer_core::design::DesignMatrix;
use glamer_core::glm::Family;
use glamer_core::simbench::{Balance, FactorSpec, NoiseKind, SyntheticSpec};
use ndarray::Array1;

/// A gaussian instance with `factors` 6-level factors plus two continuous
/// predictors; moderate signal and unit noise.
pub fn gaussian_instance(n: usize, factors: usize, seed: u64) -> (DesignMatrix, Array1<f64>) {
    let spec = SyntheticSpec {
        n,
        factors: (0..factors)
            .map(|k| FactorSpec {
                levels: 6,
                assignment: vec![0, 0, 1, 1, 2, 2],
                effects: vec![0.0, 1.5 + k as f64 * 0.1, 3.5],
            })
            .collect(),
        continuous: vec![0.8, -0.6],
        family: Family::Gaussian,
        sigma: 1.0,
        balance: Balance::Balanced,
        noise: NoiseKind::Gaussian,
        seed,
    };
    let (design, y, _) = glamer_core::simbench::generate(&spec).expect("valid spec");
    (design, y)
}
