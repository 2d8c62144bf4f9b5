//! Shared fixtures for the benchmarks under `benches/`.

use varhjb::grid::{GridFunction, SmoothField};
use varhjb::hamiltonian::HamiltonianModel;
use varhjb::jump::JumpRateField;
use varhjb::lattice::Lattice;
use varhjb::models::quadratic::{make_quadratic_model, QuadraticSpec};

/// A ring of `j` jump states with unit rates forward and half rates back,
/// isotropic diffusion of strength `0.5 + k / j` in state `k`.
pub fn ring_quadratic(dim: usize, j: usize) -> HamiltonianModel {
    let scales: Vec<f64> = (0..j).map(|k| 0.5 + k as f64 / j as f64).collect();
    let mut rates = vec![vec![0.0; j]; j];
    for k in 0..j {
        rates[k][(k + 1) % j] += 1.0;
        rates[(k + 1) % j][k] += 0.5;
    }
    let field = JumpRateField::constant(rates).expect("valid ring rates");
    make_quadratic_model(&QuadraticSpec::isotropic(dim, &scales), Some(field)).expect("valid ring model")
}

/// `J x J` rate matrix of the ring with a bump on the first row.
pub fn ring_rates(j: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(j, j, |a, b| {
        if b == (a + 1) % j {
            1.0 + if a == 0 { 0.5 } else { 0.0 }
        } else if a == (b + 1) % j {
            0.5
        } else {
            0.0
        }
    })
}

pub fn bump_rhs(model: &HamiltonianModel, nodes: usize) -> GridFunction {
    let (lo, hi) = &model.verification_box;
    let lattice = Lattice::uniform(lo, hi, &vec![nodes; model.dim()]).expect("valid lattice");
    GridFunction::sample(
        lattice,
        &SmoothField::new(model.dim(), |x| 0.5 * (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
    )
}
