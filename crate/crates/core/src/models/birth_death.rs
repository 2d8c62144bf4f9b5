//! Scalar exponential Hamiltonians of birth-death type.

use crate::containment::{Containment, ContainmentKind};
use crate::cost::ZeroCost;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianModel, InternalHamiltonian};
use std::sync::Arc;

/// `Lambda(x, p) = x (exp(-p) - 1)` on `[0, inf)`; with `mirrored` the sign
/// of `p` is flipped.
#[derive(Clone, Copy, Debug)]
pub struct OneSidedLambda {
    pub mirrored: bool,
}

impl OneSidedLambda {
    fn sign(&self) -> f64 {
        if self.mirrored {
            1.0
        } else {
            -1.0
        }
    }

    pub fn value(&self, x: f64, p: f64) -> f64 {
        x * (self.sign() * p).exp_m1()
    }
}

impl InternalHamiltonian for OneSidedLambda {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], p: &[f64], _theta: &[f64]) -> f64 {
        self.value(x[0], p[0])
    }
    fn grad_control(&self, x: &[f64], p: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![self.value(x[0], p[0])]
    }
    fn grad_momentum(&self, x: &[f64], p: &[f64], _theta: &[f64]) -> Vec<f64> {
        let s = self.sign();
        vec![s * x[0] * (s * p[0]).exp()]
    }
    fn affine_in_control(&self) -> bool {
        true
    }
}

/// `Lambda(x, p, theta) = (1 - x) c_up(theta) (exp(p) - 1) + (1 + x) c_down(theta) (exp(-p) - 1)`
/// on `[-1, 1]`, with `c(theta)` linear in `theta`.
#[derive(Clone, Debug)]
pub struct TwoSidedLambda {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl TwoSidedLambda {
    fn rates(&self, theta: &[f64]) -> (f64, f64) {
        let u = self.up.iter().zip(theta).map(|(c, t)| c * t).sum();
        let d = self.down.iter().zip(theta).map(|(c, t)| c * t).sum();
        (u, d)
    }
}

impl InternalHamiltonian for TwoSidedLambda {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        self.up.len()
    }
    fn eval(&self, x: &[f64], p: &[f64], theta: &[f64]) -> f64 {
        let (u, d) = self.rates(theta);
        (1.0 - x[0]) * u * p[0].exp_m1() + (1.0 + x[0]) * d * (-p[0]).exp_m1()
    }
    fn grad_control(&self, x: &[f64], p: &[f64], _theta: &[f64]) -> Vec<f64> {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| (1.0 - x[0]) * u * p[0].exp_m1() + (1.0 + x[0]) * d * (-p[0]).exp_m1())
            .collect()
    }
    fn grad_momentum(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let (u, d) = self.rates(theta);
        vec![(1.0 - x[0]) * u * p[0].exp() - (1.0 + x[0]) * d * (-p[0]).exp()]
    }
    fn affine_in_control(&self) -> bool {
        true
    }
}

/// One-sided model on `[0, inf)` with containment `log(1 + x)`.
///
/// For the original sign `Lambda(x, 1/(1+x)) <= 0`. For the mirrored sign
/// `x (exp(1/(1+x)) - 1) < 1` for every `x >= 0`.
pub fn make_one_sided_model(mirrored: bool, box_upper: f64) -> Result<HamiltonianModel> {
    if !(box_upper > 0.0) {
        return Err(Error::InvalidModel("verification box must have positive length".into()));
    }
    let bound = if mirrored { 1.0 } else { 0.0 };
    HamiltonianModel::new(
        if mirrored { "birth-death-1s-mirrored" } else { "birth-death-1s" },
        Arc::new(OneSidedLambda { mirrored }),
        Arc::new(ZeroCost { controls: 1 }),
        Domain::Interval {
            lower: 0.0,
            upper: f64::INFINITY,
        },
        Containment::new(ContainmentKind::LogShift { origin: 0.0 }, bound),
        (vec![0.0], vec![box_upper]),
    )
}

/// Two-sided model on `[-1, 1]`; the domain is compact so the zero
/// containment function suffices.
pub fn make_two_sided_model(up: Vec<f64>, down: Vec<f64>) -> Result<HamiltonianModel> {
    if up.is_empty() || up.len() != down.len() || up.iter().chain(&down).any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidModel("two-sided rates must be nonnegative and of equal length".into()));
    }
    let j = up.len();
    HamiltonianModel::new(
        "birth-death-2s",
        Arc::new(TwoSidedLambda { up, down }),
        Arc::new(ZeroCost { controls: j }),
        Domain::Interval { lower: -1.0, upper: 1.0 },
        Containment::new(ContainmentKind::Zero, 0.0),
        (vec![-1.0], vec![1.0]),
    )
}

/// Both birth-death models with unit rates.
pub fn make_birth_death_models() -> Result<(HamiltonianModel, HamiltonianModel)> {
    Ok((make_one_sided_model(false, 5.0)?, make_two_sided_model(vec![1.0], vec![1.0])?))
}
