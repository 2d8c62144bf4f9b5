//! Diffusion coupled to a finite-state jump process:
//! `Lambda(x, p, theta) = sum_i theta_i [<a(x,i) p, p> + <b(x,i), p>]`.

use crate::containment::{Containment, ContainmentKind};
use crate::cost::{ControlCost, JumpDvCost, ZeroCost};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianModel, InternalHamiltonian};
use crate::jump::{principal_eigenvalue, JumpRateField, RateFamily};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Coefficients for one jump state: `a(x) = matrix * (1 + modulation * sin(<wavevector, x>))`
/// and `b(x) = offset + slope * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticState {
    /// Row-major symmetric positive definite `d x d` matrix.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub modulation: f64,
    #[serde(default)]
    pub wavevector: Vec<f64>,
    pub offset: Vec<f64>,
    /// Row-major `d x d`; empty means zero.
    #[serde(default)]
    pub slope: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub states: Vec<QuadraticState>,
    /// Half-width of the verification box `[-r, r]^d`.
    #[serde(default = "default_box")]
    pub box_radius: f64,
}

fn default_box() -> f64 {
    5.0
}

impl QuadraticSpec {
    /// `a = scale * I`, `b = 0` for every state.
    pub fn isotropic(dim: usize, scales: &[f64]) -> Self {
        Self {
            dim,
            states: scales
                .iter()
                .map(|s| QuadraticState {
                    matrix: (0..dim)
                        .map(|i| (0..dim).map(|j| if i == j { *s } else { 0.0 }).collect())
                        .collect(),
                    modulation: 0.0,
                    wavevector: vec![0.0; dim],
                    offset: vec![0.0; dim],
                    slope: Vec::new(),
                })
                .collect(),
            box_radius: default_box(),
        }
    }
}

#[derive(Clone, Debug)]
struct Coefficients {
    matrix: DMatrix<f64>,
    modulation: f64,
    wavevector: Vec<f64>,
    offset: Vec<f64>,
    slope: DMatrix<f64>,
}

/// The internal Hamiltonian of the quadratic family.
#[derive(Clone, Debug)]
pub struct QuadraticLambda {
    dim: usize,
    coeffs: Vec<Coefficients>,
}

impl QuadraticLambda {
    pub fn new(spec: &QuadraticSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 || spec.states.is_empty() {
            return Err(Error::InvalidModel("quadratic model needs d >= 1 and J >= 1".into()));
        }
        let mut coeffs = Vec::new();
        for (i, s) in spec.states.iter().enumerate() {
            let matrix = square(&s.matrix, d, &format!("matrix of state {i}"))?;
            let slope = if s.slope.is_empty() {
                DMatrix::zeros(d, d)
            } else {
                square(&s.slope, d, &format!("slope of state {i}"))?
            };
            if (&matrix - matrix.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidModel(format!("diffusion matrix of state {i} is not symmetric")));
            }
            let wavevector = if s.wavevector.is_empty() { vec![0.0; d] } else { s.wavevector.clone() };
            if s.offset.len() != d || wavevector.len() != d {
                return Err(Error::Dimension(format!("state {i}: offset and wavevector need length {d}")));
            }
            if !(s.modulation.abs() < 1.0) {
                return Err(Error::InvalidModel(format!(
                    "state {i}: modulation {} would break ellipticity",
                    s.modulation
                )));
            }
            coeffs.push(Coefficients {
                matrix,
                modulation: s.modulation,
                wavevector,
                offset: s.offset.clone(),
                slope,
            });
        }
        let this = Self { dim: d, coeffs };
        let (a_min, _) = this.ellipticity();
        if !(a_min > 0.0) {
            return Err(Error::InvalidModel(format!(
                "ellipticity fails: smallest eigenvalue bound {a_min} on the verification box"
            )));
        }
        Ok(this)
    }

    /// Lower and upper bounds on the eigenvalues of `a(x, i)` over all `x`, `i`.
    pub fn ellipticity(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for c in &self.coeffs {
            let eig = c.matrix.clone().symmetric_eigen().eigenvalues;
            let emin = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let emax = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo = lo.min(emin * (1.0 - c.modulation.abs()));
            hi = hi.max(emax * (1.0 + c.modulation.abs()));
        }
        (lo, hi)
    }

    fn amplitude(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.coeffs[i];
        let phase: f64 = c.wavevector.iter().zip(x).map(|(k, v)| k * v).sum();
        1.0 + c.modulation * phase.sin()
    }

    fn drift(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let c = &self.coeffs[i];
        (0..self.dim)
            .map(|r| c.offset[r] + (0..self.dim).map(|k| c.slope[(r, k)] * x[k]).sum::<f64>())
            .collect()
    }

    /// `<a(x,i) p, p> + <b(x,i), p>` for every jump state `i`.
    pub fn potential(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.coeffs.len())
            .map(|i| {
                let m = &self.coeffs[i].matrix;
                let mut quad = 0.0;
                for r in 0..self.dim {
                    for k in 0..self.dim {
                        quad += p[r] * m[(r, k)] * p[k];
                    }
                }
                let b = self.drift(i, x);
                self.amplitude(i, x) * quad + b.iter().zip(p).map(|(u, v)| u * v).sum::<f64>()
            })
            .collect()
    }

    /// Certified `sup_{x, theta} Lambda(x, grad U(x), theta)` for
    /// `U(x) = log(1 + |x|^2) / 2`.
    ///
    /// With `r = |x|`, the quadratic part is at most `a_max r^2 / (1 + r^2)^2 <= a_max / 4`
    /// and the drift part at most `(|c| + |B| r) r / (1 + r^2) <= |c| / 2 + |B|`.
    pub fn containment_bound(&self) -> f64 {
        let (_, a_max) = self.ellipticity();
        let c_max = self
            .coeffs
            .iter()
            .map(|c| c.offset.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let b_max = self
            .coeffs
            .iter()
            .map(|c| c.slope.clone().svd(false, false).singular_values.max())
            .fold(0.0, f64::max);
        a_max / 4.0 + c_max / 2.0 + b_max
    }
}

fn square(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(format!("{what} must be {d} x {d}")));
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

impl InternalHamiltonian for QuadraticLambda {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, x: &[f64], p: &[f64], theta: &[f64]) -> f64 {
        self.potential(x, p).iter().zip(theta).map(|(v, t)| v * t).sum()
    }

    fn grad_control(&self, x: &[f64], p: &[f64], _theta: &[f64]) -> Vec<f64> {
        self.potential(x, p)
    }

    fn grad_momentum(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (i, t) in theta.iter().enumerate() {
            if *t == 0.0 {
                continue;
            }
            let amp = self.amplitude(i, x);
            let m = &self.coeffs[i].matrix;
            let b = self.drift(i, x);
            for r in 0..self.dim {
                let ap: f64 = (0..self.dim).map(|k| m[(r, k)] * p[k]).sum();
                g[r] += t * (2.0 * amp * ap + b[r]);
            }
        }
        g
    }

    fn affine_in_control(&self) -> bool {
        true
    }
}

/// Builds the quadratic model. With `rates = None` the model has a single
/// control and zero cost.
pub fn make_quadratic_model(spec: &QuadraticSpec, rates: Option<JumpRateField>) -> Result<HamiltonianModel> {
    let lambda = QuadraticLambda::new(spec)?;
    let j = lambda.control_dim();
    let cost: Arc<dyn ControlCost> = match rates {
        Some(r) => {
            if r.states() != j {
                return Err(Error::Dimension(format!(
                    "rate field has {} states but the coefficients describe {j}",
                    r.states()
                )));
            }
            Arc::new(JumpDvCost::new(r))
        }
        None if j == 1 => Arc::new(ZeroCost { controls: 1 }),
        None => {
            return Err(Error::InvalidModel(
                "several jump states need a rate field to define the cost".into(),
            ))
        }
    };
    let d = spec.dim;
    let bound = lambda.containment_bound();
    let r = spec.box_radius;
    HamiltonianModel::new(
        "quadratic-jump",
        Arc::new(lambda),
        cost,
        Domain::FullSpace { dim: d },
        Containment::new(ContainmentKind::LogQuadratic, bound),
        (vec![-r; d], vec![r; d]),
    )
}

/// Two jump states with different diffusion strengths, a sinusoidal
/// modulation and a mean-reverting drift in the first state.
pub fn default_quadratic_spec(dim: usize) -> QuadraticSpec {
    let diag = |s: f64| -> Vec<Vec<f64>> {
        (0..dim).map(|i| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect()).collect()
    };
    QuadraticSpec {
        dim,
        states: vec![
            QuadraticState {
                matrix: diag(0.5),
                modulation: 0.3,
                wavevector: vec![1.0; dim],
                offset: vec![0.2; dim],
                slope: diag(-0.1),
            },
            QuadraticState {
                matrix: diag(1.5),
                modulation: 0.0,
                wavevector: Vec::new(),
                offset: vec![-0.1; dim],
                slope: Vec::new(),
            },
        ],
        box_radius: default_box(),
    }
}

/// [`default_quadratic_spec`] with jump rates oscillating in the state.
pub fn default_quadratic_model(dim: usize) -> Result<HamiltonianModel> {
    let rates = JumpRateField::new(RateFamily::Sinusoidal {
        base: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        amplitude: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
        wavevector: vec![0.8; dim],
        phase: 0.0,
    })?;
    make_quadratic_model(&default_quadratic_spec(dim), Some(rates))
}

/// `H(x, p)` as the principal eigenvalue of `diag(potential) + R_x`.
pub fn quadratic_eigen_hamiltonian(
    lambda: &QuadraticLambda,
    rates: &JumpRateField,
    x: &[f64],
    p: &[f64],
) -> Result<f64> {
    let pot = lambda.potential(x, p);
    Ok(principal_eigenvalue(&rates.generator(x), &pot, 1e-13, 100_000)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{eval_hamiltonian, HamiltonianOptions};

    #[test]
    fn single_control_is_the_quadratic_form() {
        let m = make_quadratic_model(&QuadraticSpec::isotropic(2, &[1.0]), None).unwrap();
        let h = eval_hamiltonian(&m, &[0.3, -0.2], &[1.5, 2.0], &HamiltonianOptions::default()).unwrap();
        assert!((h.value - 6.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_lost_ellipticity() {
        let mut spec = QuadraticSpec::isotropic(1, &[1.0]);
        spec.states[0].matrix = vec![vec![-1.0]];
        assert!(make_quadratic_model(&spec, None).is_err());
        spec.states[0].matrix = vec![vec![1.0]];
        spec.states[0].modulation = 1.0;
        assert!(make_quadratic_model(&spec, None).is_err());
    }

    #[test]
    fn containment_bound_dominates_a_dense_scan() {
        let spec = QuadraticSpec {
            dim: 1,
            states: vec![QuadraticState {
                matrix: vec![vec![0.8]],
                modulation: 0.5,
                wavevector: vec![1.3],
                offset: vec![0.4],
                slope: vec![vec![-0.7]],
            }],
            box_radius: 5.0,
        };
        let lam = QuadraticLambda::new(&spec).unwrap();
        let c = lam.containment_bound();
        let u = Containment::new(ContainmentKind::LogQuadratic, c);
        for k in 0..=20_000 {
            let x = -100.0 + 0.01 * k as f64;
            let v = lam.eval(&[x], &u.gradient(&[x]), &[1.0]);
            assert!(v <= c, "x = {x}: {v} > {c}");
        }
    }
}
