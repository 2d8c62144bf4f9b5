//! Occupation cost of a one-dimensional diffusion on the periodic interval
//! `[0, 2 pi)`, discretized as a nearest-neighbour jump generator.

use crate::error::{Error, Result};
use crate::jump::{DvOptions, DvSolution, GeneratorMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Central-difference discretization of `f -> a f''/2 + a' f'/2 + b f'` on
/// `N` periodic nodes `y_i = i h`, `h = 2 pi / N`.
///
/// `diffusion[i]` sits on the face between nodes `i` and `i + 1`, `drift[i]`
/// on node `i`. The operator is a Markov generator exactly when the cell
/// Peclet condition `|b_i| h <= min(a_{i-1/2}, a_{i+1/2})` holds.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGridOperator {
    diffusion: Vec<f64>,
    drift: Vec<f64>,
}

impl TorusGridOperator {
    pub fn new(diffusion: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        let n = diffusion.len();
        if n < 3 || drift.len() != n {
            return Err(Error::Dimension(
                "torus grid needs at least 3 cells and matching coefficient arrays".into(),
            ));
        }
        if diffusion.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidModel("diffusion coefficients must be positive".into()));
        }
        let h = 2.0 * PI / n as f64;
        for i in 0..n {
            let amin = diffusion[i].min(diffusion[(i + n - 1) % n]);
            if drift[i].abs() * h > amin * (1.0 + 1e-12) {
                return Err(Error::NonMonotone(format!(
                    "cell {i}: |b| h = {:.3e} exceeds min a = {:.3e}",
                    drift[i].abs() * h,
                    amin
                )));
            }
        }
        Ok(Self { diffusion, drift })
    }

    pub fn cells(&self) -> usize {
        self.diffusion.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.cells() as f64
    }

    /// Rates to the right and left neighbour of each node.
    pub fn neighbour_rates(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.cells();
        let h = self.spacing();
        let up = (0..n)
            .map(|i| self.diffusion[i] / (2.0 * h * h) + self.drift[i] / (2.0 * h))
            .collect();
        let down = (0..n)
            .map(|i| self.diffusion[(i + n - 1) % n] / (2.0 * h * h) - self.drift[i] / (2.0 * h))
            .collect();
        (up, down)
    }

    pub fn rate_matrix(&self) -> DMatrix<f64> {
        let n = self.cells();
        let (up, down) = self.neighbour_rates();
        let mut r = DMatrix::zeros(n, n);
        for i in 0..n {
            r[(i, (i + 1) % n)] += up[i].max(0.0);
            r[(i, (i + n - 1) % n)] += down[i].max(0.0);
        }
        r
    }

    pub fn generator(&self) -> GeneratorMatrix {
        GeneratorMatrix::from_rates(&self.rate_matrix())
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.cells();
        let (up, down) = self.neighbour_rates();
        (0..n)
            .map(|i| up[i] * (f[(i + 1) % n] - f[i]) + down[i] * (f[(i + n - 1) % n] - f[i]))
            .collect()
    }
}

/// Smooth coefficient families for the torus cost, optionally coupled to an
/// outer state `x` through a phase shift `coupling * sum(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusField {
    pub cells: usize,
    pub diffusion: f64,
    #[serde(default)]
    pub diffusion_modulation: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub drift_modulation: f64,
    #[serde(default)]
    pub coupling: f64,
}

impl TorusField {
    pub fn operator(&self, x: &[f64]) -> Result<TorusGridOperator> {
        if self.diffusion_modulation.abs() >= 1.0 {
            return Err(Error::InvalidModel("diffusion modulation must lie in (-1, 1)".into()));
        }
        let n = self.cells;
        let h = 2.0 * PI / n as f64;
        let shift = self.coupling * x.iter().sum::<f64>();
        let a = (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) * h + shift;
                self.diffusion * (1.0 + self.diffusion_modulation * y.cos())
            })
            .collect();
        let b = (0..n)
            .map(|i| {
                let y = i as f64 * h + shift;
                self.drift + self.drift_modulation * y.sin()
            })
            .collect();
        TorusGridOperator::new(a, b)
    }
}

/// Dual objective `-sum_i theta_i (L e^w)_i / e^{w_i}`; invariant under
/// adding a constant to `w`.
pub fn torus_objective(op: &TorusGridOperator, theta: &[f64], w: &[f64]) -> f64 {
    let n = op.cells();
    let (up, down) = op.neighbour_rates();
    (0..n)
        .filter(|&c| theta[c] != 0.0)
        .map(|c| {
            let r = (c + 1) % n;
            let l = (c + n - 1) % n;
            -theta[c] * (up[c] * (w[r] - w[c]).exp_m1() + down[c] * (w[l] - w[c]).exp_m1())
        })
        .sum()
}

/// Occupation cost of the discretized diffusion, by damped Newton with a
/// cyclic tridiagonal (Sherman-Morrison) linear solve per step.
pub fn dv_cost_torus(op: &TorusGridOperator, theta: &[f64], opts: &DvOptions) -> DvSolution {
    let n = op.cells();
    assert_eq!(theta.len(), n, "occupation weights must match the torus grid");
    let (up, down) = op.neighbour_rates();
    let total: f64 = (0..n).map(|c| theta[c] * (up[c] + down[c])).sum();
    let gtol = opts.tol * (1.0 + total);
    let mut w = vec![0.0; n];
    let mut value = torus_objective(op, theta, &w);
    let mut unbounded = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let sys = NewtonBand::assemble(&up, &down, theta, &w, opts.regularization);
        let small_gradient = sys.grad.iter().fold(0.0f64, |s, g| s.max(g.abs())) <= gtol;
        let step = sys.solve(&sys.grad);
        let escaping = step.iter().fold(0.0f64, |s, v| s.max(v.abs())) > 1e-3;
        if small_gradient && !escaping {
            break;
        }
        let slope: f64 = sys.grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut trial = w.clone();
        let mut accepted = false;
        while t > 1e-12 {
            for k in 0..n {
                trial[k] = w[k] + t * step[k];
            }
            if torus_objective(op, theta, &trial) >= value + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            unbounded = escaping;
            break;
        }
        let gauge = trial[n - 1];
        for v in trial.iter_mut() {
            *v -= gauge;
        }
        let next = torus_objective(op, theta, &trial);
        let rising = next >= value;
        w = trial;
        value = next;
        if rising && w.iter().fold(0.0f64, |s, x| s.max(x.abs())) > opts.divergence_level {
            unbounded = true;
            break;
        }
    }

    let gradient: Vec<f64> = (0..n)
        .map(|c| {
            let r = (c + 1) % n;
            let l = (c + n - 1) % n;
            -up[c] * (w[r] - w[c]).exp_m1() - down[c] * (w[l] - w[c]).exp_m1()
        })
        .collect();
    let hessian = opts.want_hessian.then(|| {
        let sys = NewtonBand::assemble(&up, &down, theta, &w, opts.regularization);
        let mut g = DMatrix::<f64>::zeros(n, n);
        for c in 0..n {
            let r = (c + 1) % n;
            let l = (c + n - 1) % n;
            let er = up[c] * (w[r] - w[c]).exp();
            let el = down[c] * (w[l] - w[c]).exp();
            g[(c, r)] -= er;
            g[(c, l)] -= el;
            g[(c, c)] += er + el;
        }
        let mut x = DMatrix::<f64>::zeros(n, n);
        for c in 0..n {
            let col: Vec<f64> = g.row(c).iter().copied().collect();
            let s = sys.solve(&col);
            for k in 0..n {
                x[(k, c)] = s[k];
            }
        }
        &g * x
    });
    DvSolution {
        value,
        potential: w,
        gradient,
        hessian,
        possibly_unbounded: unbounded,
        iterations,
    }
}

/// Negated dual Hessian: symmetric cyclic tridiagonal with diagonal `diag`
/// and coupling `-off[k]` between nodes `k` and `k + 1`.
struct NewtonBand {
    diag: Vec<f64>,
    off: Vec<f64>,
    grad: Vec<f64>,
}

impl NewtonBand {
    fn assemble(up: &[f64], down: &[f64], theta: &[f64], w: &[f64], delta: f64) -> Self {
        let n = w.len();
        let right: Vec<f64> = (0..n)
            .map(|c| theta[c] * up[c] * (w[(c + 1) % n] - w[c]).exp())
            .collect();
        let left: Vec<f64> = (0..n)
            .map(|c| theta[c] * down[c] * (w[(c + n - 1) % n] - w[c]).exp())
            .collect();
        let mut diag = vec![0.0; n];
        let mut grad = vec![0.0; n];
        for k in 0..n {
            let out = right[k] + left[k];
            let inn = right[(k + n - 1) % n] + left[(k + 1) % n];
            diag[k] = out + inn;
            grad[k] = out - inn;
        }
        let scale = diag.iter().fold(f64::MIN_POSITIVE, |m, d| m.max(*d));
        for d in diag.iter_mut() {
            *d += delta * scale;
        }
        let off = (0..n).map(|k| right[k] + left[(k + 1) % n]).collect();
        Self { diag, off, grad }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let sub: Vec<f64> = (0..n).map(|k| -self.off[(k + n - 1) % n]).collect();
        let sup: Vec<f64> = (0..n).map(|k| -self.off[k]).collect();
        cyclic_tridiagonal(&sub, &self.diag, &sup, rhs)
    }
}

/// Solves a cyclic tridiagonal system. `sub[0]` couples row 0 to the last
/// column and `sup[n-1]` couples the last row to column 0.
fn cyclic_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = tridiagonal(sub, &bb, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = tridiagonal(sub, &bb, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::{dv_cost, stationary_control};

    fn smooth_field(n: usize) -> TorusGridOperator {
        TorusField {
            cells: n,
            diffusion: 1.0,
            diffusion_modulation: 0.3,
            drift: 0.2,
            drift_modulation: 0.1,
            coupling: 0.0,
        }
        .operator(&[])
        .unwrap()
    }

    #[test]
    fn cyclic_solver_matches_dense_solve() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|k| -0.3 - 0.01 * k as f64).collect();
        let sup: Vec<f64> = (0..n).map(|k| -0.2 - 0.02 * k as f64).collect();
        let diag: Vec<f64> = (0..n).map(|k| 2.0 + 0.1 * k as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let x = cyclic_tridiagonal(&sub, &diag, &sup, &rhs);
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            a[(i, (i + 1) % n)] = sup[i];
            a[(i, (i + n - 1) % n)] = sub[i];
        }
        let y = a.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn generator_rows_sum_to_zero_with_nonnegative_rates() {
        let op = smooth_field(64);
        let g = op.generator();
        GeneratorMatrix::new(g.matrix().clone()).unwrap();
    }

    #[test]
    fn peclet_violation_is_reported() {
        let err = TorusGridOperator::new(vec![0.01; 8], vec![1.0; 8]).unwrap_err();
        assert!(matches!(err, Error::NonMonotone(_)));
    }

    #[test]
    fn torus_cost_equals_jump_cost_on_induced_rates() {
        let op = smooth_field(16);
        let theta: Vec<f64> = (0..16).map(|i| 1.0 + 0.5 * (i as f64).cos()).collect();
        let s: f64 = theta.iter().sum();
        let theta: Vec<f64> = theta.into_iter().map(|t| t / s).collect();
        let a = dv_cost_torus(&op, &theta, &DvOptions::default());
        let b = dv_cost(&op.rate_matrix(), &theta, &DvOptions::default());
        assert!((a.value - b.value).abs() < 1e-10, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn stationary_density_has_zero_cost() {
        let op = smooth_field(32);
        let pi = stationary_control(&op.generator()).unwrap();
        let sol = dv_cost_torus(&op, &pi, &DvOptions::default());
        assert!(sol.value.abs() < 1e-9);
    }

    #[test]
    fn dirac_mass_is_flagged_and_grows_with_refinement() {
        let coarse = smooth_field(32);
        let fine = smooth_field(64);
        let mut d32 = vec![0.0; 32];
        d32[5] = 1.0;
        let mut d64 = vec![0.0; 64];
        d64[10] = 1.0;
        let a = dv_cost_torus(&coarse, &d32, &DvOptions::default());
        let b = dv_cost_torus(&fine, &d64, &DvOptions::default());
        assert!(a.possibly_unbounded && b.possibly_unbounded);
        assert!(b.value > 3.5 * a.value);
    }

    #[test]
    fn objective_is_shift_invariant() {
        let op = smooth_field(12);
        let theta = vec![1.0 / 12.0; 12];
        let w: Vec<f64> = (0..12).map(|i| 0.3 * (i as f64).sin()).collect();
        let shifted: Vec<f64> = w.iter().map(|v| v + 2.5).collect();
        let a = torus_objective(&op, &theta, &w);
        let b = torus_objective(&op, &theta, &shifted);
        assert!((a - b).abs() < 1e-13);
    }
}
