//! Doubling of variables: maximizers of
//! `u(x)/(1-eps) - v(y)/(1+eps) - sum_k alpha_k Psi_k(x, y) - eps/(1-eps) U(x) - eps/(1+eps) U(y)`
//! and the comparison certificate built from them.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hamiltonian::{eval_hamiltonian, HamiltonianModel, HamiltonianOptions, SimplexControl};
use crate::lattice::Lattice;
use crate::optim::{compass_maximize, PatternOptions};
use crate::penalization::Penalization;
use crate::report::Status;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// Geometric alpha grid `4^k` from 1 to about `1e6`.
pub fn default_alphas() -> Vec<f64> {
    (0..=10).map(|k| 4f64.powi(k)).collect()
}

pub const DEFAULT_EPSILONS: [f64; 2] = [0.1, 0.01];

#[derive(Clone, Debug, Serialize)]
pub struct DoublingWitness {
    pub epsilon: f64,
    /// One weight per penalization component.
    pub alpha: Vec<f64>,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub phi_value: f64,
    /// Unweighted penalization values per component.
    pub psi_value: Vec<f64>,
    /// `sum_k alpha_k grad_x Psi_k`.
    pub p1: Vec<f64>,
    /// `-sum_k alpha_k grad_y Psi_k`.
    pub p2: Vec<f64>,
    /// Optimal control of `H(x_star, p1)`.
    pub theta_star: SimplexControl,
    /// Zero-cost control at `y_star`.
    pub theta_zero: SimplexControl,
    pub h_x: f64,
    pub h_y: f64,
    /// `Lambda(x, p1, theta_star) - Lambda(y, p2, theta_star)`.
    pub lambda_difference: f64,
    /// `Lambda(y, p2, theta_zero)`.
    pub lambda_y_zero: f64,
    /// `I(x_star, theta_star)`.
    pub cost_star: f64,
    /// Set when a witness sits on a face of the search box that is not a
    /// face of the domain.
    pub on_artificial_face: bool,
}

impl DoublingWitness {
    pub fn penalty(&self) -> f64 {
        self.alpha.iter().zip(&self.psi_value).map(|(a, p)| a * p).sum()
    }

    pub fn hamiltonian_difference(&self) -> f64 {
        self.h_x - self.h_y
    }
}

#[derive(Clone, Debug)]
pub struct DoublingOptions {
    /// Per-axis seed count of the `(midpoint, separation)` lattice in one
    /// dimension.
    pub lattice_seeds: usize,
    /// Seeds in more dimensions, sampled at random.
    pub random_seeds: usize,
    /// Local searches started from the best seeds.
    pub refine: usize,
    pub pattern: PatternOptions,
    pub seed: u64,
    pub hamiltonian: HamiltonianOptions,
}

impl Default for DoublingOptions {
    fn default() -> Self {
        Self {
            lattice_seeds: 65,
            random_seeds: 64,
            refine: 16,
            pattern: PatternOptions {
                initial_step: 0.05,
                min_step: 1e-12,
                max_evals: 20_000,
            },
            seed: 0x5eed,
            hamiltonian: HamiltonianOptions::default(),
        }
    }
}

pub struct DoublingProblem<'a> {
    pub model: &'a HamiltonianModel,
    pub u: &'a dyn ScalarField,
    pub v: &'a dyn ScalarField,
    pub penalties: Vec<Arc<dyn Penalization>>,
}

struct Cell<'a, 'b> {
    problem: &'b DoublingProblem<'a>,
    eps: f64,
    alpha: &'b [f64],
    lower: &'b [f64],
    upper: &'b [f64],
    /// Half-widths of the separation coordinates.
    reach: Vec<f64>,
}

impl Cell<'_, '_> {
    fn split(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.lower.len();
        let dom = &self.problem.model.domain;
        let (m, s) = z.split_at(d);
        let mut x: Vec<f64> = (0..d).map(|i| (m[i] + 0.5 * s[i]).clamp(self.lower[i], self.upper[i])).collect();
        let mut y: Vec<f64> = (0..d).map(|i| (m[i] - 0.5 * s[i]).clamp(self.lower[i], self.upper[i])).collect();
        x = dom.project(&x);
        y = dom.project(&y);
        (x, y)
    }

    fn phi_at(&self, x: &[f64], y: &[f64]) -> f64 {
        phi(self.problem, self.eps, self.alpha, x, y)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let (x, y) = self.split(z);
        self.phi_at(&x, &y)
    }

    fn box_lower(&self) -> Vec<f64> {
        self.lower.iter().copied().chain(self.reach.iter().map(|r| -r)).collect()
    }

    fn box_upper(&self) -> Vec<f64> {
        self.upper.iter().copied().chain(self.reach.iter().copied()).collect()
    }

    fn encode(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mid = (0..d).map(|i| 0.5 * (x[i] + y[i]));
        let sep = (0..d).map(|i| (x[i] - y[i]).clamp(-self.reach[i], self.reach[i]));
        mid.chain(sep).collect()
    }
}

/// The doubling functional.
pub fn phi(problem: &DoublingProblem<'_>, eps: f64, alpha: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let ups = &problem.model.containment;
    let pen: f64 = problem
        .penalties
        .iter()
        .zip(alpha)
        .map(|(p, a)| a * p.value(x, y))
        .sum();
    problem.u.value(x) / (1.0 - eps) - problem.v.value(y) / (1.0 + eps) - pen
        - eps / (1.0 - eps) * ups.value(x)
        - eps / (1.0 + eps) * ups.value(y)
}

fn sample_extremes(f: &dyn ScalarField, lat: &Lattice) -> (f64, f64) {
    lat.nodes().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        let v = f.value(x);
        (lo.min(v), hi.max(v))
    })
}

/// Maximizes the doubling functional for every `(eps, alpha)` cell.
/// Alphas are visited in the given order per epsilon, each warm-started
/// from the previous witness.
pub fn doubling_witnesses(
    problem: &DoublingProblem<'_>,
    epsilons: &[f64],
    alphas: &[Vec<f64>],
    opts: &DoublingOptions,
) -> Result<Vec<DoublingWitness>> {
    let model = problem.model;
    let d = model.dim();
    if problem.u.dim() != d || problem.v.dim() != d {
        return Err(Error::Dimension("candidate functions and model disagree on the dimension".into()));
    }
    if alphas.iter().any(|a| a.len() != problem.penalties.len() || a.iter().any(|v| !(*v > 0.0))) {
        return Err(Error::InvalidInput("each alpha needs one positive weight per penalization".into()));
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidInput("epsilon must lie in (0, 1)".into()));
    }
    let (lower, upper) = (&model.verification_box.0, &model.verification_box.1);
    let probe = Lattice::uniform(lower, upper, &vec![if d == 1 { 401 } else { 5 }; d])?;
    let (_, u_hi) = sample_extremes(problem.u, &probe);
    let (v_lo, _) = sample_extremes(problem.v, &probe);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(epsilons.len() * alphas.len());
    for &eps in epsilons {
        let mut warm: Option<(Vec<f64>, Vec<f64>)> = None;
        for alpha in alphas {
            // Phi(x*, y*) >= max_z Phi(z, z) bounds the penalty at the maximizer.
            let diag_best = probe
                .nodes()
                .iter()
                .map(|z| {
                    let z = model.domain.project(z);
                    phi(problem, eps, alpha, &z, &z)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let osc = (u_hi / (1.0 - eps) - v_lo / (1.0 + eps) - diag_best).max(0.0);
            let level = 1.25 * osc + 1e-9;
            let mut reach: Vec<f64> = (0..d).map(|i| upper[i] - lower[i]).collect();
            for (pen, a) in problem.penalties.iter().zip(alpha) {
                for (r, s) in reach.iter_mut().zip(pen.separation(level / a, d)) {
                    *r = r.min(s);
                }
            }
            let cell = Cell {
                problem,
                eps,
                alpha,
                lower,
                upper,
                reach,
            };
            let blo = cell.box_lower();
            let bhi = cell.box_upper();
            let mut seeds: Vec<Vec<f64>> = if d == 1 {
                let n = opts.lattice_seeds.max(2);
                let mut s = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let t = |k: usize, a: f64, b: f64| a + (b - a) * k as f64 / (n - 1) as f64;
                        s.push(vec![t(i, blo[0], bhi[0]), t(j, blo[1], bhi[1])]);
                    }
                }
                s
            } else {
                (0..opts.random_seeds)
                    .map(|_| (0..2 * d).map(|k| blo[k] + (bhi[k] - blo[k]) * rng.random::<f64>()).collect())
                    .collect()
            };
            // Diagonal seeds at the best points of u - v.
            for z in probe.nodes() {
                seeds.push(cell.encode(&z, &z));
            }
            let mut scored: Vec<(f64, Vec<f64>)> = seeds.into_iter().map(|z| (cell.objective(&z), z)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            scored.truncate(opts.refine);
            if let Some((x, y)) = &warm {
                scored.insert(0, (0.0, cell.encode(x, y)));
            }
            let mut best: Option<(f64, Vec<f64>)> = None;
            for (_, z0) in scored {
                let r = compass_maximize(|z| cell.objective(z), &blo, &bhi, &z0, &opts.pattern);
                if best.as_ref().is_none_or(|b| r.value > b.0) {
                    best = Some((r.value, r.x));
                }
            }
            let (_, z) = best.expect("at least one seed");
            let (x, y) = cell.split(&z);
            warm = Some((x.clone(), y.clone()));
            out.push(witness(problem, eps, alpha, x, y, &opts.hamiltonian)?);
        }
    }
    Ok(out)
}

fn witness(
    problem: &DoublingProblem<'_>,
    eps: f64,
    alpha: &[f64],
    x: Vec<f64>,
    y: Vec<f64>,
    hopts: &HamiltonianOptions,
) -> Result<DoublingWitness> {
    let model = problem.model;
    let d = x.len();
    let mut p1 = vec![0.0; d];
    let mut p2 = vec![0.0; d];
    let mut psi = Vec::with_capacity(alpha.len());
    for (pen, a) in problem.penalties.iter().zip(alpha) {
        psi.push(pen.value(&x, &y));
        for (i, g) in pen.grad_x(&x, &y).into_iter().enumerate() {
            p1[i] += a * g;
        }
        for (i, g) in pen.grad_y(&x, &y).into_iter().enumerate() {
            p2[i] -= a * g;
        }
    }
    let hx = eval_hamiltonian(model, &x, &p1, hopts)?;
    let hy = eval_hamiltonian(model, &y, &p2, hopts)?;
    let theta_star = hx.control.clone();
    let theta_zero = SimplexControl::new(model.cost.zero_cost_control(&y)?)?;
    let lam = |z: &[f64], p: &[f64], t: &SimplexControl| model.lambda.eval(z, p, t.as_slice());
    let (lower, upper) = &model.verification_box;
    let bounds = model.domain.axis_bounds();
    let artificial = |z: &[f64]| {
        (0..d).any(|i| {
            let tol = 1e-9 * (upper[i] - lower[i]);
            ((z[i] - lower[i]).abs() <= tol && bounds[i].0 < lower[i] - tol)
                || ((upper[i] - z[i]).abs() <= tol && bounds[i].1 > upper[i] + tol)
        })
    };
    Ok(DoublingWitness {
        epsilon: eps,
        alpha: alpha.to_vec(),
        phi_value: phi(problem, eps, alpha, &x, &y),
        psi_value: psi,
        lambda_difference: lam(&x, &p1, &theta_star) - lam(&y, &p2, &theta_star),
        lambda_y_zero: lam(&y, &p2, &theta_zero),
        cost_star: model.cost.value(&x, theta_star.as_slice()),
        h_x: hx.value,
        h_y: hy.value,
        on_artificial_face: artificial(&x) || artificial(&y),
        x_star: x,
        y_star: y,
        p1,
        p2,
        theta_star,
        theta_zero,
    })
}

/// Right-hand sides and resolvent parameter, when `u` and `v` solve
/// `f - lambda H f = h` for `h1` and `h2`.
pub struct SolutionContext<'a> {
    pub lambda: f64,
    pub h1: &'a dyn ScalarField,
    pub h2: &'a dyn ScalarField,
}

#[derive(Clone, Debug, Serialize)]
pub struct DoublingCertificate {
    pub witnesses: Vec<DoublingWitness>,
    pub verdict: Status,
    /// Worst over epsilon of the smallest `H(x, p1) - H(y, p2)` over the
    /// last three alphas.
    pub tail_difference: f64,
    /// Largest `sum alpha Psi` at the last alpha.
    pub final_penalty: f64,
    pub bounds_hold: bool,
    /// Largest `u(x*) - lambda [(1-eps) H(x*, p1) + eps c] - h1(x*)` when a
    /// solution context is given.
    pub subsolution_residual: Option<f64>,
    /// Largest `h2(y*) - v(y*) + lambda [(1+eps) H(y*, p2) - eps c]`.
    pub supersolution_residual: Option<f64>,
    pub notes: Vec<String>,
}

pub const TAIL_TOL: f64 = 1e-3;
pub const PENALTY_TOL: f64 = 1e-6;

/// Runs the doubling diagnostic. The verdict is FAIL when the Hamiltonian
/// difference stays above [`TAIL_TOL`] over the last alphas, INCONCLUSIVE
/// when the penalty has not dropped below [`PENALTY_TOL`], a bound in the
/// chain is violated, or a final witness lies on an artificial face, and
/// PASS otherwise.
pub fn doubling_certificate(
    problem: &DoublingProblem<'_>,
    epsilons: &[f64],
    alphas: &[Vec<f64>],
    context: Option<&SolutionContext<'_>>,
    opts: &DoublingOptions,
) -> Result<DoublingCertificate> {
    let witnesses = doubling_witnesses(problem, epsilons, alphas, opts)?;
    let model = problem.model;
    let c_ups = model.containment.bound;
    let n = alphas.len();
    let mut tail_difference = f64::NEG_INFINITY;
    let mut final_penalty: f64 = 0.0;
    let mut artificial = false;
    let mut bounds_hold = true;
    let mut notes = Vec::new();
    let mut sub_res: Option<f64> = None;
    let mut super_res: Option<f64> = None;
    let v_sup = problem.v.sup_bound();
    for chunk in witnesses.chunks(n) {
        let tail = chunk[n.saturating_sub(3)..]
            .iter()
            .map(|w| w.hamiltonian_difference())
            .fold(f64::INFINITY, f64::min);
        tail_difference = tail_difference.max(tail);
        let last = &chunk[n - 1];
        final_penalty = final_penalty.max(last.penalty());
        artificial |= last.on_artificial_face;
        for w in chunk {
            // Zero-cost control at y: Lambda(y, p2, theta0) <= H(y, p2).
            if w.lambda_y_zero > w.h_y + 1e-8 * (1.0 + w.h_y.abs()) {
                bounds_hold = false;
                notes.push(format!("Lambda(y, p2, theta0) exceeds H(y, p2) at alpha {:?}", w.alpha));
            }
            if !w.cost_star.is_finite() {
                bounds_hold = false;
                notes.push(format!("infinite cost at the optimal control, alpha {:?}", w.alpha));
            }
            if let Some(ctx) = context {
                let e = w.epsilon;
                let s = problem.u.value(&w.x_star)
                    - ctx.lambda * ((1.0 - e) * w.h_x + e * c_ups)
                    - ctx.h1.value(&w.x_star);
                let t = ctx.h2.value(&w.y_star) - problem.v.value(&w.y_star)
                    + ctx.lambda * ((1.0 + e) * w.h_y - e * c_ups);
                sub_res = Some(sub_res.map_or(s, |r| r.max(s)));
                super_res = Some(super_res.map_or(t, |r| r.max(t)));
                // Supersolution bound: H(y, p2) <= (sup v + sup |h2|) / lambda + c.
                if let (Some(vs), Some(hs)) = (v_sup, ctx.h2.sup_bound()) {
                    let cap = ((vs + hs) / ctx.lambda + e * c_ups) / (1.0 + e);
                    if w.h_y > cap + 1e-6 {
                        bounds_hold = false;
                        notes.push(format!("H(y, p2) = {} exceeds the supersolution bound {cap}", w.h_y));
                    }
                }
            }
        }
    }
    let verdict = if tail_difference > TAIL_TOL {
        Status::Fail
    } else if final_penalty > PENALTY_TOL || !bounds_hold || artificial {
        if final_penalty > PENALTY_TOL {
            notes.push(format!("penalty {final_penalty:e} at the last alpha"));
        }
        if artificial {
            notes.push("a final witness lies on an artificial box face".into());
        }
        Status::Inconclusive
    } else {
        Status::Pass
    };
    Ok(DoublingCertificate {
        witnesses,
        verdict,
        tail_difference,
        final_penalty,
        bounds_hold,
        subsolution_residual: sub_res,
        supersolution_residual: super_res,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SmoothField;
    use crate::models::quadratic::{make_quadratic_model, QuadraticSpec};
    use crate::penalization::SquaredDistance;

    #[test]
    fn equal_candidates_collapse_to_the_diagonal() {
        let mut spec = QuadraticSpec::isotropic(1, &[0.5]);
        spec.box_radius = 2.0;
        let m = make_quadratic_model(&spec, None).unwrap();
        let u = SmoothField::new(1, |x| 0.5 * (-x[0] * x[0]).exp());
        let problem = DoublingProblem {
            model: &m,
            u: &u,
            v: &u,
            penalties: vec![Arc::new(SquaredDistance)],
        };
        let alphas: Vec<Vec<f64>> = default_alphas().into_iter().map(|a| vec![a]).collect();
        let cert = doubling_certificate(&problem, &[0.01], &alphas, None, &DoublingOptions::default()).unwrap();
        let last = cert.witnesses.last().unwrap();
        assert!(last.penalty() < 1e-6, "{}", last.penalty());
        assert!((last.x_star[0] - last.y_star[0]).abs() < 1e-3);
        assert!(cert.tail_difference.abs() < 1e-6);
        assert_eq!(cert.verdict, Status::Pass, "{:?}", cert.notes);
        for w in &cert.witnesses {
            assert!((phi(&problem, w.epsilon, &w.alpha, &w.x_star, &w.y_star) - w.phi_value).abs() < 1e-10);
            let p = w.alpha[0] * (w.x_star[0] - w.y_star[0]);
            assert!((w.p1[0] - p).abs() < 1e-12 && (w.p2[0] - p).abs() < 1e-12);
        }
    }
}
