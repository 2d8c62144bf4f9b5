//! Hamiltonians of the form `H(x, p) = sup_theta [Lambda(x, p, theta) - I(x, theta)]`
//! over the probability simplex, and their momentum subdifferentials.

use crate::containment::Containment;
use crate::cost::{check_cost_dim, ControlCost, DominatedExtension, Order};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::vecops::{dist, dot, fd_step, norm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// The map `(x, p, theta) -> Lambda(x, p, theta)`, convex in `p` with
/// `Lambda(x, 0, theta) = 0`.
pub trait InternalHamiltonian: Send + Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn eval(&self, x: &[f64], p: &[f64], theta: &[f64]) -> f64;

    /// Gradient in `theta` (as a function on all of `R^J`).
    fn grad_control(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(theta.len());
        let h = 1e-6;
        let mut t = theta.to_vec();
        for k in 0..theta.len() {
            t[k] = theta[k] + h;
            let up = self.eval(x, p, &t);
            t[k] = theta[k] - h;
            let down = self.eval(x, p, &t);
            t[k] = theta[k];
            out.push((up - down) / (2.0 * h));
        }
        out
    }

    /// Gradient in `p`.
    fn grad_momentum(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let h = fd_step(p);
        let mut q = p.to_vec();
        (0..p.len())
            .map(|k| {
                q[k] = p[k] + h;
                let up = self.eval(x, &q, theta);
                q[k] = p[k] - h;
                let down = self.eval(x, &q, theta);
                q[k] = p[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `theta -> Lambda` is affine, so its values at the vertices determine it.
    fn affine_in_control(&self) -> bool {
        false
    }

    fn concave_in_control(&self) -> bool {
        self.affine_in_control()
    }
}

/// A Hamiltonian model: internal Hamiltonian, control cost, state domain and
/// containment function.
#[derive(Clone)]
pub struct HamiltonianModel {
    pub name: String,
    pub lambda: Arc<dyn InternalHamiltonian>,
    pub cost: Arc<dyn ControlCost>,
    pub domain: Domain,
    pub containment: Containment,
    /// Bounded region used for sampling-based checks and grids.
    pub verification_box: (Vec<f64>, Vec<f64>),
}

impl std::fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("controls", &self.control_dim())
            .field("cost", &self.cost.describe())
            .field("domain", &self.domain)
            .finish()
    }
}

impl HamiltonianModel {
    pub fn new(
        name: impl Into<String>,
        lambda: Arc<dyn InternalHamiltonian>,
        cost: Arc<dyn ControlCost>,
        domain: Domain,
        containment: Containment,
        verification_box: (Vec<f64>, Vec<f64>),
    ) -> Result<Self> {
        check_cost_dim(cost.as_ref(), lambda.control_dim())?;
        if domain.dim() != lambda.state_dim()
            || verification_box.0.len() != lambda.state_dim()
            || verification_box.1.len() != lambda.state_dim()
        {
            return Err(Error::Dimension(
                "domain, box and internal Hamiltonian disagree on the state dimension".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            lambda,
            cost,
            domain,
            containment,
            verification_box,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.lambda.control_dim()
    }

    pub fn concave(&self) -> bool {
        self.lambda.concave_in_control() && self.cost.convex()
    }

    /// The same model with one extra control of infinite cost.
    pub fn with_dominated_control(&self) -> Self {
        Self {
            name: format!("{}+dominated", self.name),
            lambda: Arc::new(DominatedLambda {
                inner: self.lambda.clone(),
            }),
            cost: Arc::new(DominatedExtension {
                inner: self.cost.clone(),
            }),
            ..self.clone()
        }
    }
}

/// Extends `Lambda` to one extra control that moves its mass to control 0.
struct DominatedLambda {
    inner: Arc<dyn InternalHamiltonian>,
}

impl DominatedLambda {
    fn fold(&self, theta: &[f64]) -> Vec<f64> {
        let j = self.inner.control_dim();
        let mut t = theta[..j].to_vec();
        t[0] += theta[j];
        t
    }
}

impl InternalHamiltonian for DominatedLambda {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim() + 1
    }
    fn eval(&self, x: &[f64], p: &[f64], theta: &[f64]) -> f64 {
        self.inner.eval(x, p, &self.fold(theta))
    }
    fn grad_control(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut g = self.inner.grad_control(x, p, &self.fold(theta));
        g.push(g[0]);
        g
    }
    fn grad_momentum(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        self.inner.grad_momentum(x, p, &self.fold(theta))
    }
    fn affine_in_control(&self) -> bool {
        self.inner.affine_in_control()
    }
    fn concave_in_control(&self) -> bool {
        self.inner.concave_in_control()
    }
}

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct SimplexControl(Vec<f64>);

impl SimplexControl {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|t| !(*t >= -1e-12)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("{weights:?} is not a probability vector")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(j: usize) -> Self {
        Self(vec![1.0 / j as f64; j])
    }

    pub fn vertex(j: usize, k: usize) -> Self {
        let mut v = vec![0.0; j];
        v[k] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ControlOptimum {
    pub value: f64,
    pub control: SimplexControl,
    /// Frank-Wolfe duality gap. For heuristic results, the spread between
    /// the best and worst local optima found.
    pub gap_bound: f64,
    /// Set when the objective is not known to be concave in the control.
    pub heuristic: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct HamiltonianOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 10_000,
            random_starts: 32,
            seed: 0x9e37_79b9,
        }
    }
}

struct Objective<'a> {
    model: &'a HamiltonianModel,
    x: &'a [f64],
    p: &'a [f64],
}

struct Point {
    value: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let c = self.model.cost.value(self.x, theta);
        if !c.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.model.lambda.eval(self.x, self.p, theta) - c
    }

    fn point(&self, theta: &[f64], want_hess: bool) -> Point {
        let order = if want_hess { Order::Hessian } else { Order::Gradient };
        let ce = self.model.cost.evaluate(self.x, theta, order);
        if !ce.value.is_finite() {
            return Point {
                value: f64::NEG_INFINITY,
                grad: vec![f64::NAN; theta.len()],
                hess: None,
            };
        }
        let lam = self.model.lambda.eval(self.x, self.p, theta);
        let gl = self.model.lambda.grad_control(self.x, self.p, theta);
        let gc = ce.gradient.unwrap_or_else(|| self.cost_fd_gradient(theta));
        let grad = gl.iter().zip(&gc).map(|(a, b)| a - b).collect();
        let hess = if self.model.lambda.affine_in_control() {
            ce.hessian.map(|h| -h)
        } else {
            None
        };
        Point {
            value: lam - ce.value,
            grad,
            hess,
        }
    }

    fn cost_fd_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let h = 1e-7;
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|k| {
                t[k] = theta[k] + h;
                let up = self.model.cost.value(self.x, &t);
                t[k] = (theta[k] - h).max(0.0);
                let down = self.model.cost.value(self.x, &t);
                let width = theta[k] + h - t[k];
                t[k] = theta[k];
                (up - down) / width
            })
            .collect()
    }
}

/// `<g, d>` ignoring coordinates with `d_i = 0`, where `g_i` may be `-inf`.
fn directional(grad: &[f64], dir: &[f64]) -> f64 {
    grad.iter()
        .zip(dir)
        .filter(|(_, d)| **d != 0.0)
        .map(|(g, d)| g * d)
        .sum()
}

/// Frank-Wolfe gap `max_i g_i - <g, theta>` over the support of `theta`.
fn fw_gap(theta: &[f64], grad: &[f64]) -> f64 {
    let top = grad
        .iter()
        .filter(|g| !g.is_nan())
        .fold(f64::NEG_INFINITY, |m, g| m.max(*g));
    let inner: f64 = theta
        .iter()
        .zip(grad)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, g)| t * g)
        .sum();
    top - inner
}

struct Local {
    theta: Vec<f64>,
    value: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
}

/// Frank-Wolfe with away steps and exact line search, interleaved with
/// Newton steps on the current face whenever a Hessian is available.
fn ascend(obj: &Objective, start: Vec<f64>, tol: f64, max_iter: usize) -> Local {
    let j = start.len();
    let mut theta = start;
    let mut stalls = 0;
    let mut last = obj.point(&theta, true);
    let mut gap = fw_gap(&theta, &last.grad);
    for it in 0..max_iter {
        let scale = 1.0 + last.value.abs() + last.grad.iter().filter(|g| g.is_finite()).fold(0.0f64, |m, g| m.max(g.abs()));
        let floor = tol.max(64.0 * f64::EPSILON * scale);
        if gap <= floor {
            return Local {
                theta,
                value: last.value,
                gap,
                iterations: it,
                converged: true,
            };
        }
        if stalls >= 3 {
            // No representable progress is possible; accept a gap that is
            // small relative to the objective scale.
            let ok = gap <= 1e-7 * scale;
            return Local {
                theta,
                value: last.value,
                gap,
                iterations: it,
                converged: ok,
            };
        }
        let before = last.value;
        let mut moved = false;
        if let Some(h) = last.hess.as_ref() {
            if let Some(next) = newton_face_step(obj, &theta, &last, h) {
                theta = next;
                moved = true;
            }
        }
        if !moved {
            if let Some(next) = fw_step(obj, &theta, last.value, &last.grad) {
                theta = next;
            }
        }
        last = obj.point(&theta, true);
        gap = fw_gap(&theta, &last.grad);
        if last.value > before {
            stalls = 0;
        } else {
            stalls += 1;
        }
        debug_assert_eq!(theta.len(), j);
    }
    Local {
        theta,
        value: last.value,
        gap,
        iterations: max_iter,
        converged: false,
    }
}

fn fw_step(obj: &Objective, theta: &[f64], value: f64, grad: &[f64]) -> Option<Vec<f64>> {
    let j = theta.len();
    let (s, gs) = grad
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_nan())
        .fold((0, f64::NEG_INFINITY), |(bi, bg), (i, g)| if *g > bg { (i, *g) } else { (bi, bg) });
    let (a, ga) = (0..j)
        .filter(|&i| theta[i] > 0.0)
        .fold((0, f64::INFINITY), |(bi, bg), i| if grad[i] < bg { (i, grad[i]) } else { (bi, bg) });
    let inner: f64 = (0..j).filter(|&i| theta[i] > 0.0).map(|i| theta[i] * grad[i]).sum();
    let fw_gain = gs - inner;
    let away_gain = inner - ga;
    let (dir, gmax) = if fw_gain >= away_gain || theta[a] >= 1.0 {
        let mut d: Vec<f64> = theta.iter().map(|t| -t).collect();
        d[s] += 1.0;
        (d, 1.0)
    } else {
        let mut d = theta.to_vec();
        d[a] -= 1.0;
        (d, theta[a] / (1.0 - theta[a]))
    };
    let gamma = line_search(obj, theta, &dir, gmax, value, directional(grad, &dir));
    if gamma <= 0.0 {
        return None;
    }
    let mut next: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| (t + gamma * d).max(0.0)).collect();
    if gamma >= gmax && gmax < 1.0 {
        next[a] = 0.0;
    }
    let s: f64 = next.iter().sum();
    Some(next.into_iter().map(|t| t / s).collect())
}

/// Largest step along `dir` before the directional derivative turns negative,
/// by Illinois regula falsi on the slope. `value` and `slope0` describe the
/// start; the search stops once concavity bounds the remaining gain below
/// rounding.
fn line_search(obj: &Objective, theta: &[f64], dir: &[f64], gmax: f64, value: f64, slope0: f64) -> f64 {
    let slope = |g: f64| -> f64 {
        let t: Vec<f64> = theta.iter().zip(dir).map(|(a, d)| (a + g * d).max(0.0)).collect();
        let pt = obj.point(&t, false);
        if !pt.value.is_finite() {
            return f64::NEG_INFINITY;
        }
        let s = directional(&pt.grad, dir);
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    };
    let s_hi_0 = slope(gmax);
    if s_hi_0 >= 0.0 {
        return gmax;
    }
    let floor = 1e-15 * (1.0 + value.abs());
    let (mut lo, mut hi) = (0.0, gmax);
    let (mut s_lo, mut s_hi) = (slope0.max(0.0), s_hi_0);
    // Unscaled slope at `lo` for the stopping bound.
    let mut true_lo = s_lo;
    let mut side = 0i8;
    for _ in 0..100 {
        if (hi - lo) * true_lo <= floor || hi - lo <= 1e-16 * gmax {
            break;
        }
        let mid = if s_hi.is_finite() && s_lo.is_finite() && s_lo > 0.0 {
            let m = lo + (hi - lo) * s_lo / (s_lo - s_hi);
            // Keep the secant point away from the ends.
            m.clamp(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo))
        } else {
            0.5 * (lo + hi)
        };
        let sm = slope(mid);
        if sm > 0.0 {
            lo = mid;
            s_lo = sm;
            true_lo = sm;
            if side == 1 {
                s_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            s_hi = sm;
            if side == -1 {
                s_lo *= 0.5;
            }
            side = -1;
        }
    }
    lo
}

fn newton_face_step(obj: &Objective, theta: &[f64], pt: &Point, hess: &DMatrix<f64>) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..theta.len()).filter(|&i| theta[i] > 0.0).collect();
    let s = support.len();
    if s < 2 {
        return None;
    }
    let mut k = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = DVector::<f64>::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &l) in support.iter().enumerate() {
            k[(a, b)] = hess[(i, l)];
        }
        k[(a, s)] = 1.0;
        k[(s, a)] = 1.0;
        rhs[a] = -pt.grad[i];
    }
    let sol = k.lu().solve(&rhs)?;
    let mut dir = vec![0.0; theta.len()];
    for (a, &i) in support.iter().enumerate() {
        dir[i] = sol[a];
    }
    let slope = directional(&pt.grad, &dir);
    if !(slope > 0.0) {
        return None;
    }
    let mut gmax = f64::INFINITY;
    for &i in &support {
        if dir[i] < 0.0 {
            gmax = gmax.min(-theta[i] / dir[i]);
        }
    }
    let mut gamma = 1.0f64.min(0.99 * gmax);
    // A gain below rounding cannot be confirmed by comparing values; take
    // the full step when it stays in the face.
    if slope <= 1e-15 * (1.0 + pt.value.abs()) {
        if gamma < 1.0 {
            return None;
        }
        let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| (t + d).max(0.0)).collect();
        let sum: f64 = trial.iter().sum();
        return Some(trial.into_iter().map(|t| t / sum).collect());
    }
    for _ in 0..40 {
        let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| (t + gamma * d).max(0.0)).collect();
        let v = obj.value(&trial);
        if v >= pt.value + 1e-4 * gamma * slope && v > pt.value {
            let sum: f64 = trial.iter().sum();
            return Some(trial.into_iter().map(|t| t / sum).collect());
        }
        gamma *= 0.5;
    }
    None
}

fn feasible_start(obj: &Objective, j: usize) -> Result<Vec<f64>> {
    let uniform = vec![1.0 / j as f64; j];
    if obj.value(&uniform).is_finite() {
        return Ok(uniform);
    }
    let feasible: Vec<usize> = (0..j)
        .filter(|&k| obj.value(SimplexControl::vertex(j, k).as_slice()).is_finite())
        .collect();
    if !feasible.is_empty() {
        let mut t = vec![0.0; j];
        for &k in &feasible {
            t[k] = 1.0 / feasible.len() as f64;
        }
        if obj.value(&t).is_finite() {
            return Ok(t);
        }
        return Ok(SimplexControl::vertex(j, feasible[0]).into_vec());
    }
    Err(Error::InfeasibleCost)
}

pub(crate) fn random_simplex_point(rng: &mut ChaCha8Rng, j: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..j).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Evaluates `H(x, p)` and an optimal control.
pub fn eval_hamiltonian(
    model: &HamiltonianModel,
    x: &[f64],
    p: &[f64],
    opts: &HamiltonianOptions,
) -> Result<ControlOptimum> {
    if x.len() != model.dim() || p.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "state and momentum must have length {}",
            model.dim()
        )));
    }
    let j = model.control_dim();
    let obj = Objective { model, x, p };
    if j == 1 {
        let v = obj.value(&[1.0]);
        if !v.is_finite() {
            return Err(Error::InfeasibleCost);
        }
        return Ok(ControlOptimum {
            value: v,
            control: SimplexControl::uniform(1),
            gap_bound: 0.0,
            heuristic: false,
            iterations: 0,
        });
    }
    if model.concave() {
        let start = feasible_start(&obj, j)?;
        let loc = ascend(&obj, start, opts.tol, opts.max_iter);
        if !loc.converged {
            return Err(Error::NonConvergence {
                iterations: loc.iterations,
                gap: loc.gap,
                best: loc.theta,
            });
        }
        return Ok(ControlOptimum {
            value: loc.value,
            control: SimplexControl(loc.theta),
            gap_bound: loc.gap.max(0.0),
            heuristic: false,
            iterations: loc.iterations,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = (0..j).map(|k| SimplexControl::vertex(j, k).into_vec()).collect();
    starts.push(vec![1.0 / j as f64; j]);
    for _ in 0..opts.random_starts {
        starts.push(random_simplex_point(&mut rng, j));
    }
    let mut results: Vec<Local> = starts
        .into_iter()
        .filter(|s| obj.value(s).is_finite())
        .map(|s| ascend(&obj, s, opts.tol, opts.max_iter.min(2_000)))
        .collect();
    if results.is_empty() {
        return Err(Error::InfeasibleCost);
    }
    results.sort_by(|a, b| b.value.total_cmp(&a.value));
    let worst = results.last().map(|r| r.value).unwrap_or(f64::NAN);
    let best = results.swap_remove(0);
    Ok(ControlOptimum {
        value: best.value,
        control: SimplexControl(best.theta),
        gap_bound: (best.value - worst).max(best.gap.max(0.0)),
        heuristic: true,
        iterations: best.iterations,
    })
}

/// Objective `Lambda - I` at a given control.
pub fn control_objective(model: &HamiltonianModel, x: &[f64], p: &[f64], theta: &[f64]) -> f64 {
    Objective { model, x, p }.value(theta)
}

/// Generators of the momentum subdifferential: `grad_p Lambda(x, p, theta)`
/// over the computed optimal control and every vertex that is
/// `max(tol, 1e-8)`-optimal.
pub fn subdifferential_p(
    model: &HamiltonianModel,
    x: &[f64],
    p: &[f64],
    opts: &HamiltonianOptions,
) -> Result<Vec<Vec<f64>>> {
    let opt = eval_hamiltonian(model, x, p, opts)?;
    Ok(generators(model, x, p, &opt, opts.tol.max(1e-8)))
}

fn generators(model: &HamiltonianModel, x: &[f64], p: &[f64], opt: &ControlOptimum, eps: f64) -> Vec<Vec<f64>> {
    let j = model.control_dim();
    let mut controls = vec![opt.control.as_slice().to_vec()];
    if j > 1 {
        for k in 0..j {
            let v = SimplexControl::vertex(j, k).into_vec();
            if control_objective(model, x, p, &v) >= opt.value - eps {
                controls.push(v);
            }
        }
    }
    let mut gens: Vec<Vec<f64>> = Vec::new();
    for t in controls {
        let g = model.lambda.grad_momentum(x, p, &t);
        if !gens.iter().any(|h| dist(h, &g) <= 1e-12 * (1.0 + norm(&g))) {
            gens.push(g);
        }
    }
    gens
}

/// Minimal-norm point of the convex hull of `gens` (Frank-Wolfe on the
/// weights, exact line search for the quadratic).
pub fn min_norm_element(gens: &[Vec<f64>]) -> Vec<f64> {
    if gens.len() == 1 {
        return gens[0].clone();
    }
    let d = gens[0].len();
    let mut z = gens[0].clone();
    for _ in 0..500 {
        let (k, _) = gens
            .iter()
            .enumerate()
            .map(|(i, g)| (i, dot(g, &z)))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        let dir: Vec<f64> = (0..d).map(|i| gens[k][i] - z[i]).collect();
        let dd = dot(&dir, &dir);
        if dd <= 1e-30 {
            break;
        }
        let gamma = (-dot(&z, &dir) / dd).clamp(0.0, 1.0);
        if gamma <= 1e-15 {
            break;
        }
        for i in 0..d {
            z[i] += gamma * dir[i];
        }
    }
    z
}

/// `H(x, p)` together with the minimal-norm subgradient in `p`.
pub fn hamiltonian_with_slope(
    model: &HamiltonianModel,
    x: &[f64],
    p: &[f64],
    opts: &HamiltonianOptions,
) -> Result<(f64, Vec<f64>)> {
    let opt = eval_hamiltonian(model, x, p, opts)?;
    if model.control_dim() == 1 {
        return Ok((opt.value, model.lambda.grad_momentum(x, p, &[1.0])));
    }
    let gens = generators(model, x, p, &opt, opts.tol.max(1e-8));
    Ok((opt.value, min_norm_element(&gens)))
}
