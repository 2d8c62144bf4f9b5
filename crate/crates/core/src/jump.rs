//! Finite-state jump processes: rate fields, generators, the
//! Donsker-Varadhan occupation cost, stationary laws and principal
//! eigenvalues of tilted generators.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

/// Rates below this are treated as absent edges in connectivity checks.
pub const EDGE_THRESHOLD: f64 = 1e-14;

/// Parametric families of state-dependent jump rates `r(i, j, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateFamily {
    Constant {
        rates: Vec<Vec<f64>>,
    },
    /// `max(base[i][j] + <slope[i][j], x>, 0)`.
    Affine {
        base: Vec<Vec<f64>>,
        slope: Vec<Vec<Vec<f64>>>,
    },
    /// `base[i][j] * (1 + amplitude[i][j] * sin(<wavevector, x> + phase))`.
    Sinusoidal {
        base: Vec<Vec<f64>>,
        amplitude: Vec<Vec<f64>>,
        wavevector: Vec<f64>,
        phase: f64,
    },
    /// Multilinear interpolation of tabulated rates; `values[i * J + j]`
    /// holds the node values for the pair (i, j).
    Table {
        lattice: Lattice,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRateField {
    states: usize,
    family: RateFamily,
}

impl JumpRateField {
    pub fn new(family: RateFamily) -> Result<Self> {
        let states = match &family {
            RateFamily::Constant { rates } => square_size(rates)?,
            RateFamily::Affine { base, slope } => {
                let j = square_size(base)?;
                if slope.len() != j || slope.iter().any(|r| r.len() != j) {
                    return Err(Error::Dimension("slope must be J x J x d".into()));
                }
                j
            }
            RateFamily::Sinusoidal {
                base, amplitude, ..
            } => {
                let j = square_size(base)?;
                if square_size(amplitude)? != j {
                    return Err(Error::Dimension("amplitude must be J x J".into()));
                }
                if amplitude.iter().flatten().any(|a| a.abs() >= 1.0) {
                    return Err(Error::InvalidModel(
                        "sinusoidal amplitudes must lie in (-1, 1)".into(),
                    ));
                }
                j
            }
            RateFamily::Table { lattice, values } => {
                let j = (values.len() as f64).sqrt().round() as usize;
                if j * j != values.len() || values.iter().any(|v| v.len() != lattice.len()) {
                    return Err(Error::Dimension("table needs J*J value arrays on the lattice".into()));
                }
                j
            }
        };
        let field = Self { states, family };
        if let RateFamily::Constant { rates } | RateFamily::Affine { base: rates, .. } | RateFamily::Sinusoidal { base: rates, .. } = &field.family {
            if rates.iter().flatten().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::InvalidModel("base rates must be finite and nonnegative".into()));
            }
        }
        Ok(field)
    }

    pub fn constant(rates: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(RateFamily::Constant { rates })
    }

    /// Two-state chain with rate `a` from 1 to 2 and `b` from 2 to 1.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::constant(vec![vec![0.0, a], vec![b, 0.0]])
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn rate(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.family {
            RateFamily::Constant { rates } => rates[i][j],
            RateFamily::Affine { base, slope } => {
                let s: f64 = slope[i][j].iter().zip(x).map(|(a, b)| a * b).sum();
                (base[i][j] + s).max(0.0)
            }
            RateFamily::Sinusoidal {
                base,
                amplitude,
                wavevector,
                phase,
            } => {
                let arg: f64 = wavevector.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase;
                base[i][j] * (1.0 + amplitude[i][j] * arg.sin())
            }
            RateFamily::Table { lattice, values } => {
                lattice.interpolate(&values[i * self.states + j], x).max(0.0)
            }
        }
    }

    /// Off-diagonal rate matrix at `x` (zero diagonal).
    pub fn rate_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.states;
        DMatrix::from_fn(j, j, |a, b| self.rate(a, b, x))
    }

    pub fn generator(&self, x: &[f64]) -> GeneratorMatrix {
        GeneratorMatrix::from_rates(&self.rate_matrix(x))
    }

    pub fn is_irreducible(&self, x: &[f64]) -> bool {
        is_irreducible(&self.rate_matrix(x))
    }

    /// Zero-cost occupation law at `x`.
    pub fn stationary_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_irreducible(x) {
            return Err(Error::NotIrreducible { state: x.to_vec() });
        }
        stationary_control(&self.generator(x))
    }

    /// Largest total outflow rate at `x`, an upper bound for the cost.
    pub fn max_outflow(&self, x: &[f64]) -> f64 {
        (0..self.states)
            .map(|i| (0..self.states).map(|j| self.rate(i, j, x)).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn square_size(m: &[Vec<f64>]) -> Result<usize> {
    let j = m.len();
    if j == 0 || m.iter().any(|r| r.len() != j) {
        return Err(Error::Dimension("rate matrix must be square and nonempty".into()));
    }
    Ok(j)
}

/// Strong connectivity of the directed graph with edges `r[i][j] > 1e-14`.
pub fn is_irreducible(rates: &DMatrix<f64>) -> bool {
    let j = rates.nrows();
    if j <= 1 {
        return true;
    }
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..j).map(|_| g.add_node(())).collect();
    for a in 0..j {
        for b in 0..j {
            if a != b && rates[(a, b)] > EDGE_THRESHOLD {
                g.add_edge(nodes[a], nodes[b], ());
            }
        }
    }
    tarjan_scc(&g).len() == 1
}

/// Markov generator: nonnegative off-diagonal entries, zero row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn from_rates(rates: &DMatrix<f64>) -> Self {
        let j = rates.nrows();
        let mut m = rates.clone();
        for i in 0..j {
            m[(i, i)] = 0.0;
            let out: f64 = m.row(i).sum();
            m[(i, i)] = -out;
        }
        Self { matrix: m }
    }

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("generator must be square".into()));
        }
        let j = matrix.nrows();
        for i in 0..j {
            let scale = matrix.row(i).abs().sum().max(1.0);
            if matrix.row(i).sum().abs() > 1e-12 * scale {
                return Err(Error::InvalidModel(format!("generator row {i} does not sum to zero")));
            }
            for k in 0..j {
                if i != k && matrix[(i, k)] < 0.0 {
                    return Err(Error::InvalidModel(format!("negative rate at ({i}, {k})")));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn off_diagonal(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        m.fill_diagonal(0.0);
        m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DvOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Sup-norm level of the potential beyond which the supremum is
    /// declared possibly unbounded.
    pub divergence_level: f64,
    pub regularization: f64,
    pub want_hessian: bool,
}

impl Default for DvOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 500,
            divergence_level: 50.0,
            regularization: 1e-10,
            want_hessian: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DvSolution {
    pub value: f64,
    /// Optimal potential, gauge-fixed so that the last entry is zero.
    pub potential: Vec<f64>,
    /// Gradient of the cost in the occupation weights.
    pub gradient: Vec<f64>,
    pub hessian: Option<DMatrix<f64>>,
    pub possibly_unbounded: bool,
    pub iterations: usize,
}

/// Donsker-Varadhan cost `sup_w sum_ij r_ij t_i (1 - exp(w_j - w_i))`
/// by damped Newton on the gauge-fixed potential.
pub fn dv_cost(rates: &DMatrix<f64>, theta: &[f64], opts: &DvOptions) -> DvSolution {
    let j = theta.len();
    assert_eq!(rates.nrows(), j, "rate matrix and occupation weights differ in size");
    if j == 1 {
        return DvSolution {
            value: 0.0,
            potential: vec![0.0],
            gradient: vec![0.0],
            hessian: opts.want_hessian.then(|| DMatrix::zeros(1, 1)),
            possibly_unbounded: false,
            iterations: 0,
        };
    }
    let support: Vec<usize> = (0..j).filter(|&a| theta[a] > 0.0).collect();
    if !support.is_empty() && support.len() < j {
        return dv_cost_on_support(rates, theta, &support, opts);
    }
    let m = j - 1;
    let value_at = |w: &[f64]| -> f64 {
        let mut v = 0.0;
        for a in 0..j {
            if theta[a] == 0.0 {
                continue;
            }
            for b in 0..j {
                if a != b {
                    v -= rates[(a, b)] * theta[a] * (w[b] - w[a]).exp_m1();
                }
            }
        }
        v
    };
    let total: f64 = (0..j)
        .map(|a| theta[a] * (0..j).filter(|&b| b != a).map(|b| rates[(a, b)]).sum::<f64>())
        .sum();
    let gtol = opts.tol * (1.0 + total);

    let mut w = vec![0.0; j];
    let mut value = value_at(&w);
    let mut unbounded = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let (grad, hess) = newton_system(rates, theta, &w, opts.regularization);
        let small_gradient = grad.iter().fold(0.0f64, |s, g| s.max(g.abs())) <= gtol;
        let rhs = DVector::from_column_slice(&grad);
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => match hess.clone().lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            },
        };
        // A vanishing gradient with an O(1) Newton step means the potential
        // is sliding down an exponential tail rather than converging.
        let escaping = step.amax() > 1e-3;
        if small_gradient && !escaping {
            break;
        }
        let slope: f64 = grad.iter().zip(step.iter()).map(|(g, s)| g * s).sum();
        // Once the predicted gain is below rounding, line searches compare
        // noise; take the Newton step and stop.
        if !escaping && slope <= 1e-15 * (1.0 + value.abs()) {
            for k in 0..m {
                w[k] += step[k];
            }
            value = value_at(&w);
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = w.clone();
        while t > 1e-12 {
            for k in 0..m {
                trial[k] = w[k] + t * step[k];
            }
            let v = value_at(&trial);
            if v >= value + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            unbounded = escaping;
            break;
        }
        let rising = value_at(&trial) >= value;
        w.copy_from_slice(&trial);
        value = value_at(&w);
        if rising && w.iter().fold(0.0f64, |s, x| s.max(x.abs())) > opts.divergence_level {
            unbounded = true;
            break;
        }
    }

    finish(rates, theta, value, w, unbounded, iterations, opts)
}

fn finish(
    rates: &DMatrix<f64>,
    theta: &[f64],
    value: f64,
    w: Vec<f64>,
    unbounded: bool,
    iterations: usize,
    opts: &DvOptions,
) -> DvSolution {
    let j = theta.len();
    let gradient: Vec<f64> = (0..j)
        .map(|a| {
            (0..j)
                .filter(|&b| b != a)
                .map(|b| -rates[(a, b)] * (w[b] - w[a]).exp_m1())
                .sum()
        })
        .collect();
    let hessian = if opts.want_hessian {
        let (_, hess) = newton_system(rates, theta, &w, opts.regularization);
        theta_hessian(rates, &w, &hess)
    } else {
        None
    };
    DvSolution {
        value,
        potential: w,
        gradient,
        hessian,
        possibly_unbounded: unbounded,
        iterations,
    }
}

/// Potentials off the support can be sent to `-inf`, which removes every
/// return flow: the cost is the exit flux plus the cost of the chain
/// restricted to the support. The supremum is not attained, so the result
/// carries the unbounded flag and a potential sitting past the divergence
/// level.
fn dv_cost_on_support(rates: &DMatrix<f64>, theta: &[f64], support: &[usize], opts: &DvOptions) -> DvSolution {
    let j = theta.len();
    let s = support.len();
    let sub = DMatrix::from_fn(s, s, |a, b| rates[(support[a], support[b])]);
    let sub_theta: Vec<f64> = support.iter().map(|&a| theta[a]).collect();
    let inner = dv_cost(
        &sub,
        &sub_theta,
        &DvOptions {
            want_hessian: false,
            ..*opts
        },
    );
    let exit: f64 = support
        .iter()
        .map(|&a| {
            theta[a]
                * (0..j)
                    .filter(|b| !support.contains(b))
                    .map(|b| rates[(a, b)])
                    .sum::<f64>()
        })
        .sum();
    let low = inner.potential.iter().fold(f64::INFINITY, |m, v| m.min(*v)) - opts.divergence_level - 1.0;
    let mut w = vec![low; j];
    for (k, &a) in support.iter().enumerate() {
        w[a] = inner.potential[k];
    }
    let last = w[j - 1];
    w.iter_mut().for_each(|v| *v -= last);
    finish(rates, theta, inner.value + exit, w, true, inner.iterations, opts)
}

/// Gradient of the dual objective in the free potentials and the negated,
/// regularized Hessian.
fn newton_system(
    rates: &DMatrix<f64>,
    theta: &[f64],
    w: &[f64],
    delta: f64,
) -> (Vec<f64>, DMatrix<f64>) {
    let j = theta.len();
    let m = j - 1;
    let mut flow = DMatrix::<f64>::zeros(j, j);
    for a in 0..j {
        for b in 0..j {
            if a != b && theta[a] > 0.0 {
                flow[(a, b)] = rates[(a, b)] * theta[a] * (w[b] - w[a]).exp();
            }
        }
    }
    let out: Vec<f64> = (0..j).map(|k| flow.row(k).sum()).collect();
    let inn: Vec<f64> = (0..j).map(|k| flow.column(k).sum()).collect();
    let grad: Vec<f64> = (0..m).map(|k| out[k] - inn[k]).collect();
    let scale = (0..m).map(|k| out[k] + inn[k]).fold(f64::MIN_POSITIVE, f64::max);
    let h = DMatrix::from_fn(m, m, |k, l| {
        if k == l {
            out[k] + inn[k] + delta * scale
        } else {
            -(flow[(k, l)] + flow[(l, k)])
        }
    });
    (grad, h)
}

/// Second derivative of the cost in the weights via the implicit function
/// theorem: `G H^{-1} G^T` with `G` the mixed derivative.
fn theta_hessian(rates: &DMatrix<f64>, w: &[f64], neg_hess: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let j = w.len();
    let m = j - 1;
    let g = DMatrix::from_fn(j, m, |a, k| {
        if a == k {
            (0..j)
                .filter(|&b| b != a)
                .map(|b| rates[(a, b)] * (w[b] - w[a]).exp())
                .sum()
        } else {
            -rates[(a, k)] * (w[k] - w[a]).exp()
        }
    });
    let sol = neg_hess.clone().cholesky()?.solve(&g.transpose());
    Some(&g * sol)
}

/// Normalized null vector of the transposed generator.
pub fn stationary_control(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    let j = gen.states();
    if j == 1 {
        return Ok(vec![1.0]);
    }
    let at = gen.matrix().transpose();
    let scale = gen.matrix().abs().max().max(1e-300);
    let svd = at.clone().svd(false, false);
    let null_dim = svd
        .singular_values
        .iter()
        .filter(|s| **s <= 1e-9 * scale)
        .count();
    if null_dim > 1 {
        return Err(Error::Reducible { dimension: null_dim });
    }
    let mut sys = at;
    for k in 0..j {
        sys[(j - 1, k)] = 1.0;
    }
    let mut rhs = DVector::zeros(j);
    rhs[j - 1] = 1.0;
    let theta = sys
        .lu()
        .solve(&rhs)
        .ok_or(Error::Reducible { dimension: 2 })?;
    let v: Vec<f64> = theta.iter().map(|t| t.max(0.0)).collect();
    let s: f64 = v.iter().sum();
    Ok(v.into_iter().map(|t| t / s).collect())
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub value: f64,
    /// Positive right eigenvector normalized to unit sum.
    pub vector: Vec<f64>,
    /// Collatz-Wielandt bracket enclosing the eigenvalue.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Principal eigenvalue of `diag(potential) + R` for an irreducible generator.
///
/// The matrix is shifted to be nonnegative with positive diagonal. A few
/// repeated squarings give a starting vector, and power iteration then runs
/// until the Collatz-Wielandt bracket has relative width at most `tol`.
pub fn principal_eigenvalue(
    gen: &GeneratorMatrix,
    potential: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EigenResult> {
    let j = gen.states();
    if potential.len() != j {
        return Err(Error::Dimension("potential and generator differ in size".into()));
    }
    let mut a = gen.matrix().clone();
    for i in 0..j {
        a[(i, i)] += potential[i];
    }
    if j == 1 {
        return Ok(EigenResult {
            value: a[(0, 0)],
            vector: vec![1.0],
            bracket: (a[(0, 0)], a[(0, 0)]),
            iterations: 0,
        });
    }
    if !is_irreducible(&gen.off_diagonal()) {
        return Err(Error::NotIrreducible { state: Vec::new() });
    }
    let min_diag = (0..j).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
    let shift = -min_diag + 1e-3 * (1.0 + a.abs().max());
    let mut b = a.clone();
    for i in 0..j {
        b[(i, i)] += shift;
    }

    let mut sq = &b / b.max();
    let mut u = DVector::from_element(j, 1.0 / j as f64);
    for _ in 0..40 {
        let next = &sq * &sq;
        sq = &next / next.max().max(1e-300);
        let cand = &sq * DVector::from_element(j, 1.0);
        let s = cand.sum();
        if !(s > 0.0) || cand.iter().any(|v| !(*v > 0.0)) {
            break;
        }
        let cand = cand / s;
        let change = (&cand - &u).amax();
        u = cand;
        if change <= 1e-16 {
            break;
        }
    }

    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for it in 0..max_iter {
        let v = &b * &u;
        lower = f64::INFINITY;
        upper = f64::NEG_INFINITY;
        for i in 0..j {
            let r = v[i] / u[i];
            lower = lower.min(r);
            upper = upper.max(r);
        }
        let s = v.sum();
        u = v / s;
        let mid = 0.5 * (lower + upper);
        if upper - lower <= tol * (1.0 + (mid - shift).abs()) {
            return Ok(EigenResult {
                value: mid - shift,
                vector: u.iter().copied().collect(),
                bracket: (lower - shift, upper - shift),
                iterations: it + 1,
            });
        }
    }
    Err(Error::EigenNonConvergence {
        lower: lower - shift,
        upper: upper - shift,
    })
}
