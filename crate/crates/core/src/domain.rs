//! State domains: membership, projection, and tangent-cone projection.

use crate::vecops::project_simplex;
use serde::Serialize;

/// Coordinates within this distance of a face count as lying on it.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    FullSpace { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// First `simplex_dim` coordinates form a probability vector, the
    /// remaining `orthant_dim` are nonnegative.
    SimplexOrthant { simplex_dim: usize, orthant_dim: usize },
    /// One-dimensional interval; `upper` may be `f64::INFINITY`.
    Interval { lower: f64, upper: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::FullSpace { dim } => *dim,
            Domain::Box { lower, .. } => lower.len(),
            Domain::SimplexOrthant {
                simplex_dim,
                orthant_dim,
            } => simplex_dim + orthant_dim,
            Domain::Interval { .. } => 1,
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::FullSpace { .. } => true,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Domain::SimplexOrthant { simplex_dim, .. } => {
                let (mu, w) = x.split_at(*simplex_dim);
                let total: f64 = mu.iter().sum();
                mu.iter().all(|m| *m >= -tol)
                    && (total - 1.0).abs() <= tol
                    && w.iter().all(|v| *v >= -tol)
            }
            Domain::Interval { lower, upper } => x[0] >= lower - tol && x[0] <= upper + tol,
        }
    }

    /// Amount by which `x` fails to lie in the domain (0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Domain::FullSpace { .. } => 0.0,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            Domain::SimplexOrthant { simplex_dim, .. } => {
                let (mu, w) = x.split_at(*simplex_dim);
                let total: f64 = mu.iter().sum();
                let neg = mu
                    .iter()
                    .chain(w.iter())
                    .map(|v| (-v).max(0.0))
                    .fold(0.0, f64::max);
                neg.max((total - 1.0).abs())
            }
            Domain::Interval { lower, upper } => (lower - x[0]).max(x[0] - upper).max(0.0),
        }
    }

    /// Nearest point of the domain.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Domain::FullSpace { .. } => x.to_vec(),
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| v.clamp(*l, *u))
                .collect(),
            Domain::SimplexOrthant { simplex_dim, .. } => {
                let (mu, w) = x.split_at(*simplex_dim);
                let mut out = project_simplex(mu);
                out.extend(w.iter().map(|v| v.max(0.0)));
                out
            }
            Domain::Interval { lower, upper } => vec![x[0].clamp(*lower, *upper)],
        }
    }

    /// Euclidean projection of the direction `v` onto the tangent cone at `x`.
    pub fn project_tangent(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Domain::FullSpace { .. } => v.to_vec(),
            Domain::Box { lower, upper } => v
                .iter()
                .enumerate()
                .map(|(k, &d)| clamp_face(x[k], lower[k], upper[k], d))
                .collect(),
            Domain::Interval { lower, upper } => vec![clamp_face(x[0], *lower, *upper, v[0])],
            Domain::SimplexOrthant { simplex_dim, .. } => {
                let q = *simplex_dim;
                let zero: Vec<bool> = x[..q].iter().map(|m| *m <= BOUNDARY_TOL).collect();
                let mut out = project_zero_sum_cone(&v[..q], &zero);
                out.extend(
                    x[q..]
                        .iter()
                        .zip(&v[q..])
                        .map(|(xi, d)| if *xi <= BOUNDARY_TOL { d.max(0.0) } else { *d }),
                );
                out
            }
        }
    }

    /// True when `x` lies on a face of the domain.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        match self {
            Domain::FullSpace { .. } => false,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .any(|(v, (l, u))| (v - l).abs() <= BOUNDARY_TOL || (v - u).abs() <= BOUNDARY_TOL),
            Domain::Interval { lower, upper } => {
                (x[0] - lower).abs() <= BOUNDARY_TOL || (x[0] - upper).abs() <= BOUNDARY_TOL
            }
            Domain::SimplexOrthant { .. } => x.iter().any(|v| v.abs() <= BOUNDARY_TOL),
        }
    }

    /// Per-axis bounds of the domain, `±inf` where unbounded.
    pub fn axis_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Domain::FullSpace { dim } => vec![(f64::NEG_INFINITY, f64::INFINITY); *dim],
            Domain::Box { lower, upper } => lower.iter().copied().zip(upper.iter().copied()).collect(),
            Domain::Interval { lower, upper } => vec![(*lower, *upper)],
            Domain::SimplexOrthant {
                simplex_dim,
                orthant_dim,
            } => {
                let mut b = vec![(0.0, 1.0); *simplex_dim];
                b.extend(vec![(0.0, f64::INFINITY); *orthant_dim]);
                b
            }
        }
    }
}

fn clamp_face(x: f64, lower: f64, upper: f64, d: f64) -> f64 {
    let mut d = d;
    if x - lower <= BOUNDARY_TOL {
        d = d.max(0.0);
    }
    if upper - x <= BOUNDARY_TOL {
        d = d.min(0.0);
    }
    d
}

/// Projection onto `{d : sum d = 0, d_a >= 0 where zero[a]}`.
///
/// Components clamped at zero only grow as the shift increases, so the
/// active set is found in at most `q` rounds.
fn project_zero_sum_cone(v: &[f64], zero: &[bool]) -> Vec<f64> {
    let q = v.len();
    let mut clamped = vec![false; q];
    loop {
        let free = clamped.iter().filter(|c| !**c).count();
        let nu = v
            .iter()
            .zip(&clamped)
            .filter(|(_, c)| !**c)
            .map(|(x, _)| x)
            .sum::<f64>()
            / free as f64;
        let mut grew = false;
        for a in 0..q {
            if zero[a] && !clamped[a] && v[a] - nu < 0.0 {
                clamped[a] = true;
                grew = true;
            }
        }
        if !grew {
            return (0..q)
                .map(|a| if clamped[a] { 0.0 } else { v[a] - nu })
                .collect();
        }
    }
}
