//! Lyapunov-type containment functions with certified bounds
//! `sup_{x, theta} Lambda(x, grad U(x), theta) <= bound`.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContainmentKind {
    /// `log(1 + |x|^2) / 2`.
    LogQuadratic,
    /// `log(1 + x - origin)` on a half-line starting at `origin`.
    LogShift { origin: f64 },
    /// `sum_{k >= offset} log(1 + x_k)`.
    LogOrthant { offset: usize },
    /// Identically zero; enough on compact domains.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Containment {
    pub kind: ContainmentKind,
    pub bound: f64,
}

impl Containment {
    pub fn new(kind: ContainmentKind, bound: f64) -> Self {
        Self { kind, bound }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ContainmentKind::LogQuadratic => 0.5 * x.iter().map(|v| v * v).sum::<f64>().ln_1p(),
            ContainmentKind::LogShift { origin } => (x[0] - origin).max(0.0).ln_1p(),
            ContainmentKind::LogOrthant { offset } => {
                x[*offset..].iter().map(|v| v.max(0.0).ln_1p()).sum()
            }
            ContainmentKind::Zero => 0.0,
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            ContainmentKind::LogQuadratic => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                x.iter().map(|v| v / (1.0 + r2)).collect()
            }
            ContainmentKind::LogShift { origin } => vec![1.0 / (1.0 + (x[0] - origin).max(0.0))],
            ContainmentKind::LogOrthant { offset } => x
                .iter()
                .enumerate()
                .map(|(k, v)| if k < *offset { 0.0 } else { 1.0 / (1.0 + v.max(0.0)) })
                .collect(),
            ContainmentKind::Zero => vec![0.0; x.len()],
        }
    }

    /// Bound on the operator norm of the Hessian over the domain.
    pub fn curvature_bound(&self) -> f64 {
        match self.kind {
            ContainmentKind::Zero => 0.0,
            _ => 1.0,
        }
    }

    /// Whether sublevel sets are bounded along unbounded directions of the
    /// domain. `Zero` is only admissible on compact domains.
    pub fn is_coercive(&self) -> bool {
        !matches!(self.kind, ContainmentKind::Zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            Containment::new(ContainmentKind::LogQuadratic, 1.0),
            Containment::new(ContainmentKind::LogOrthant { offset: 1 }, 1.0),
        ];
        let x = [0.3, 1.2, 0.7];
        for c in cases {
            let g = c.gradient(&x);
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += 1e-6;
                xm[k] -= 1e-6;
                let fd = (c.value(&xp) - c.value(&xm)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-8);
            }
        }
    }
}
