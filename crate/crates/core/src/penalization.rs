//! Penalization functions: smooth, nonnegative, and zero exactly on the
//! diagonal `x = y` (or on a block of it).

use std::sync::Arc;

pub trait Penalization: Send + Sync {
    fn name(&self) -> String;

    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64>;

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64>;

    /// Per-coordinate bound on `|x_i - y_i|` over `{value <= level}` for
    /// points of the domain; `inf` where the penalty does not control it.
    fn separation(&self, level: f64, dim: usize) -> Vec<f64>;
}

/// `|x - y|^2 / 2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredDistance;

impl Penalization for SquaredDistance {
    fn name(&self) -> String {
        "squared-distance".into()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| a - b).collect()
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| b - a).collect()
    }

    fn separation(&self, level: f64, dim: usize) -> Vec<f64> {
        vec![(2.0 * level).sqrt(); dim]
    }
}

/// `sum_{a < q} ((y_a - x_a)^+)^2 / 2` on the first `q` (probability)
/// coordinates. On the simplex the negative parts sum to the positive ones,
/// so it vanishes exactly when the blocks agree.
#[derive(Clone, Copy, Debug)]
pub struct PositivePartPenalty {
    pub simplex_dim: usize,
}

impl Penalization for PositivePartPenalty {
    fn name(&self) -> String {
        "positive-part".into()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * (0..self.simplex_dim).map(|a| (y[a] - x[a]).max(0.0).powi(2)).sum::<f64>()
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|a| if a < self.simplex_dim { -(y[a] - x[a]).max(0.0) } else { 0.0 })
            .collect()
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|a| if a < self.simplex_dim { (y[a] - x[a]).max(0.0) } else { 0.0 })
            .collect()
    }

    fn separation(&self, level: f64, dim: usize) -> Vec<f64> {
        let q = self.simplex_dim as f64;
        (0..dim)
            .map(|a| if a < self.simplex_dim { q * (2.0 * level).sqrt() } else { f64::INFINITY })
            .collect()
    }
}

/// `sum_{i >= from} (x_i - y_i)^2 / 2`.
#[derive(Clone, Copy, Debug)]
pub struct TailSquaredDistance {
    pub from: usize,
}

impl Penalization for TailSquaredDistance {
    fn name(&self) -> String {
        format!("squared-distance[{}..]", self.from)
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * (self.from..x.len()).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>()
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| if i >= self.from { x[i] - y[i] } else { 0.0 }).collect()
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| if i >= self.from { y[i] - x[i] } else { 0.0 }).collect()
    }

    fn separation(&self, level: f64, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|i| if i >= self.from { (2.0 * level).sqrt() } else { f64::INFINITY })
            .collect()
    }
}

/// The penalization pair for the flux model: positive parts on the
/// distribution block, squared distance on the flux block.
pub fn flux_penalization_pair(species: usize) -> Vec<Arc<dyn Penalization>> {
    vec![
        Arc::new(PositivePartPenalty { simplex_dim: species }),
        Arc::new(TailSquaredDistance { from: species }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::project_simplex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(pen: &dyn Penalization, x: &[f64], y: &[f64]) {
        let h = 1e-6;
        let gx = pen.grad_x(x, y);
        let gy = pen.grad_y(x, y);
        for i in 0..x.len() {
            let mut a = x.to_vec();
            a[i] += h;
            let mut b = x.to_vec();
            b[i] -= h;
            assert!(((pen.value(&a, y) - pen.value(&b, y)) / (2.0 * h) - gx[i]).abs() < 1e-6);
            let mut a = y.to_vec();
            a[i] += h;
            let mut b = y.to_vec();
            b[i] -= h;
            assert!(((pen.value(x, &a) - pen.value(x, &b)) / (2.0 * h) - gy[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn gradients_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pens: Vec<Arc<dyn Penalization>> = {
            let mut v = flux_penalization_pair(3);
            v.push(Arc::new(SquaredDistance));
            v
        };
        for _ in 0..50 {
            let mu = project_simplex(&[rng.random::<f64>(), rng.random(), rng.random()]);
            let nu = project_simplex(&[rng.random::<f64>(), rng.random(), rng.random()]);
            let x: Vec<f64> = mu.iter().copied().chain([rng.random::<f64>(), 2.0]).collect();
            let y: Vec<f64> = nu.iter().copied().chain([rng.random::<f64>(), 1.0]).collect();
            let total: f64 = pens[0].value(&x, &y) + pens[1].value(&x, &y);
            assert!(total > 0.0);
            for p in &pens {
                assert!(p.value(&x, &y) >= 0.0);
                assert_eq!(p.value(&x, &x), 0.0);
                fd_check(p.as_ref(), &x, &y);
            }
        }
    }

    #[test]
    fn positive_part_separation_bound_holds_on_the_simplex() {
        let pen = PositivePartPenalty { simplex_dim: 3 };
        let x = [0.7, 0.2, 0.1];
        let y = [0.1, 0.5, 0.4];
        let level = pen.value(&x, &y);
        let sep = pen.separation(level, 3);
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() <= sep[i] + 1e-15);
        }
    }
}
