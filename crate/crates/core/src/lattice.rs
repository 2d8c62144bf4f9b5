//! Rectilinear lattices with multilinear interpolation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tensor-product lattice given by strictly increasing coordinates per axis.
/// Node values are stored with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub axes: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("lattice needs at least one axis".into()));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.len() < 2 {
                return Err(Error::InvalidInput(format!("axis {k} has fewer than 2 nodes")));
            }
            if a.windows(2).any(|w| !(w[1] > w[0])) || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "axis {k} coordinates must be finite and strictly increasing"
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn uniform(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::Dimension("lattice bounds and counts differ in length".into()));
        }
        let axes = lower
            .iter()
            .zip(upper)
            .zip(counts)
            .map(|((l, u), &n)| {
                let n = n.max(2);
                (0..n)
                    .map(|i| l + (u - l) * i as f64 / (n - 1) as f64)
                    .collect()
            })
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a[0]).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.axes.iter().map(|a| *a.last().unwrap()).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].len();
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            idx[k] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a[i])
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Cell index and local coordinate in [0, 1] along one axis, clamped.
    pub fn locate(&self, axis: usize, x: f64) -> (usize, f64) {
        let a = &self.axes[axis];
        let n = a.len();
        if x <= a[0] {
            return (0, 0.0);
        }
        if x >= a[n - 1] {
            return (n - 2, 1.0);
        }
        let i = a.partition_point(|v| *v <= x).saturating_sub(1).min(n - 2);
        (i, (x - a[i]) / (a[i + 1] - a[i]))
    }

    /// Multilinear interpolation weights: (flat index, weight) pairs.
    pub fn weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let d = self.dim();
        let strides = self.strides();
        let cells: Vec<(usize, f64)> = (0..d).map(|k| self.locate(k, x[k])).collect();
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut flat = 0;
            let mut w = 1.0;
            for k in 0..d {
                let (i, t) = cells[k];
                if corner >> k & 1 == 1 {
                    flat += (i + 1) * strides[k];
                    w *= t;
                } else {
                    flat += i * strides[k];
                    w *= 1.0 - t;
                }
            }
            if w != 0.0 {
                out.push((flat, w));
            }
        }
        out
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.weights(x).into_iter().map(|(i, w)| w * values[i]).sum()
    }

    /// Gradient of the multilinear interpolant inside the cell containing `x`.
    pub fn interpolate_gradient(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let strides = self.strides();
        let cells: Vec<(usize, f64)> = (0..d).map(|k| self.locate(k, x[k])).collect();
        let mut grad = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut flat = 0;
            for k in 0..d {
                let (i, _) = cells[k];
                flat += if corner >> k & 1 == 1 { i + 1 } else { i } * strides[k];
            }
            let v = values[flat];
            for (g, axis) in grad.iter_mut().zip(0..d) {
                let mut w = 1.0;
                for k in 0..d {
                    let (i, t) = cells[k];
                    let up = corner >> k & 1 == 1;
                    if k == axis {
                        let h = self.axes[k][i + 1] - self.axes[k][i];
                        w *= if up { 1.0 / h } else { -1.0 / h };
                    } else {
                        w *= if up { t } else { 1.0 - t };
                    }
                }
                *g += w * v;
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let lat = Lattice::new(vec![vec![0.0, 0.5, 2.0], vec![-1.0, 1.0]]).unwrap();
        let f = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 0.5;
        let vals: Vec<f64> = lat.nodes().iter().map(|x| f(x)).collect();
        for x in [[0.2, 0.3], [1.7, -0.9], [0.5, 1.0]] {
            assert!((lat.interpolate(&vals, &x) - f(&x)).abs() < 1e-14);
            let g = lat.interpolate_gradient(&vals, &x);
            assert!((g[0] - 3.0).abs() < 1e-13 && (g[1] + 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_and_multi_index_round_trip() {
        let lat = Lattice::uniform(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[3, 4, 5]).unwrap();
        for i in 0..lat.len() {
            assert_eq!(lat.flat_index(&lat.multi_index(i)), i);
        }
    }
}
