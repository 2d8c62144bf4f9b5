//! Scalar fields on the state space: closures with gradients, and values
//! on rectilinear lattices with multilinear interpolation.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::vecops::fd_step;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Known bound on `sup |f|`.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = fd_step(x);
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                y[k] = x[k] + h;
                let up = self.value(&y);
                y[k] = x[k] - h;
                let down = self.value(&y);
                y[k] = x[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

type Func = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFunc = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A field given by closures; the gradient falls back to central differences.
#[derive(Clone)]
pub struct SmoothField {
    dim: usize,
    value: Func,
    gradient: Option<GradFunc>,
    bound: Option<f64>,
}

impl SmoothField {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: None,
            bound: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c)
            .with_gradient(move |_| vec![0.0; dim])
            .with_bound(c.abs())
    }
}

impl ScalarField for SmoothField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn sup_bound(&self) -> Option<f64> {
        self.bound
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => {
                let h = fd_step(x);
                let mut y = x.to_vec();
                (0..x.len())
                    .map(|k| {
                        y[k] = x[k] + h;
                        let up = (self.value)(&y);
                        y[k] = x[k] - h;
                        let down = (self.value)(&y);
                        y[k] = x[k];
                        (up - down) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }
}

/// Node values on a lattice. Off-lattice points are clamped to the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::Dimension(format!(
                "{} values for a lattice of {} nodes",
                values.len(),
                lattice.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {i}")));
        }
        Ok(Self { lattice, values })
    }

    pub fn sample(lattice: Lattice, field: &dyn ScalarField) -> Self {
        let values = lattice.nodes().iter().map(|x| field.value(x)).collect();
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, c: f64) -> Self {
        let n = lattice.len();
        Self {
            lattice,
            values: vec![c; n],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Node of the largest value.
    pub fn argmax(&self) -> Vec<f64> {
        let i = (0..self.values.len())
            .max_by(|a, b| self.values[*a].total_cmp(&self.values[*b]))
            .unwrap_or(0);
        self.lattice.node(i)
    }

    /// Node-wise combination with another function on the same lattice.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.lattice != other.lattice {
            return Err(Error::Dimension("grid functions live on different lattices".into()));
        }
        Ok(GridFunction {
            lattice: self.lattice.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

impl ScalarField for GridFunction {
    fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values, x)
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(self.sup_norm())
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.lattice.interpolate_gradient(&self.values, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_affine_field_interpolates_exactly() {
        let lat = Lattice::uniform(&[-1.0], &[2.0], &[7]).unwrap();
        let f = SmoothField::new(1, |x| 2.0 * x[0] - 1.0);
        let g = GridFunction::sample(lat, &f);
        assert!((g.value(&[0.37]) - (2.0 * 0.37 - 1.0)).abs() < 1e-14);
        assert!((g.gradient(&[0.37])[0] - 2.0).abs() < 1e-12);
        assert!((f.gradient(&[0.1])[0] - 2.0).abs() < 1e-8);
        assert_eq!(g.argmax(), vec![2.0]);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let lat = Lattice::uniform(&[0.0], &[1.0], &[3]).unwrap();
        assert!(GridFunction::new(lat, vec![1.0; 2]).is_err());
    }
}
