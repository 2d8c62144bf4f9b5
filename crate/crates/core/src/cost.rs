//! Control costs `I(x, theta)` on the probability simplex.

use crate::error::{Error, Result};
use crate::jump::{dv_cost, DvOptions, JumpRateField};
use crate::torus::{dv_cost_torus, TorusField};
use nalgebra::DMatrix;
use std::sync::Arc;

/// How many derivatives a cost evaluation should return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Clone, Debug)]
pub struct CostEval {
    /// Cost value; `+inf` marks an infeasible control.
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<DMatrix<f64>>,
    pub possibly_unbounded: bool,
}

impl CostEval {
    pub fn value(value: f64) -> Self {
        Self {
            value,
            gradient: None,
            hessian: None,
            possibly_unbounded: false,
        }
    }
}

pub trait ControlCost: Send + Sync {
    fn control_dim(&self) -> usize;

    fn evaluate(&self, x: &[f64], theta: &[f64], order: Order) -> CostEval;

    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.evaluate(x, theta, Order::Value).value
    }

    /// A control with zero cost at `x`.
    fn zero_cost_control(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn convex(&self) -> bool {
        true
    }

    /// Underlying jump rates, when the cost is an occupation cost of a jump
    /// process. Used for explicit continuity bounds.
    fn jump_rates(&self) -> Option<&JumpRateField> {
        None
    }

    /// Known bound `sup_theta I(x, theta)`.
    fn upper_bound(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

/// `I = 0` on the whole simplex.
#[derive(Clone, Debug)]
pub struct ZeroCost {
    pub controls: usize,
}

impl ControlCost for ZeroCost {
    fn control_dim(&self) -> usize {
        self.controls
    }

    fn evaluate(&self, _x: &[f64], _theta: &[f64], order: Order) -> CostEval {
        CostEval {
            value: 0.0,
            gradient: (order >= Order::Gradient).then(|| vec![0.0; self.controls]),
            hessian: (order >= Order::Hessian)
                .then(|| DMatrix::zeros(self.controls, self.controls)),
            possibly_unbounded: false,
        }
    }

    fn zero_cost_control(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.controls as f64; self.controls])
    }

    fn upper_bound(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn describe(&self) -> String {
        format!("zero cost on {} controls", self.controls)
    }
}

/// Occupation cost of a state-dependent jump process.
#[derive(Clone, Debug)]
pub struct JumpDvCost {
    pub field: JumpRateField,
    pub options: DvOptions,
}

impl JumpDvCost {
    pub fn new(field: JumpRateField) -> Self {
        Self {
            field,
            options: DvOptions::default(),
        }
    }
}

impl ControlCost for JumpDvCost {
    fn control_dim(&self) -> usize {
        self.field.states()
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], order: Order) -> CostEval {
        let opts = DvOptions {
            want_hessian: order >= Order::Hessian,
            ..self.options
        };
        let sol = dv_cost(&self.field.rate_matrix(x), theta, &opts);
        CostEval {
            value: sol.value,
            gradient: (order >= Order::Gradient).then_some(sol.gradient),
            hessian: sol.hessian,
            possibly_unbounded: sol.possibly_unbounded,
        }
    }

    fn zero_cost_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.field.stationary_control(x)
    }

    fn jump_rates(&self) -> Option<&JumpRateField> {
        Some(&self.field)
    }

    fn upper_bound(&self, x: &[f64]) -> Option<f64> {
        Some(self.field.max_outflow(x))
    }

    fn describe(&self) -> String {
        format!("jump occupation cost on {} states", self.field.states())
    }
}

/// Occupation cost of a periodic diffusion discretized on `cells` nodes.
#[derive(Clone, Debug)]
pub struct TorusDvCost {
    pub field: TorusField,
    pub options: DvOptions,
}

impl TorusDvCost {
    pub fn new(field: TorusField) -> Result<Self> {
        field.operator(&[])?;
        Ok(Self {
            field,
            options: DvOptions::default(),
        })
    }
}

impl ControlCost for TorusDvCost {
    fn control_dim(&self) -> usize {
        self.field.cells
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], order: Order) -> CostEval {
        let op = match self.field.operator(x) {
            Ok(op) => op,
            Err(e) => {
                log::warn!("torus cost unavailable at {x:?}: {e}");
                return CostEval::value(f64::INFINITY);
            }
        };
        let opts = DvOptions {
            want_hessian: order >= Order::Hessian,
            ..self.options
        };
        let sol = dv_cost_torus(&op, theta, &opts);
        CostEval {
            value: sol.value,
            gradient: (order >= Order::Gradient).then_some(sol.gradient),
            hessian: sol.hessian,
            possibly_unbounded: sol.possibly_unbounded,
        }
    }

    fn zero_cost_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::jump::stationary_control(&self.field.operator(x)?.generator())
    }

    fn upper_bound(&self, x: &[f64]) -> Option<f64> {
        let op = self.field.operator(x).ok()?;
        let (up, down) = op.neighbour_rates();
        Some(up.iter().zip(&down).map(|(u, d)| u + d).fold(0.0, f64::max))
    }

    fn describe(&self) -> String {
        format!("periodic diffusion occupation cost on {} cells", self.field.cells)
    }
}

/// Appends one control whose cost is `+inf` whenever it carries mass.
pub struct DominatedExtension {
    pub inner: Arc<dyn ControlCost>,
}

impl ControlCost for DominatedExtension {
    fn control_dim(&self) -> usize {
        self.inner.control_dim() + 1
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], order: Order) -> CostEval {
        let j = self.inner.control_dim();
        if theta[j] > 0.0 {
            return CostEval::value(f64::INFINITY);
        }
        let mut e = self.inner.evaluate(x, &theta[..j], order);
        if let Some(g) = e.gradient.as_mut() {
            g.push(f64::INFINITY);
        }
        if let Some(h) = e.hessian.take() {
            let mut big = DMatrix::zeros(j + 1, j + 1);
            big.view_mut((0, 0), (j, j)).copy_from(&h);
            e.hessian = Some(big);
        }
        e
    }

    fn zero_cost_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut t = self.inner.zero_cost_control(x)?;
        t.push(0.0);
        Ok(t)
    }

    fn convex(&self) -> bool {
        self.inner.convex()
    }

    fn describe(&self) -> String {
        format!("{} plus one forbidden control", self.inner.describe())
    }
}

/// Checks that a cost is defined for the claimed number of controls.
pub fn check_cost_dim(cost: &dyn ControlCost, controls: usize) -> Result<()> {
    if cost.control_dim() != controls {
        return Err(Error::Dimension(format!(
            "cost acts on {} controls but the Hamiltonian has {}",
            cost.control_dim(),
            controls
        )));
    }
    Ok(())
}
