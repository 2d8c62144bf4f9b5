//! Explicit integration of `x' in d_p H(x, grad f(x))` with a tangent-cone
//! feasible selection, plus the Lyapunov containment bookkeeping.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hamiltonian::{eval_hamiltonian, min_norm_element, subdifferential_p, HamiltonianModel, HamiltonianOptions};
use crate::legendre::{legendre_lagrangian, DEFAULT_P_RADIUS};
use crate::resolvent::Trajectory;
use crate::vecops::{dist, dot, norm};
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct InclusionOptions {
    /// Largest admissible distance between a selected generator and its
    /// projection onto the tangent cone.
    pub tangent_tol: f64,
    /// Clamp to the verification box (the cut-off region).
    pub cutoff: bool,
    /// Evaluate `L` by the numerical transform even where the Fenchel
    /// equality `L(x, xi) = <xi, p> - H(x, p)` applies.
    pub always_transform: bool,
    pub p_radius: f64,
    pub lagrangian_tol: f64,
    pub hamiltonian: HamiltonianOptions,
}

impl Default for InclusionOptions {
    fn default() -> Self {
        Self {
            tangent_tol: 1e-9,
            cutoff: true,
            always_transform: false,
            p_radius: DEFAULT_P_RADIUS,
            lagrangian_tol: 1e-9,
            hamiltonian: HamiltonianOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InclusionPath {
    pub trajectory: Trajectory,
    /// Containment function along the path.
    pub containment: Vec<f64>,
    /// Upper bound `U(x0) + sum (L + c) dt + sum kappa |dx|^2 / 2` per node.
    pub containment_bound: Vec<f64>,
    /// Largest domain violation over the nodes.
    pub max_violation: f64,
    /// Steps where the cut-off clamp changed the state.
    pub cutoff_steps: usize,
    /// `int H(x, grad f(x)) dt` by the left rule.
    pub hamiltonian_integral: f64,
    /// `int [x' . grad f - L(x, x')] dt` by the left rule.
    pub action_integral: f64,
}

impl InclusionPath {
    /// Whether every node respects the containment bound up to `slack`.
    pub fn contained(&self, slack: f64) -> bool {
        self.containment
            .iter()
            .zip(&self.containment_bound)
            .all(|(u, b)| *u <= b + slack)
    }
}

/// Steps `x_{k+1} = P(x_k + dt xi_k)` for `horizon / dt` steps, with
/// `xi_k` the tangent generator of `d_p H(x_k, grad f(x_k))` closest to the
/// previous velocity. Fails with [`Error::TangentCone`] when no generator
/// lies in the tangent cone within `tangent_tol`.
pub fn integrate_inclusion(
    model: &HamiltonianModel,
    f: &dyn ScalarField,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    opts: &InclusionOptions,
) -> Result<InclusionPath> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidInput("dt must be positive and the horizon nonnegative".into()));
    }
    if !model.domain.contains(x0, 1e-12) {
        return Err(Error::InvalidInput(format!("start {x0:?} lies outside the domain")));
    }
    let steps = (horizon / dt).round() as usize;
    let d = model.dim();
    let (lower, upper) = &model.verification_box;
    let upsilon = &model.containment;
    let kappa = upsilon.curvature_bound();

    let mut x = x0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut velocities = Vec::with_capacity(steps);
    let mut running_cost = Vec::with_capacity(steps);
    let mut containment = vec![upsilon.value(&x)];
    let mut containment_bound = containment.clone();
    let mut previous: Option<Vec<f64>> = None;
    let mut cutoff_steps = 0;
    let mut ham_integral = 0.0;
    let mut action_integral = 0.0;
    let mut bound = containment[0];

    for k in 0..steps {
        let p = f.gradient(&x);
        let mut candidates = subdifferential_p(model, &x, &p, &opts.hamiltonian)?;
        if candidates.len() > 1 {
            candidates.push(min_norm_element(&candidates));
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut worst_residual = f64::INFINITY;
        for g in candidates {
            let tangent = model.domain.project_tangent(&x, &g);
            let residual = dist(&g, &tangent);
            worst_residual = worst_residual.min(residual);
            if residual > opts.tangent_tol {
                continue;
            }
            let score = previous.as_ref().map_or(norm(&tangent), |v| dist(&tangent, v));
            if best.as_ref().is_none_or(|b| score < b.1) {
                best = Some((tangent, score));
            }
        }
        let Some((xi, _)) = best else {
            return Err(Error::TangentCone {
                state: x,
                residual: worst_residual,
            });
        };

        let mut next = model.domain.project(&x.iter().zip(&xi).map(|(a, b)| a + dt * b).collect::<Vec<_>>());
        if opts.cutoff {
            let clamped: Vec<f64> = next.iter().enumerate().map(|(i, v)| v.clamp(lower[i], upper[i])).collect();
            if clamped != next {
                if cutoff_steps == 0 {
                    log::warn!("inclusion path reached the cut-off box at t = {}", k as f64 * dt);
                }
                cutoff_steps += 1;
                next = model.domain.project(&clamped);
            }
        }
        let v: Vec<f64> = (0..d).map(|i| (next[i] - x[i]) / dt).collect();
        let h = eval_hamiltonian(model, &x, &p, &opts.hamiltonian)?.value;
        let unmodified = dist(&v, &xi) <= 1e-12 * (1.0 + norm(&xi));
        let l = if unmodified && !opts.always_transform {
            dot(&v, &p) - h
        } else {
            legendre_lagrangian(model, &x, &v, opts.p_radius, opts.lagrangian_tol, &opts.hamiltonian)?.value
        };
        ham_integral += dt * h;
        action_integral += dt * (dot(&v, &p) - l);

        let dx2: f64 = (0..d).map(|i| (next[i] - x[i]).powi(2)).sum();
        bound += dt * (l + upsilon.bound) + 0.5 * kappa * dx2;
        x = next;
        times.push((k + 1) as f64 * dt);
        states.push(x.clone());
        running_cost.push(dt * l);
        velocities.push(v);
        containment.push(upsilon.value(&x));
        containment_bound.push(bound);
        previous = Some(xi);
    }
    let max_violation = states.iter().map(|s| model.domain.violation(s)).fold(0.0, f64::max);
    Ok(InclusionPath {
        trajectory: Trajectory {
            times,
            states,
            velocities,
            running_cost,
        },
        containment,
        containment_bound,
        max_violation,
        cutoff_steps,
        hamiltonian_integral: ham_integral,
        action_integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SmoothField;
    use crate::models::quadratic::{make_quadratic_model, QuadraticSpec};

    #[test]
    fn linear_test_function_gives_a_straight_line() {
        let m = make_quadratic_model(&QuadraticSpec::isotropic(2, &[0.5]), None).unwrap();
        let f = SmoothField::new(2, |x| 0.3 * x[0] - 0.2 * x[1]).with_gradient(|_| vec![0.3, -0.2]);
        let opts = InclusionOptions {
            always_transform: true,
            ..Default::default()
        };
        let path = integrate_inclusion(&m, &f, &[0.0, 0.0], 1.0, 0.01, &opts).unwrap();
        let last = path.trajectory.states.last().unwrap();
        assert!((last[0] - 0.3).abs() < 1e-9 && (last[1] + 0.2).abs() < 1e-9, "{last:?}");
        assert!(path.trajectory.velocities.iter().all(|v| dist(v, &[0.3, -0.2]) < 1e-9));
        assert!((path.action_integral - path.hamiltonian_integral).abs() < 1e-8);
        assert!(path.contained(1e-9));
    }

    #[test]
    fn bad_input_is_rejected() {
        let m = make_quadratic_model(&QuadraticSpec::isotropic(1, &[0.5]), None).unwrap();
        let f = SmoothField::constant(1, 0.0);
        assert!(integrate_inclusion(&m, &f, &[0.0], 1.0, 0.0, &InclusionOptions::default()).is_err());
    }
}
