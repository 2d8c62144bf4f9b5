//! Small maximizers over convex sets: projected Newton for chain-structured
//! objectives and compass search.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Stop when `|P(x + grad) - x|_inf` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Variables come in blocks of this size; a block interacts only with
    /// its two neighbours, so the Hessian is block-tridiagonal.
    pub block: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            block: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected Levenberg-Newton ascent for objectives whose Hessian is
/// block-tridiagonal. The Hessian comes from forward differences of the
/// gradient, perturbing every third block at once. Coordinates pinned at
/// the boundary by the gradient are frozen for the Newton step. `f`
/// returns the value and gradient, with `-inf` at infeasible points;
/// `project` maps onto the feasible set in place.
pub fn banded_newton_maximize<F, P>(f: F, project: P, x0: &[f64], opts: &NewtonOptions) -> OptimResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let b = opts.block.max(1);
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x);
    let stationarity = |x: &[f64], g: &[f64]| {
        let mut probe: Vec<f64> = x.iter().zip(g).map(|(a, c)| a + c).collect();
        project(&mut probe);
        probe.iter().zip(x).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()))
    };
    // Whether coordinate `j` can move by `t` without leaving the set.
    let movable = |x: &[f64], j: usize, t: f64| {
        let mut q = x.to_vec();
        q[j] += t;
        project(&mut q);
        (q[j] - x[j] - t).abs() < 0.5 * t.abs()
    };
    let mut mu = 1e-10;
    for it in 0..opts.max_iter {
        let stat = stationarity(&x, &g);
        if stat <= opts.tol {
            return OptimResult {
                x,
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let blocks = n.div_ceil(b);
        for color in 0..3 {
            for i in 0..b {
                let mut q = x.clone();
                let mut steps = vec![0.0; n];
                for k in (color..blocks).step_by(3) {
                    let j = k * b + i;
                    if j >= n {
                        continue;
                    }
                    let s = 1e-6 * (1.0 + x[j].abs());
                    steps[j] = if movable(&x, j, s) { s } else { -s };
                    q[j] += steps[j];
                }
                let (fq, gq) = f(&q);
                if !fq.is_finite() {
                    continue;
                }
                for k in (color..blocks).step_by(3) {
                    let j = k * b + i;
                    if j >= n {
                        continue;
                    }
                    let lo = k.saturating_sub(1) * b;
                    let hi = ((k + 2) * b).min(n);
                    for r in lo..hi {
                        hess[(r, j)] = (gq[r] - g[r]) / steps[j];
                    }
                }
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let free: Vec<usize> = (0..n)
            .filter(|&j| g[j] == 0.0 || movable(&x, j, 1e-8 * (1.0 + x[j].abs()) * g[j].signum()))
            .collect();
        let m = free.len();
        let scale = 1.0 + (0..n).fold(0.0f64, |a, j| a.max(hess[(j, j)].abs()));
        let gf = DVector::from_iterator(m, free.iter().map(|&j| g[j]));
        let mut step = None;
        for _ in 0..40 {
            let mut a = DMatrix::<f64>::zeros(m, m);
            for (r, &jr) in free.iter().enumerate() {
                for (c, &jc) in free.iter().enumerate() {
                    a[(r, c)] = -hess[(jr, jc)];
                }
                a[(r, r)] += mu * scale;
            }
            if let Some(ch) = a.cholesky() {
                step = Some(ch.solve(&gf));
                break;
            }
            mu = (mu * 10.0).max(1e-10);
        }
        let mut accepted = None;
        if let Some(dir) = step {
            let mut t = 1.0;
            while t > 1e-12 {
                let mut trial = x.clone();
                for (r, &j) in free.iter().enumerate() {
                    trial[j] += t * dir[r];
                }
                project(&mut trial);
                let gain: f64 = trial.iter().zip(&x).zip(&g).map(|((a, c), gi)| (a - c) * gi).sum();
                let (ft, gt) = f(&trial);
                if ft.is_finite() && gain > 0.0 && ft >= fx + 1e-4 * gain {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                t *= 0.5;
            }
            mu = if accepted.is_some() && t == 1.0 { (mu * 0.1).max(1e-12) } else { mu * 10.0 };
        }
        if accepted.is_none() {
            // Projected gradient fallback.
            let mut t = 1.0 / scale;
            while t > 1e-16 / scale {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, c)| a + t * c).collect();
                project(&mut trial);
                let gain: f64 = trial.iter().zip(&x).zip(&g).map(|((a, c), gi)| (a - c) * gi).sum();
                let (ft, gt) = f(&trial);
                if ft.is_finite() && gain > 0.0 && ft >= fx + 1e-4 * gain {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                t *= 0.25;
            }
        }
        let Some((xn, fnew, gn)) = accepted else {
            // No representable ascent left: accept if nearly stationary.
            return OptimResult {
                x,
                value: fx,
                iterations: it,
                converged: stat <= 1e3 * opts.tol,
            };
        };
        x = xn;
        fx = fnew;
        g = gn;
    }
    let converged = stationarity(&x, &g) <= opts.tol;
    OptimResult {
        x,
        value: fx,
        iterations: opts.max_iter,
        converged,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PatternOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

impl Default for PatternOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-10,
            max_evals: 20_000,
        }
    }
}

/// Compass search maximizing `f` over the box `[lower, upper]`. Steps are
/// relative to the box widths.
pub fn compass_maximize<F>(f: F, lower: &[f64], upper: &[f64], x0: &[f64], opts: &PatternOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = opts.initial_step;
    let mut last_dir: Option<(usize, f64)> = None;
    while step >= opts.min_step && evals < opts.max_evals {
        let mut improved = false;
        // Retry the last successful direction first.
        let mut dirs: Vec<(usize, f64)> = Vec::with_capacity(2 * n + 1);
        if let Some(d) = last_dir {
            dirs.push(d);
        }
        for i in 0..n {
            dirs.push((i, 1.0));
            dirs.push((i, -1.0));
        }
        for (i, sgn) in dirs {
            let width = (upper[i] - lower[i]).max(1e-300);
            let mut trial = x.clone();
            trial[i] += sgn * step * width;
            clamp(&mut trial);
            if trial[i] == x[i] {
                continue;
            }
            let ft = f(&trial);
            evals += 1;
            if ft > fx {
                x = trial;
                fx = ft;
                improved = true;
                last_dir = Some((i, sgn));
                break;
            }
        }
        if improved {
            step *= 2.0f64.min(opts.initial_step / step.max(1e-300)).max(1.0);
        } else {
            step *= 0.5;
            last_dir = None;
        }
    }
    OptimResult {
        x,
        value: fx,
        iterations: evals,
        converged: step < opts.min_step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_constrained_maximum() {
        // maximize -(x - 2)^2 - (y + 1)^2 over [0, 1]^2: optimum (1, 0)
        let f = |x: &[f64]| {
            let v = -(x[0] - 2.0).powi(2) - (x[1] + 1.0).powi(2);
            (v, vec![-2.0 * (x[0] - 2.0), -2.0 * (x[1] + 1.0)])
        };
        let proj = |x: &mut [f64]| {
            for v in x.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        };
        let r = banded_newton_maximize(f, proj, &[0.5, 0.5], &NewtonOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && r.x[1].abs() < 1e-9);
    }

    #[test]
    fn newton_on_an_ill_conditioned_chain() {
        // -sum c_k (x_k - x_{k-1})^2 - (x_0 - 1)^2 - (x_n + 1)^2 with wildly varying c_k.
        let n = 30;
        let c: Vec<f64> = (0..=n).map(|k| 10f64.powf(k as f64 / 5.0 - 3.0)).collect();
        let f = |x: &[f64]| {
            let mut v = -(x[0] - 1.0).powi(2) - (x[n - 1] + 1.0).powi(2);
            let mut g = vec![0.0; n];
            g[0] = -2.0 * (x[0] - 1.0);
            g[n - 1] = -2.0 * (x[n - 1] + 1.0);
            for k in 1..n {
                let d = x[k] - x[k - 1];
                v -= c[k] * d * d;
                g[k] -= 2.0 * c[k] * d;
                g[k - 1] += 2.0 * c[k] * d;
            }
            (v, g)
        };
        let r = banded_newton_maximize(f, |_x: &mut [f64]| {}, &vec![0.0; n], &NewtonOptions::default());
        assert!(r.converged, "{r:?}");
        assert!(r.iterations < 10);
        let (_, g) = f(&r.x);
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn newton_respects_an_infeasible_region() {
        // maximize log(x) - x over x > 0, reported as -inf elsewhere.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::NEG_INFINITY, vec![0.0])
            } else {
                (x[0].ln() - x[0], vec![1.0 / x[0] - 1.0])
            }
        };
        let r = banded_newton_maximize(f, |_x: &mut [f64]| {}, &[30.0], &NewtonOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn compass_search_reaches_an_interior_peak() {
        let f = |x: &[f64]| -((x[0] - 0.25).powi(2) + 3.0 * (x[1] - 0.6).powi(2));
        let r = compass_maximize(f, &[0.0, 0.0], &[1.0, 1.0], &[0.9, 0.1], &PatternOptions::default());
        assert!((r.x[0] - 0.25).abs() < 1e-8 && (r.x[1] - 0.6).abs() < 1e-8);
    }
}
