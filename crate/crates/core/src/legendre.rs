//! The Lagrangian `L(x, v) = sup_p [<p, v> - H(x, p)]`, restricted to the
//! ball `|p| <= p_radius`.

use crate::error::Result;
use crate::hamiltonian::{eval_hamiltonian, hamiltonian_with_slope, HamiltonianModel, HamiltonianOptions};
use crate::vecops::{dot, norm};
use nalgebra::{DMatrix, DVector};

/// Default momentum ball radius.
pub const DEFAULT_P_RADIUS: f64 = 50.0;

#[derive(Clone, Debug)]
pub struct LagrangianValue {
    /// `+inf` when the objective still increases at the ball boundary.
    pub value: f64,
    /// The maximizing momentum, which is also `grad_v L`.
    pub momentum: Vec<f64>,
}

impl LagrangianValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn infinite(p: Vec<f64>) -> LagrangianValue {
    LagrangianValue {
        value: f64::INFINITY,
        momentum: p,
    }
}

/// Evaluates `L(x, v)`.
pub fn legendre_lagrangian(
    model: &HamiltonianModel,
    x: &[f64],
    v: &[f64],
    p_radius: f64,
    tol: f64,
    opts: &HamiltonianOptions,
) -> Result<LagrangianValue> {
    legendre_lagrangian_from(model, x, v, p_radius, tol, opts, None)
}

/// [`legendre_lagrangian`] with the search started at `start`, typically
/// the maximizer at a nearby `(x, v)`.
pub fn legendre_lagrangian_from(
    model: &HamiltonianModel,
    x: &[f64],
    v: &[f64],
    p_radius: f64,
    tol: f64,
    opts: &HamiltonianOptions,
    start: Option<&[f64]>,
) -> Result<LagrangianValue> {
    if model.dim() == 1 {
        scalar(model, x, v[0], p_radius, tol, opts, start.map(|s| s[0]))
    } else {
        vector(model, x, v, p_radius, tol, opts, start)
    }
}

/// Outcome of walking from a start point towards the sign change of a
/// nonincreasing slope.
enum Bracket {
    Root(f64, f64),
    /// Reached the ball boundary with the slope still pointing outward:
    /// `(p, slope, H)`.
    Edge(f64, f64, f64),
    /// `(a, slope_a, H_a)`, `(b, slope_b, H_b)` with `slope_a > 0 > slope_b`.
    Interval((f64, f64, f64), (f64, f64, f64)),
}

fn bracket_from(
    slope: impl Fn(f64) -> Result<(f64, f64)>,
    p0: f64,
    radius: f64,
    flat: f64,
) -> Result<Bracket> {
    let (mut g0, mut h0) = slope(p0)?;
    let mut p = p0;
    let mut step = 1e-3 * (1.0 + p0.abs());
    loop {
        if g0.abs() <= flat {
            return Ok(Bracket::Root(p, h0));
        }
        let dir = g0.signum();
        if p * dir >= radius {
            return Ok(Bracket::Edge(p, g0, h0));
        }
        let q = (p + dir * step).clamp(-radius, radius);
        let (gq, hq) = slope(q)?;
        if gq * dir <= 0.0 {
            return Ok(if dir > 0.0 {
                Bracket::Interval((p, g0, h0), (q, gq, hq))
            } else {
                Bracket::Interval((q, gq, hq), (p, g0, h0))
            });
        }
        (p, g0, h0) = (q, gq, hq);
        step *= 4.0;
    }
}

/// One dimension: the objective's slope `v - H'(p)` is nonincreasing, so
/// its sign change is bracketed and located by Illinois regula falsi with
/// a bisection safeguard.
fn scalar(
    model: &HamiltonianModel,
    x: &[f64],
    v: f64,
    radius: f64,
    tol: f64,
    opts: &HamiltonianOptions,
    start: Option<f64>,
) -> Result<LagrangianValue> {
    let slope = |p: f64| -> Result<(f64, f64)> {
        let (h, g) = hamiltonian_with_slope(model, x, &[p], opts)?;
        Ok((v - g[0], h))
    };
    let finish = |p: f64, h: f64| LagrangianValue {
        value: (p * v - h).max(0.0),
        momentum: vec![p],
    };
    let flat = 1e-13 * (1.0 + v.abs());
    let ((mut a, mut ga, ha), (mut b, mut gb, hb)) = match start {
        Some(p0) => match bracket_from(&slope, p0.clamp(-radius, radius), radius, flat)? {
            Bracket::Root(p, h) => return Ok(finish(p, h)),
            Bracket::Edge(p, g, h) => {
                return Ok(if g.abs() > tol { infinite(vec![p]) } else { finish(p, h) });
            }
            Bracket::Interval(lo, hi) => (lo, hi),
        },
        None => {
            let (ga, ha) = slope(-radius)?;
            let (gb, hb) = slope(radius)?;
            if gb > tol {
                return Ok(infinite(vec![radius]));
            }
            if ga < -tol {
                return Ok(infinite(vec![-radius]));
            }
            if gb >= 0.0 {
                return Ok(finish(radius, hb));
            }
            if ga <= 0.0 {
                return Ok(finish(-radius, ha));
            }
            ((-radius, ga, ha), (radius, gb, hb))
        }
    };
    let mut side = 0i8;
    let mut best = if ga.abs() <= gb.abs() { (a, ha, ga.abs()) } else { (b, hb, gb.abs()) };
    for _ in 0..200 {
        let width = b - a;
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let (gc, hc) = slope(c)?;
        if gc.abs() < best.2 {
            best = (c, hc, gc.abs());
        }
        if gc.abs() <= flat || width <= 1e-13 * (1.0 + c.abs()) {
            break;
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    Ok(finish(best.0, best.1))
}

/// Several dimensions: Levenberg-regularized Newton ascent on the ball with
/// a finite-difference Hessian of `H`.
fn vector(
    model: &HamiltonianModel,
    x: &[f64],
    v: &[f64],
    radius: f64,
    tol: f64,
    opts: &HamiltonianOptions,
    start: Option<&[f64]>,
) -> Result<LagrangianValue> {
    let d = v.len();
    let objective = |p: &[f64]| -> Result<f64> { Ok(dot(p, v) - eval_hamiltonian(model, x, p, opts)?.value) };
    let grad_at = |p: &[f64]| -> Result<Vec<f64>> {
        let (_, g) = hamiltonian_with_slope(model, x, p, opts)?;
        Ok(v.iter().zip(&g).map(|(a, b)| a - b).collect())
    };
    let project = |p: Vec<f64>| -> Vec<f64> {
        let n = norm(&p);
        if n > radius {
            p.into_iter().map(|c| c * radius / n).collect()
        } else {
            p
        }
    };
    let mut p = start.map_or_else(|| vec![0.0; d], |s| project(s.to_vec()));
    let mut f = objective(&p)?;
    let mut mu = 1e-8;
    for _ in 0..300 {
        let g = grad_at(&p)?;
        let n = norm(&p);
        let on_ball = n >= radius * (1.0 - 1e-12);
        if on_ball {
            let radial = dot(&g, &p) / n;
            let tangential: Vec<f64> = g.iter().zip(&p).map(|(gi, pi)| gi - radial * pi / n).collect();
            if radial > tol && norm(&tangential) <= tol.max(1e-9 * (1.0 + radial)) {
                return Ok(infinite(p));
            }
        }
        if norm(&g) <= 1e-11 * (1.0 + norm(v)) {
            break;
        }
        let hess = fd_hessian(model, x, &p, opts)?;
        let mut improved = false;
        for _ in 0..30 {
            let scale = 1.0 + hess.diagonal().amax();
            let mut m = hess.clone();
            for i in 0..d {
                m[(i, i)] += mu * scale;
            }
            let step = m
                .lu()
                .solve(&DVector::from_column_slice(&g))
                .unwrap_or_else(|| DVector::from_column_slice(&g));
            let trial = project(p.iter().zip(step.iter()).map(|(a, s)| a + s).collect());
            let ft = objective(&trial)?;
            if ft > f {
                p = trial;
                f = ft;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let g = grad_at(&p)?;
    let n = norm(&p);
    if n >= radius * (1.0 - 1e-9) && dot(&g, &p) / n > tol {
        return Ok(infinite(p));
    }
    Ok(LagrangianValue {
        value: f.max(0.0),
        momentum: p,
    })
}

fn fd_hessian(model: &HamiltonianModel, x: &[f64], p: &[f64], opts: &HamiltonianOptions) -> Result<DMatrix<f64>> {
    let d = p.len();
    let h = 1e-5 * (1.0 + norm(p));
    let mut out = DMatrix::zeros(d, d);
    let mut q = p.to_vec();
    for k in 0..d {
        q[k] = p[k] + h;
        let (_, up) = hamiltonian_with_slope(model, x, &q, opts)?;
        q[k] = p[k] - h;
        let (_, down) = hamiltonian_with_slope(model, x, &q, opts)?;
        q[k] = p[k];
        for i in 0..d {
            out[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok((&out + out.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::birth_death::make_one_sided_model;
    use crate::models::quadratic::{make_quadratic_model, QuadraticSpec};

    #[test]
    fn conjugate_of_half_square() {
        let m = make_quadratic_model(&QuadraticSpec::isotropic(1, &[0.5]), None).unwrap();
        let o = HamiltonianOptions::default();
        for v in [-3.0, -0.2, 0.0, 1.0, 7.5] {
            let l = legendre_lagrangian(&m, &[0.0], &[v], 50.0, 1e-9, &o).unwrap();
            assert!((l.value - 0.5 * v * v).abs() < 1e-10, "v = {v}: {}", l.value);
            assert!((l.momentum[0] - v).abs() < 1e-8);
        }
    }

    #[test]
    fn conjugate_in_two_dimensions() {
        let m = make_quadratic_model(&QuadraticSpec::isotropic(2, &[0.5]), None).unwrap();
        let o = HamiltonianOptions::default();
        let l = legendre_lagrangian(&m, &[0.0, 0.0], &[1.0, -2.0], 50.0, 1e-9, &o).unwrap();
        assert!((l.value - 2.5).abs() < 1e-7, "{}", l.value);
    }

    #[test]
    fn birth_death_effective_domain() {
        let m = make_one_sided_model(false, 5.0).unwrap();
        let o = HamiltonianOptions::default();
        let up = legendre_lagrangian(&m, &[1.0], &[0.5], 50.0, 1e-9, &o).unwrap();
        assert!(up.value.is_infinite());
        // H = x (e^{-p} - 1), so L(x, v) = -v log(-v / x) + v + x for v < 0.
        let (x, v) = (2.0f64, -0.5f64);
        let exact = -v * (-v / x).ln() + v + x;
        let l = legendre_lagrangian(&m, &[x], &[v], 50.0, 1e-9, &o).unwrap();
        assert!((l.value - exact).abs() < 1e-10, "{} vs {exact}", l.value);
        let rest = legendre_lagrangian(&m, &[x], &[0.0], 50.0, 1e-9, &o).unwrap();
        assert!((rest.value - x).abs() < 1e-9);
    }
}
