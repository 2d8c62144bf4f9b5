/// Principal branch of the Lambert W function on `[0, inf)`, by Halley
/// iteration from `log(1 + z)`.
pub fn lambert_w(z: f64, tol: f64) -> f64 {
    assert!(z >= 0.0, "lambert_w is only implemented for z >= 0");
    if z == 0.0 {
        return 0.0;
    }
    let mut w = z.ln_1p();
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        if f.abs() <= tol * (1.0 + z) {
            break;
        }
        let fp = ew * (w + 1.0);
        let step = f / (fp - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(lambert_w(0.0, 1e-15), 0.0);
        assert!((lambert_w(std::f64::consts::E, 1e-15) - 1.0).abs() < 1e-15);
        let omega = lambert_w(1.0, 1e-15);
        // omega is the fixed point of w = exp(-w)
        assert!((omega - (-omega).exp()).abs() < 1e-15);
        assert!((omega * omega.exp() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn residual_across_scales() {
        for k in -10..=12 {
            let z = 10f64.powi(k);
            let w = lambert_w(z, 1e-15);
            assert!((w * w.exp() - z).abs() <= 1e-13 * (1.0 + z), "z = {z}");
        }
    }
}
