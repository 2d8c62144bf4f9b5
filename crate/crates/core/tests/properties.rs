use proptest::prelude::*;
use varhjb::hamiltonian::{eval_hamiltonian, HamiltonianModel, HamiltonianOptions};
use varhjb::jump::{dv_cost, DvOptions, JumpRateField};
use varhjb::legendre::{legendre_lagrangian, legendre_lagrangian_from};
use varhjb::models::birth_death::{make_one_sided_model, make_two_sided_model};
use varhjb::models::flux::default_flux_model;
use varhjb::models::quadratic::{
    default_quadratic_model, make_quadratic_model, quadratic_eigen_hamiltonian, QuadraticLambda, QuadraticSpec,
};
use varhjb::torus::{dv_cost_torus, TorusGridOperator};

use nalgebra::DMatrix;

fn h(model: &HamiltonianModel, x: &[f64], p: &[f64]) -> f64 {
    eval_hamiltonian(model, x, p, &HamiltonianOptions::default()).unwrap().value
}

fn quadratic_1d() -> HamiltonianModel {
    default_quadratic_model(1).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        ..ProptestConfig::default()
    }
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| r / s).collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn quadratic_hamiltonian_is_convex_in_momentum(
        x in -5.0..5.0f64, p1 in -4.0..4.0f64, p2 in -4.0..4.0f64, s in 0.0..=1.0f64,
    ) {
        let m = quadratic_1d();
        let mid = h(&m, &[x], &[s * p1 + (1.0 - s) * p2]);
        let chord = s * h(&m, &[x], &[p1]) + (1.0 - s) * h(&m, &[x], &[p2]);
        prop_assert!(mid <= chord + 1e-8, "mid {mid} chord {chord}");
    }

    #[test]
    fn birth_death_hamiltonians_are_convex_in_momentum(
        x in 0.0..1.0f64, p1 in -3.0..3.0f64, p2 in -3.0..3.0f64, s in 0.0..=1.0f64,
    ) {
        let models = [
            make_one_sided_model(false, 5.0).unwrap(),
            make_two_sided_model(vec![1.0, 0.5], vec![0.3, 2.0]).unwrap(),
        ];
        for m in &models {
            let mid = h(m, &[x], &[s * p1 + (1.0 - s) * p2]);
            let chord = s * h(m, &[x], &[p1]) + (1.0 - s) * h(m, &[x], &[p2]);
            prop_assert!(mid <= chord + 1e-8, "{}: mid {mid} chord {chord}", m.name);
        }
    }

    #[test]
    fn hamiltonian_vanishes_at_zero_momentum(x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let m2 = default_quadratic_model(2).unwrap();
        prop_assert!(h(&m2, &[x, y], &[0.0, 0.0]).abs() <= 1e-10);
        let two = make_two_sided_model(vec![1.0], vec![1.0]).unwrap();
        prop_assert!(h(&two, &[(x / 5.0)], &[0.0]).abs() <= 1e-10);
    }

    #[test]
    fn dominated_control_leaves_hamiltonian_unchanged(x in -5.0..5.0f64, p in -3.0..3.0f64) {
        let m = quadratic_1d();
        let ext = m.with_dominated_control();
        prop_assert!((h(&m, &[x], &[p]) - h(&ext, &[x], &[p])).abs() <= 1e-10);
    }

    #[test]
    fn variational_value_is_the_principal_eigenvalue(
        scales in proptest::collection::vec(0.2..3.0f64, 2..=4),
        off in proptest::collection::vec(0.1..2.0f64, 16),
        x in -5.0..5.0f64,
        p in -3.0..3.0f64,
    ) {
        let j = scales.len();
        let rates: Vec<Vec<f64>> = (0..j)
            .map(|a| (0..j).map(|b| if a == b { 0.0 } else { off[a * 4 + b] }).collect())
            .collect();
        let spec = QuadraticSpec::isotropic(1, &scales);
        let field = JumpRateField::constant(rates).unwrap();
        let m = make_quadratic_model(&spec, Some(field.clone())).unwrap();
        let eig = quadratic_eigen_hamiltonian(&QuadraticLambda::new(&spec).unwrap(), &field, &[x], &[p]).unwrap();
        let var = h(&m, &[x], &[p]);
        prop_assert!((var - eig).abs() <= 1e-7 * (1.0 + eig.abs()), "variational {var} eigen {eig}");
    }

    #[test]
    fn dv_cost_is_convex_and_nonnegative(
        off in proptest::collection::vec(0.1..2.0f64, 9),
        a in proptest::collection::vec(0.01..1.0f64, 3),
        b in proptest::collection::vec(0.01..1.0f64, 3),
        s in 0.0..=1.0f64,
    ) {
        let r = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { off[i * 3 + j] });
        let (ta, tb) = (simplex(&a), simplex(&b));
        let mix: Vec<f64> = ta.iter().zip(&tb).map(|(u, v)| s * u + (1.0 - s) * v).collect();
        let opts = DvOptions::default();
        let (ia, ib, im) = (dv_cost(&r, &ta, &opts).value, dv_cost(&r, &tb, &opts).value, dv_cost(&r, &mix, &opts).value);
        prop_assert!(ia >= -1e-12 && ib >= -1e-12);
        prop_assert!(im <= s * ia + (1.0 - s) * ib + 1e-8, "mix {im} chord {}", s * ia + (1.0 - s) * ib);
    }

    #[test]
    fn torus_cost_is_rotation_invariant(
        diffusion in proptest::collection::vec(0.5..2.0f64, 8),
        drift in proptest::collection::vec(-0.5..0.5f64, 8),
        raw in proptest::collection::vec(0.05..1.0f64, 8),
        shift in 1usize..8,
    ) {
        let rot = |v: &[f64]| -> Vec<f64> { (0..v.len()).map(|i| v[(i + shift) % v.len()]).collect() };
        let theta = simplex(&raw);
        let opts = DvOptions::default();
        let base = dv_cost_torus(&TorusGridOperator::new(diffusion.clone(), drift.clone()).unwrap(), &theta, &opts);
        let turned = dv_cost_torus(&TorusGridOperator::new(rot(&diffusion), rot(&drift)).unwrap(), &rot(&theta), &opts);
        prop_assert!((base.value - turned.value).abs() <= 1e-9 * (1.0 + base.value.abs()));
    }

    #[test]
    fn torus_cost_agrees_with_jump_cost(
        diffusion in proptest::collection::vec(0.5..2.0f64, 6),
        drift in proptest::collection::vec(-0.5..0.5f64, 6),
        raw in proptest::collection::vec(0.05..1.0f64, 6),
    ) {
        let op = TorusGridOperator::new(diffusion, drift).unwrap();
        let theta = simplex(&raw);
        let opts = DvOptions::default();
        let torus = dv_cost_torus(&op, &theta, &opts).value;
        let jump = dv_cost(&op.rate_matrix(), &theta, &opts).value;
        prop_assert!((torus - jump).abs() <= 1e-9 * (1.0 + jump.abs()), "torus {torus} jump {jump}");
    }

    #[test]
    fn warm_started_transform_matches_cold_start(
        x in -3.0..3.0f64, v in -1.0..1.0f64, hint in -5.0..5.0f64,
    ) {
        let m = quadratic_1d();
        let opts = HamiltonianOptions::default();
        let cold = legendre_lagrangian(&m, &[x], &[v], 50.0, 1e-9, &opts).unwrap();
        let warm = legendre_lagrangian_from(&m, &[x], &[v], 50.0, 1e-9, &opts, Some(&[hint])).unwrap();
        prop_assert!((cold.value - warm.value).abs() <= 1e-8 * (1.0 + cold.value.abs()));
    }

    #[test]
    fn lagrangian_satisfies_fenchel_young(x in -3.0..3.0f64, v in -1.0..1.0f64, p in -4.0..4.0f64) {
        let m = quadratic_1d();
        let l = legendre_lagrangian(&m, &[x], &[v], 50.0, 1e-9, &HamiltonianOptions::default()).unwrap();
        prop_assert!(p * v - h(&m, &[x], &[p]) <= l.value + 1e-8 * (1.0 + l.value.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn flux_hamiltonian_vanishes_at_zero_momentum(
        raw in proptest::collection::vec(0.0..1.0f64, 3),
        flux in proptest::collection::vec(0.0..5.0f64, 3),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let m = default_flux_model(0).unwrap();
        let mut x = simplex(&raw);
        x.extend(flux);
        prop_assert!(h(&m, &x, &[0.0; 6]).abs() <= 1e-10);
    }
}
