use varhjb::grid::{GridFunction, SmoothField};
use varhjb::io::{read_grid_function, write_grid_function, GridMeta};
use varhjb::lattice::Lattice;
use varhjb::models::birth_death::make_two_sided_model;
use varhjb::resolvent::{grid_residual, resolvent_grid, GridOptions};

fn lattice(nodes: usize) -> Lattice {
    Lattice::uniform(&[-1.0], &[1.0], &[nodes]).unwrap()
}

#[test]
fn ordered_right_hand_sides_give_ordered_resolvents() {
    let model = make_two_sided_model(vec![1.0], vec![1.0]).unwrap();
    let lat = lattice(81);
    let low = GridFunction::sample(lat.clone(), &SmoothField::new(1, |x| 0.5 * (-x[0] * x[0]).exp() - 0.3));
    let high = GridFunction::sample(lat, &SmoothField::new(1, |x| 0.5 * (-x[0] * x[0]).exp() + 0.1 * x[0].sin()));
    let opts = GridOptions::default();
    let f1 = resolvent_grid(&model, &low, 0.5, &opts).unwrap();
    let f2 = resolvent_grid(&model, &high, 0.5, &opts).unwrap();
    let gap_f = f1.f.zip_with(&f2.f, |a, b| a - b).unwrap().max();
    let gap_h = low.zip_with(&high, |a, b| a - b).unwrap().max();
    assert!(gap_f <= gap_h + 10.0 * opts.tol, "sup(f1 - f2) = {gap_f}, sup(h1 - h2) = {gap_h}");
}

#[test]
fn grid_solution_is_a_numerical_sub_and_supersolution() {
    let model = make_two_sided_model(vec![1.0, 0.4], vec![0.6, 1.0]).unwrap();
    let h = GridFunction::sample(lattice(61), &SmoothField::new(1, |x| (2.0 * x[0]).cos()));
    let opts = GridOptions::default();
    let sol = resolvent_grid(&model, &h, 1.0, &opts).unwrap();
    let residual = grid_residual(&model, &sol.f, &h, 1.0, &opts).unwrap();
    assert!(residual <= 10.0 * opts.tol, "residual {residual}");
}

#[test]
fn solved_grid_survives_a_file_round_trip() {
    let model = make_two_sided_model(vec![1.0], vec![1.0]).unwrap();
    let h = GridFunction::sample(lattice(41), &SmoothField::new(1, |x| x[0] * x[0]));
    let sol = resolvent_grid(&model, &h, 0.5, &GridOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let meta = GridMeta {
        model: model.name.clone(),
        lambda: Some(0.5),
        tolerances: [("grid".to_string(), 1e-9)].into_iter().collect(),
        axes: Vec::new(),
    };
    write_grid_function(&path, &sol.f, &meta).unwrap();
    let (back, meta_back) = read_grid_function(&path).unwrap();
    assert_eq!(back, sol.f);
    assert_eq!(meta_back.axes, sol.f.lattice.axes);
    assert_eq!(meta_back.lambda, Some(0.5));
    assert_eq!(meta_back.model, "birth-death-2s");
}
