mod common;

use common::*;
use jpdl::coder::{update_all_codes, update_codes_class, ClassObjective};
use jpdl::dictionary::StructuredDictionary;
use jpdl::graph::build_graph;
use jpdl::proj_update::orthonormalize;
use jpdl::prox::prox_l1;
use jpdl::state::ModelState;
use jpdl::trainer::{initial_state, objective};
use jpdl::{
    make_synthetic, Bandwidth, CodingMatrix, Hyperparameters, LabeledDataset, Partition,
    ProjectionMatrix,
};
use nalgebra::DMatrix;

/// Term-by-term reconstruction of one class, assembled block by block.
fn oracle_reconstruction(
    y: &DMatrix<f64>,
    dict: &StructuredDictionary<f64>,
    a: &DMatrix<f64>,
    class: usize,
) -> f64 {
    let blocks = dict.blocks();
    let mut full = DMatrix::zeros(y.nrows(), y.ncols());
    let mut cross = 0.0;
    for j in 0..blocks.len() {
        let r = blocks.range(j);
        let part = dict.sub(j) * a.rows(r.start, r.len());
        if j != class {
            cross += part.norm_squared();
        }
        full += part;
    }
    let r = blocks.range(class);
    let own = y - dict.sub(class) * a.rows(r.start, r.len());
    (y - full).norm_squared() + own.norm_squared() + cross
}

fn desk_state(lambda1: f64, lambda2: f64) -> ModelState<f64> {
    let ds = make_synthetic::<f64>(3, 5, 20, 4.0, 3).unwrap();
    let hp = Hyperparameters {
        dim: 8,
        atoms_per_class: 6,
        lambda1,
        lambda2,
        ..Default::default()
    };
    initial_state(&ds, &hp).unwrap()
}

#[test]
fn reconstruction_matches_term_oracle() {
    let mut r = rng(20);
    let rows = Partition::uniform(3, 2);
    let cols = Partition::from_counts(&[4, 3, 5]);
    let dict = unit_dictionary(6, &rows, &mut r);
    let codes = random_codes(&rows, &cols, &mut r);
    let y = gaussian(6, cols.total(), &mut r);
    for class in 0..3 {
        let range = cols.range(class);
        let yi = y.columns(range.start, range.len());
        let obj = ClassObjective::new(yi, &dict, &codes, class, 0.0, 1.0);
        let a = codes.class_codes(class).clone_owned();
        let expected = oracle_reconstruction(&yi.clone_owned(), &dict, &a, class);
        assert!((obj.reconstruction(&a) - expected).abs() < 1e-10 * expected.max(1.0));
    }
}

#[test]
fn exact_own_class_representation_has_zero_reconstruction() {
    let mut r = rng(21);
    let rows = Partition::uniform(2, 3);
    let cols = Partition::from_counts(&[4, 4]);
    let dict = unit_dictionary(5, &rows, &mut r);
    let mut codes = CodingMatrix::zeros(cols.clone(), rows.clone());
    let own = gaussian(3, 4, &mut r);
    codes.set_block(0, 0, &own);
    let y = dict.sub(0) * &own;
    let obj = ClassObjective::new(y.as_view(), &dict, &codes, 0, 0.0, 1.0);
    assert!(obj.reconstruction(&codes.class_codes(0).clone_owned()) < 1e-24);
}

#[test]
fn huge_l1_weight_zeroes_codes_in_one_step() {
    let mut state = desk_state(1e12, 0.05);
    let zeros = CodingMatrix::zeros(state.columns().clone(), state.dictionary().blocks().clone());
    state.set_codes(zeros).unwrap();
    let out = update_codes_class(&state, 1, 1).unwrap();
    assert!(out.solution.iter().all(|v| *v == 0.0));
}

#[test]
fn orthonormal_single_class_matches_lasso_closed_form() {
    let mut r = rng(22);
    let (m, d, n, samples) = (12, 6, 4, 7);
    let x = gaussian(m, samples, &mut r);
    let p = ProjectionMatrix::new(orthonormalize(&gaussian(m, d, &mut r)).unwrap()).unwrap();
    let atoms = orthonormalize(&gaussian(d, n, &mut r)).unwrap();
    let blocks = Partition::uniform(1, n);
    let dict = StructuredDictionary::new(atoms.clone(), blocks.clone()).unwrap();
    let cols = Partition::uniform(1, samples);
    let ds = LabeledDataset::new(x.clone(), vec![0; samples], vec![1]).unwrap();
    let graph = build_graph(&ds, None, Bandwidth::Auto).unwrap();
    let lambda1 = 0.05;
    let hp = Hyperparameters {
        lambda1,
        lambda2: 0.0,
        dim: d,
        atoms_per_class: n,
        ..Default::default()
    };
    let state = ModelState::new(
        x,
        cols.clone(),
        p.clone(),
        dict,
        CodingMatrix::zeros(cols, blocks),
        graph,
        hp,
    )
    .unwrap();
    let out = update_codes_class(&state, 0, 2000).unwrap();
    // 2 ||Y - D A||^2 + lambda1 ||A||_1 with D orthonormal.
    let expected = prox_l1(
        &(atoms.transpose() * p.project(state.samples())),
        lambda1 / 4.0,
    );
    assert!((out.solution - expected).abs().max() < 1e-4);
}

#[test]
fn composite_objective_is_monotone_over_fifty_iterations() {
    let state = desk_state(0.05, 0.05);
    for class in 0..3 {
        let out = update_codes_class(&state, class, 50).unwrap();
        assert!(
            out.objective.windows(2).all(|w| w[1] <= w[0]),
            "class {class}"
        );
        assert!(out.objective.last() < out.objective.first());
    }
}

#[test]
fn sweep_never_raises_the_global_objective() {
    let mut state = desk_state(0.05, 0.05);
    for _ in 0..3 {
        let before = objective(&state).unwrap().total;
        update_all_codes(&mut state, 50).unwrap();
        let after = objective(&state).unwrap().total;
        assert!(after <= before * (1.0 + 1e-12), "{after} > {before}");
    }
}

#[test]
fn smooth_only_problem_reaches_a_stationary_point() {
    let state = desk_state(0.0, 0.0);
    let hp = state.params();
    for class in 0..3 {
        let obj = ClassObjective::new(
            state.projected_class(class),
            state.dictionary(),
            state.codes(),
            class,
            hp.lambda2,
            hp.eta,
        );
        let start = state.codes().class_codes(class).clone_owned();
        let g0 = obj.gradient(&start).norm();
        let out = update_codes_class(&state, class, 20000).unwrap();
        let g = obj.gradient(&out.solution).norm();
        assert!(g <= 1e-4 * g0, "class {class}: {g} vs {g0}");
    }
}

#[test]
fn single_class_sweep_equals_class_update() {
    let ds = make_synthetic::<f64>(2, 6, 10, 4.0, 2).unwrap();
    let single = ds.subset(&ds.class_indices(0)).unwrap();
    let single =
        LabeledDataset::new(single.samples().clone(), vec![0; single.len()], vec![1]).unwrap();
    let hp = Hyperparameters {
        dim: 4,
        atoms_per_class: 3,
        ..Default::default()
    };
    let mut state = initial_state(&single, &hp).unwrap();
    let direct = update_codes_class(&state, 0, 50).unwrap().solution;
    update_all_codes(&mut state, 50).unwrap();
    assert_eq!(state.codes().values(), &direct);
}
