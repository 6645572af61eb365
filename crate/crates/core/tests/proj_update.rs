mod common;

use common::*;
use jpdl::proj_update::{
    assemble_stacked_system, blend_projection, doubled_samples, orthonormality_error,
    orthonormalize, projection_system, projection_target, select_eigenvectors,
};
use jpdl::{CodingMatrix, EigenSelection, Partition, ProjectionMatrix};
use nalgebra::{DMatrix, SymmetricEigen};

fn trace_cost(p: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    (p.transpose() * s * p).trace()
}

#[test]
fn zero_codes_give_the_minor_subspace_of_the_scatter() {
    let mut r = rng(50);
    let (m, d) = (7, 3);
    let x = gaussian(m, 9, &mut r);
    let cols = Partition::from_counts(&[4, 5]);
    let rows = Partition::uniform(2, 2);
    let dict = unit_dictionary(d, &rows, &mut r);
    let stacked = assemble_stacked_system(&dict, &CodingMatrix::zeros(cols.clone(), rows)).unwrap();
    let doubled = doubled_samples(&x, &cols);
    let prev = ProjectionMatrix::new(orthonormalize(&gaussian(m, d, &mut r)).unwrap()).unwrap();
    let zero = DMatrix::zeros(m, m);
    let p = projection_target(
        &prev,
        &doubled,
        &stacked,
        &zero,
        0.0,
        EigenSelection::Smallest,
    )
    .unwrap();
    let s = &doubled * doubled.transpose();
    let mut eig: Vec<f64> = SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    let smallest: f64 = eig[..d].iter().sum();
    assert!((trace_cost(&p, &s) - smallest).abs() < 1e-8 * smallest.abs().max(1.0));
    assert!(orthonormality_error(&p) < 1e-10);
}

#[test]
fn target_beats_random_orthonormal_candidates() {
    let mut r = rng(51);
    let (m, d) = (8, 3);
    let x = gaussian(m, 10, &mut r);
    let cols = Partition::from_counts(&[5, 5]);
    let rows = Partition::uniform(2, 2);
    let dict = unit_dictionary(d, &rows, &mut r);
    let codes = random_codes(&rows, &cols, &mut r);
    let stacked = assemble_stacked_system(&dict, &codes).unwrap();
    let doubled = doubled_samples(&x, &cols);
    let prev = ProjectionMatrix::new(orthonormalize(&gaussian(m, d, &mut r)).unwrap()).unwrap();
    let g = gaussian(m, m, &mut r);
    let graph = &g * g.transpose();
    let s = projection_system(prev.as_matrix(), &doubled, &stacked, &graph, 0.5);
    let p = projection_target(
        &prev,
        &doubled,
        &stacked,
        &graph,
        0.5,
        EigenSelection::Smallest,
    )
    .unwrap();
    let best = trace_cost(&p, &s);
    assert!(best <= trace_cost(prev.as_matrix(), &s) + 1e-10);
    for _ in 0..1000 {
        let q = orthonormalize(&gaussian(m, d, &mut r)).unwrap();
        assert!(trace_cost(&q, &s) >= best - 1e-9);
    }
}

#[test]
fn stacked_cost_equals_per_class_costs() {
    let mut r = rng(52);
    let (m, d) = (9, 4);
    let cols = Partition::from_counts(&[3, 4, 2]);
    let rows = Partition::from_counts(&[2, 3, 2]);
    let dict = unit_dictionary(d, &rows, &mut r);
    let codes = random_codes(&rows, &cols, &mut r);
    let x = gaussian(m, cols.total(), &mut r);
    let p = orthonormalize(&gaussian(m, d, &mut r)).unwrap();
    let stacked = assemble_stacked_system(&dict, &codes).unwrap();
    let stacked_cost =
        (p.transpose() * doubled_samples(&x, &cols) - stacked.reconstruction()).norm_squared();
    let mut per_class = 0.0;
    for i in 0..3 {
        let range = cols.range(i);
        let y = p.transpose() * x.columns(range.start, range.len());
        per_class += (&y - dict.atoms() * codes.class_codes(i)).norm_squared();
        per_class += (&y - dict.sub(i) * codes.block(i, i)).norm_squared();
    }
    assert!((stacked_cost - per_class).abs() < 1e-10 * per_class.max(1.0));
}

#[test]
fn zero_codes_reconstruct_nothing() {
    let mut r = rng(53);
    let rows = Partition::uniform(2, 2);
    let dict = unit_dictionary(3, &rows, &mut r);
    let cols = Partition::from_counts(&[2, 3]);
    let stacked = assemble_stacked_system(&dict, &CodingMatrix::zeros(cols, rows)).unwrap();
    assert!(stacked.reconstruction().iter().all(|v| *v == 0.0));
}

#[test]
fn blend_stays_orthonormal_and_fixes_equal_operands() {
    let mut r = rng(54);
    for _ in 0..20 {
        let prev =
            ProjectionMatrix::new(orthonormalize(&gaussian(10, 4, &mut r)).unwrap()).unwrap();
        let new = orthonormalize(&gaussian(10, 4, &mut r)).unwrap();
        let out = blend_projection(&prev, &new, 0.1).unwrap();
        assert!(orthonormality_error(out.as_matrix()) <= 1e-10);
        assert_eq!(
            blend_projection(&prev, &new, 1.0).unwrap().as_matrix(),
            &new
        );
        assert_eq!(
            blend_projection(&prev, prev.as_matrix(), 0.3).unwrap(),
            prev
        );
    }
}

#[test]
fn eigenvector_selection_is_deterministic() {
    let mut r = rng(55);
    let g = gaussian(6, 6, &mut r);
    let s = &g * g.transpose();
    let a = select_eigenvectors(&s, 3, EigenSelection::Smallest).unwrap();
    let b = select_eigenvectors(&s.clone(), 3, EigenSelection::Smallest).unwrap();
    assert_eq!(a, b);
    let largest = select_eigenvectors(&s, 3, EigenSelection::Largest).unwrap();
    assert!(trace_cost(&largest, &s) >= trace_cost(&a, &s));
}
