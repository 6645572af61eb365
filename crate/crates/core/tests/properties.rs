use jpdl::data::corrupt;
use jpdl::fisher::{fisher_term, scatter_between, scatter_within};
use jpdl::graph::build_graph;
use jpdl::proj_update::{align_basis, blend_projection, orthonormality_error};
use jpdl::prox::{nuclear_norm, prox_l1, prox_l21, prox_nuclear, singular_values};
use jpdl::{
    make_synthetic, Bandwidth, CodingMatrix, CorruptionKind, CorruptionSpec, Partition,
    ProjectionMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn sized_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))
}

fn matrix_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))
}

fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proximal_maps_are_nonexpansive((a, b) in matrix_pair(), tau in 0.0..5.0f64) {
        let gap = (&a - &b).norm();
        prop_assert!((prox_l1(&a, tau) - prox_l1(&b, tau)).norm() <= gap + 1e-9);
        prop_assert!((prox_l21(&a, tau) - prox_l21(&b, tau)).norm() <= gap + 1e-9);
        let na = prox_nuclear(&a, tau).unwrap();
        let nb = prox_nuclear(&b, tau).unwrap();
        prop_assert!((na - nb).norm() <= gap * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn zero_threshold_is_the_identity(m in sized_matrix()) {
        prop_assert_eq!(prox_l1(&m, 0.0), m.clone());
        prop_assert_eq!(prox_l21(&m, 0.0), m.clone());
        prop_assert!((prox_nuclear(&m, 0.0).unwrap() - &m).amax() <= 1e-10 * m.amax().max(1.0));
    }

    #[test]
    fn singular_value_thresholding_shrinks_rank_and_norm(m in sized_matrix(), tau in 0.0..8.0f64) {
        let out = prox_nuclear(&m, tau).unwrap();
        let before = singular_values(&m).unwrap();
        let after = singular_values(&out).unwrap();
        let scale = before.max().max(1.0);
        let rank = |s: &nalgebra::DVector<f64>| s.iter().filter(|&&v| v > 1e-9 * scale).count();
        prop_assert!(rank(&after) <= rank(&before));
        prop_assert!(nuclear_norm(&out).unwrap() <= nuclear_norm(&m).unwrap() + 1e-9 * scale);
        let expected: f64 = before.iter().map(|s| (s - tau).max(0.0)).sum();
        prop_assert!((nuclear_norm(&out).unwrap() - expected).abs() <= 1e-8 * scale);
    }

    #[test]
    fn scatter_decomposition_holds(
        sizes in proptest::collection::vec(1usize..5, 2..4),
        atoms in 1usize..4,
        seed in 0u64..1000,
    ) {
        let columns = Partition::from_counts(&sizes);
        let rows = Partition::uniform(sizes.len(), atoms);
        let values = DMatrix::from_fn(rows.total(), columns.total(), |r, c| {
            (((r * 31 + c * 17) as u64 + seed) % 97) as f64 / 10.0 - 4.8
        });
        let a = CodingMatrix::new(values.clone(), columns, rows).unwrap();
        let mean = a.global_mean();
        let mut total = DMatrix::zeros(values.nrows(), values.nrows());
        for col in values.column_iter() {
            let d = col - &mean;
            total += &d * d.transpose();
        }
        let sum = scatter_within(&a) + scatter_between(&a);
        prop_assert!((sum - &total).amax() <= 1e-9 * total.amax().max(1.0));
        let want = scatter_within(&a).trace() - scatter_between(&a).trace() + 0.5 * values.norm_squared();
        prop_assert!((fisher_term(&a, 0.5) - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn corruption_preserves_labels_and_counts(
        kind in prop_oneof![
            Just(CorruptionKind::Pixel),
            Just(CorruptionKind::SaltPepper),
            Just(CorruptionKind::Gaussian),
            Just(CorruptionKind::Block),
        ],
        level in 0.0..1.0f64,
        seed in 0u64..1000,
    ) {
        let ds = make_synthetic::<f64>(3, 3, 16, 4.0, seed).unwrap().with_max_value(255.0);
        let spec = CorruptionSpec::new(kind, level, seed).with_image_shape(4, 4);
        let out = corrupt(&ds, &spec).unwrap();
        prop_assert_eq!(out.labels(), ds.labels());
        prop_assert_eq!(out.samples().shape(), ds.samples().shape());
        if kind == CorruptionKind::Pixel {
            let count = (level * 16.0 - 1e-9).ceil().max(0.0) as usize;
            for (clean, noisy) in ds.samples().column_iter().zip(out.samples().column_iter()) {
                let changed = clean.iter().zip(noisy.iter()).filter(|(a, b)| a != b).count();
                let at_max = noisy.iter().filter(|&&v| v == 255.0).count();
                prop_assert!(changed <= count);
                prop_assert_eq!(at_max, count);
            }
        }
    }

    #[test]
    fn graph_laplacian_is_psd_with_spectrum_in_0_2(
        classes in 2usize..4,
        per_class in 2usize..6,
        k in 1usize..4,
        seed in 0u64..1000,
    ) {
        let ds = make_synthetic::<f64>(classes, per_class, 5, 3.0, seed).unwrap();
        let g = build_graph(&ds, Some(k), Bandwidth::Auto).unwrap();
        let w = g.weights();
        prop_assert_eq!(w, &w.transpose());
        for i in 0..w.nrows() {
            prop_assert_eq!(w[(i, i)], 0.0);
            for j in 0..w.ncols() {
                prop_assert!((0.0..=1.0).contains(&w[(i, j)]));
                if w[(i, j)] > 0.0 {
                    prop_assert_eq!(ds.labels()[i], ds.labels()[j]);
                }
            }
        }
        let eig = g.laplacian().clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10, "{}", eig.min());
        prop_assert!(eig.max() <= 2.0 + 1e-10, "{}", eig.max());
    }

    #[test]
    fn blending_keeps_projections_orthonormal(
        (a, b) in (4usize..9, 1usize..4).prop_flat_map(|(m, d)| (matrix(m, d), matrix(m, d))),
        gamma in 0.01..1.0f64,
    ) {
        let prev = ProjectionMatrix::new(orthonormal(a)).unwrap();
        let target = align_basis(&orthonormal(b), prev.as_matrix()).unwrap();
        let next = blend_projection(&prev, &target, gamma).unwrap();
        prop_assert!(orthonormality_error(next.as_matrix()) <= 1e-10);
    }
}
