mod common;

use common::*;
use jpdl::classifier::{class_residual, encode, Encoder};
use jpdl::dictionary::StructuredDictionary;
use jpdl::prox::soft_threshold;
use jpdl::{
    evaluate, fit, make_synthetic, predict, Error, Hyperparameters, LabeledDataset, Model64,
    Partition, ProjectionMatrix,
};
use nalgebra::{DMatrix, DVector};

fn orthonormal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    gaussian(rows, cols, &mut rng(seed)).qr().q()
}

/// Hand-built model: orthonormal `P` (m x d) and dictionary (d x n).
fn manual_model(m: usize, d: usize, blocks: &[usize], seed: u64) -> Model64 {
    let partition = Partition::from_counts(blocks);
    let n = partition.total();
    let mut r = rng(seed + 1);
    Model64 {
        projection: ProjectionMatrix::new(orthonormal(m, d, seed)).unwrap(),
        dictionary: StructuredDictionary::new(orthonormal(d, n, seed + 2), partition).unwrap(),
        class_means: (0..blocks.len())
            .map(|_| DVector::from_column_slice(gaussian(n, 1, &mut r).as_slice()))
            .collect(),
        class_names: (1..=blocks.len() as i64).collect(),
        params: Hyperparameters {
            dim: d,
            ..Default::default()
        },
        objective_trace: Vec::new(),
        training_codes: None,
    }
}

#[test]
fn orthonormal_dictionary_gives_the_soft_threshold_code() {
    let model = manual_model(12, 8, &[3, 3], 1);
    let x = DVector::from_column_slice(gaussian(12, 1, &mut rng(9)).as_slice());
    let xi = 0.05;
    let code = encode(&model, &x, xi).unwrap();
    let p = model.projection.as_matrix();
    let d = model.dictionary.atoms();
    let want = (d.transpose() * p.transpose() * &x).map(|v| soft_threshold(v, xi / 2.0));
    assert!((&code - &want).amax() < 1e-6, "{code} vs {want}");
}

#[test]
fn zero_query_and_huge_xi_give_zero_codes() {
    let model = manual_model(10, 6, &[2, 2, 2], 2);
    assert_eq!(
        encode(&model, &DVector::zeros(10), 0.01).unwrap(),
        DVector::zeros(6)
    );
    let x = DVector::from_column_slice(gaussian(10, 1, &mut rng(3)).as_slice());
    assert_eq!(encode(&model, &x, 1e6).unwrap(), DVector::zeros(6));
}

#[test]
fn residual_matches_a_term_by_term_oracle() {
    let model = manual_model(10, 6, &[2, 3, 1], 4);
    let mut r = rng(5);
    let y = DVector::from_column_slice(gaussian(6, 1, &mut r).as_slice());
    let a = DVector::from_column_slice(gaussian(6, 1, &mut r).as_slice());
    let omega = 0.3;
    let d = model.dictionary.atoms();
    let offsets = [(0, 2), (2, 3), (5, 1)];
    for (i, (start, len)) in offsets.into_iter().enumerate() {
        let mut fit = 0.0;
        for row in 0..6 {
            let mut approx = 0.0;
            for c in start..start + len {
                approx += d[(row, c)] * a[c];
            }
            fit += (y[row] - approx).powi(2);
        }
        let mut reg = 0.0;
        for c in 0..6 {
            reg += (a[c] - model.class_means[i][c]).powi(2);
        }
        let want = fit + omega * reg;
        let got = class_residual(&model, &y, &a, i, omega);
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1.0),
            "{got} vs {want}"
        );
        assert!(got >= 0.0);
        let plain = class_residual(&model, &y, &a, i, 0.0);
        assert!((plain - fit).abs() <= 1e-12 * fit.max(1.0));
    }
}

#[test]
fn exact_fit_at_the_mean_has_zero_residual() {
    let model = manual_model(10, 6, &[3, 3], 6);
    let mean = &model.class_means[1];
    let mut a = DVector::zeros(6);
    a.rows_mut(3, 3).copy_from(&mean.rows(3, 3));
    let mut model = model;
    model.class_means[1] = a.clone();
    let y = model.dictionary.sub(1) * a.rows(3, 3);
    assert!(class_residual(&model, &y, &a, 1, 0.5) < 1e-24);
}

#[test]
fn single_class_model_always_predicts_it() {
    let model = manual_model(8, 4, &[4], 7);
    let mut r = rng(8);
    for _ in 0..5 {
        let x = DVector::from_column_slice(gaussian(8, 1, &mut r).as_slice());
        assert_eq!(predict(&model, &x).unwrap(), 0);
    }
}

#[test]
fn ties_go_to_the_lowest_class() {
    let mut model = manual_model(8, 4, &[2, 2], 9);
    let sub = model.dictionary.sub(0).clone_owned();
    let mut atoms = model.dictionary.atoms().clone();
    atoms.columns_mut(2, 2).copy_from(&sub);
    model.dictionary = StructuredDictionary::new(atoms, Partition::uniform(2, 2)).unwrap();
    model.class_means[1] = model.class_means[0].clone();
    let mut r = rng(10);
    for _ in 0..5 {
        let x = DVector::from_column_slice(gaussian(8, 1, &mut r).as_slice());
        let encoder = Encoder::new(&model).unwrap();
        let code = encoder.encode(&x, model.params.xi).unwrap();
        assert_eq!(code.rows(0, 2), code.rows(2, 2));
        let (c, res) = encoder.classify(&x).unwrap();
        assert_eq!(res[0], res[1]);
        assert_eq!(c, 0);
    }
    let x = DVector::zeros(8);
    assert_eq!(predict(&model, &x).unwrap(), 0);
}

#[test]
fn evaluation_rejects_bad_inputs() {
    let model = manual_model(8, 4, &[2, 2], 11);
    // An empty test set cannot even be built, so 0/0 never arises.
    let empty = LabeledDataset::<f64>::from_raw_labels(DMatrix::zeros(8, 0), &[]);
    assert!(matches!(empty, Err(Error::Input(_))));
    let wide = LabeledDataset::from_raw_labels(DMatrix::zeros(9, 2), &[1, 2]).unwrap();
    assert!(matches!(evaluate(&model, &wide), Err(Error::Dimension(_))));
    let stranger = LabeledDataset::from_raw_labels(DMatrix::zeros(8, 1), &[7]).unwrap();
    assert!(matches!(evaluate(&model, &stranger), Err(Error::Input(_))));
    assert!(matches!(
        predict(&model, &DVector::zeros(3)),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn training_set_of_separable_data_is_classified_perfectly() {
    let ds = make_synthetic::<f64>(3, 15, 16, 20.0, 12).unwrap();
    let hp = Hyperparameters {
        dim: 6,
        atoms_per_class: 4,
        outer_iters: 3,
        ..Default::default()
    };
    let model = fit(&ds, &hp).unwrap();
    let report = evaluate(&model, &ds).unwrap();
    assert_eq!(report.accuracy, 1.0);
    for (c, row) in report.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), ds.class_counts()[c]);
    }
    assert!(report.residuals.iter().flatten().all(|&e| e >= 0.0));

    // Same samples under a cyclic relabeling: almost nothing can be right.
    let shifted: Vec<i64> = ds
        .labels()
        .iter()
        .map(|&l| ((l + 1) % 3) as i64 + 1)
        .collect();
    let permuted = LabeledDataset::from_raw_labels(ds.samples().clone(), &shifted).unwrap();
    let report = evaluate(&model, &permuted).unwrap();
    assert!(
        report.accuracy <= 1.0 - 2.0 / 3.0 + 0.05,
        "{}",
        report.accuracy
    );
}

#[test]
fn evaluation_is_deterministic() {
    let ds = make_synthetic::<f64>(3, 12, 12, 4.0, 13).unwrap();
    let hp = Hyperparameters {
        dim: 5,
        atoms_per_class: 3,
        outer_iters: 2,
        ..Default::default()
    };
    let model = fit(&ds, &hp).unwrap();
    assert_eq!(
        evaluate(&model, &ds).unwrap(),
        evaluate(&model, &ds).unwrap()
    );
}
