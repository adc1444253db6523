//! Randomized properties.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use radpl::classify::{Classifier, EvalReport};
use radpl::data::{
    format_matrix, make_synthetic, normalize_unit_l2, parse_matrix, split_indices, SyntheticSpec,
};
use radpl::metrics::{atom_similarity, psnr};
use radpl::model::DictionaryPair;
use radpl::solver::{normalize_column_sums, update_s, update_w};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

fn weights(len: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(0.1..5.0f64, len).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_text_round_trip_is_exact(
        m in (1..6usize, 1..6usize).prop_flat_map(|(r, c)| {
            prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), r * c)
                .prop_map(move |v| DMatrix::from_vec(r, c, v))
        })
    ) {
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn unit_normalization_gives_unit_columns(m in sized_matrix(6, 6)) {
        prop_assume!(m.column_iter().all(|c| c.norm() > 1e-6));
        let n = normalize_unit_l2(&m).unwrap();
        for c in n.column_iter() {
            prop_assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn column_sum_normalization_is_exact_and_idempotent(m in sized_matrix(8, 5)) {
        let once = normalize_column_sums(&m);
        for c in once.column_iter() {
            prop_assert!((c.sum() - 1.0).abs() < 1e-10);
        }
        let twice = normalize_column_sums(&once);
        prop_assert!((twice - &once).amax() < 1e-12);
    }

    #[test]
    fn classifier_ignores_positive_scaling(
        d in matrix(5, 4),
        p in matrix(4, 5),
        y in prop::collection::vec(-5.0..5.0f64, 5),
        scale in 1e-3..1e3f64,
    ) {
        let pair = DictionaryPair::new(
            vec![d.columns(0, 2).into_owned(), d.columns(2, 2).into_owned()],
            vec![p.rows(0, 2).into_owned(), p.rows(2, 2).into_owned()],
        ).unwrap();
        let y = DVector::from_vec(y);
        prop_assume!(y.norm() > 1e-3);
        let residuals = radpl::classify::class_residuals(y.as_view(), &pair);
        prop_assume!((residuals[0] - residuals[1]).abs() > 1e-9 * residuals[0].max(residuals[1]));
        let scaled = &y * scale;
        prop_assert_eq!(pair.predict(y.as_view()), pair.predict(scaled.as_view()));
    }

    #[test]
    fn similarity_is_a_bounded_symmetric_correlation(
        d in matrix(6, 4),
        scales in prop::collection::vec(prop_oneof![-100.0..-0.01f64, 0.01..100.0f64], 4),
    ) {
        prop_assume!(d.column_iter().all(|c| c.variance() > 1e-6));
        let s = atom_similarity(&d);
        for i in 0..4 {
            prop_assert!((s[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..4 {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&s[(i, j)]));
                prop_assert!((s[(i, j)] - s[(j, i)]).abs() < 1e-15);
            }
        }
        let mut rescaled = d.clone();
        for (mut c, a) in rescaled.column_iter_mut().zip(&scales) {
            c *= *a;
        }
        prop_assert!((atom_similarity(&rescaled) - s).amax() < 1e-10);
    }

    #[test]
    fn psnr_falls_as_noise_grows(y in matrix(4, 5), e in matrix(4, 5)) {
        prop_assume!(y.amax() > 1e-3 && e.amax() > 1e-3);
        let small = psnr(&y, &(&y + &e * 0.01)).unwrap();
        let large = psnr(&y, &(&y + &e * 0.1)).unwrap();
        prop_assert!(large < small);
    }

    #[test]
    fn code_update_stays_nonnegative(
        x in matrix(5, 6),
        d in matrix(5, 3),
        p in matrix(3, 5),
        s in matrix(3, 6),
        u in weights(6),
        v in weights(6),
    ) {
        let out = update_s(&x, &d, &p, &s.abs(), &u, &v, 1e-6);
        prop_assert!(out.iter().all(|&e| e >= 0.0 && e.is_finite()));
    }

    #[test]
    fn weight_update_has_zero_diagonal(x in matrix(5, 6), p in matrix(3, 5)) {
        let w = update_w(&x, &p);
        prop_assert!(w.diagonal().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn split_partitions_every_class(
        classes in 2..5usize,
        per_class in 2..8usize,
        seed in any::<u64>(),
        take in 1..7usize,
    ) {
        let take = take.min(per_class - 1);
        let ds = make_synthetic(&SyntheticSpec {
            classes,
            dim: 4,
            per_class,
            noise_sigma: 0.1,
            corrupt_frac: 0.0,
            seed,
        }).unwrap();
        let (train, test) = split_indices(&ds, take, seed).unwrap();
        prop_assert_eq!(train.len(), classes * take);
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let mut all: Vec<_> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        for l in 1..=classes {
            prop_assert_eq!(train.iter().filter(|&&j| ds.labels()[j] == l).count(), take);
        }
    }

    #[test]
    fn confusion_rows_count_each_class(
        pairs in prop::collection::vec((1..=4usize, 1..=4usize), 1..40)
    ) {
        let (truth, predicted): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let report = EvalReport::from_predictions(&truth, &predicted, 4).unwrap();
        for (i, row) in report.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&t| t == i + 1).count());
        }
        let trace: usize = (0..4).map(|i| report.confusion[i][i]).sum();
        prop_assert_eq!(report.accuracy, trace as f64 / truth.len() as f64);
    }
}
