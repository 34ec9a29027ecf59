//! Weight-matrix, mask and pooled-prediction properties, with brute-force
//! references for the pooled and naive-Bayes rules.

mod common;

use proptest::prelude::*;
use rand::Rng;
use sph_core::calibration::{
    build_weight_matrix, fisher_separation, fit_class_mask, ClassMask, HyperParams,
};
use sph_core::pooling::{
    asym_mahalanobis, mahalanobis_matrix, naive_bayes_predict, pooled_predict, veto, PooledClass,
};
use sph_core::{LabeledResponses, Matrix};

#[test]
fn pooled_matches_brute_force() {
    let mut rng = common::rng(10);
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let d = common::random_array(&mut rng, k);
        let w = common::random_weights(&mut rng, k);
        let params = common::random_params(&mut rng, k);
        let n = rng.random_range(1..=100);
        for _ in 0..n {
            let sample: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = pooled_predict(&sample, &d, &w, &params).predicted.class();
            let want = common::brute_force_pooled(&sample, &d, &w, params.v1, params.v2, params.m2);
            assert_eq!(got, want);
        }
    }
}

#[test]
fn naive_bayes_matches_brute_force() {
    let mut rng = common::rng(11);
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let d = common::random_array(&mut rng, k);
        for _ in 0..rng.random_range(1..=100) {
            let sample: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(
                naive_bayes_predict(&sample, &d),
                common::brute_force_naive_bayes(&sample, &d)
            );
        }
    }
}

#[test]
fn weight_rows_normalized_and_w1_monotone() {
    let mut rng = common::rng(12);
    for _ in 0..100 {
        let k = rng.random_range(2..=8);
        let d = common::random_array(&mut rng, k);
        let alpha = rng.random_range(0.5..3.0);
        let mut last = usize::MAX;
        for step in 0..12 {
            let w1 = step as f64 * 0.25;
            let w = build_weight_matrix(&d, w1, alpha);
            for i in 0..k {
                let sum: f64 = w.w.row(i).iter().sum();
                if w.row_fallback[i] {
                    assert_eq!(sum, 0.0);
                } else {
                    assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
                }
            }
            let nz = w.nonzero_count();
            assert!(nz <= last, "w1 {w1}: {nz} > {last}");
            last = nz;
        }
    }
}

#[test]
fn alpha_one_pair_weights_exact() {
    // Two-unit rows whose separations are {a, b} get a/(a+b), b/(a+b).
    let mut rng = common::rng(13);
    for _ in 0..50 {
        let d = common::random_array(&mut rng, 2);
        let f: Vec<f64> = (0..2).map(|j| fisher_separation(&d, 0, j)).collect();
        let w = build_weight_matrix(&d, 0.0, 1.0);
        if f[0] + f[1] > 0.0 {
            assert_eq!(w.w.row(0), &[f[0] / (f[0] + f[1]), f[1] / (f[0] + f[1])]);
        }
    }
}

#[test]
fn separation_shift_invariant_exact() {
    let mut rng = common::rng(14);
    for _ in 0..50 {
        let k = rng.random_range(2..=6);
        let mut d = common::random_array(&mut rng, k);
        // Dyadic centers keep the shift exact.
        d.mu = d.mu.map(|v| (v * 8.0).round() / 8.0);
        let j = rng.random_range(0..k);
        let before: Vec<f64> = (0..k).map(|i| fisher_separation(&d, i, j)).collect();
        for i in 0..k {
            d.mu[(i, j)] += 2.5;
        }
        let after: Vec<f64> = (0..k).map(|i| fisher_separation(&d, i, j)).collect();
        assert_eq!(before, after);
    }
}

#[test]
fn sigma_scaling_keeps_argmin() {
    let mut rng = common::rng(15);
    for _ in 0..300 {
        let k = rng.random_range(2..=6);
        let d = common::random_array(&mut rng, k);
        let params = HyperParams {
            v1: f64::INFINITY,
            w1: 0.0,
            alpha: 1.0,
            m2: [0.5, 1.0, 2.0][rng.random_range(0..3)],
            ..Default::default()
        };
        let scale = [0.25, 0.5, 2.0, 8.0][rng.random_range(0..4)];
        let mut scaled = d.clone();
        scaled.sigma_left = d.sigma_left.map(|s| s * scale);
        scaled.sigma_right = d.sigma_right.map(|s| s * scale);
        let w = build_weight_matrix(&d, params.w1, params.alpha);
        let w_scaled = build_weight_matrix(&scaled, params.w1, params.alpha);
        let sample: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert_eq!(
            pooled_predict(&sample, &d, &w, &params).predicted,
            pooled_predict(&sample, &scaled, &w_scaled, &params).predicted
        );
    }
}

#[test]
fn pooled_never_returns_vetoed_and_veto_is_pure() {
    let mut rng = common::rng(16);
    for _ in 0..500 {
        let k = rng.random_range(2..=6);
        let d = common::random_array(&mut rng, k);
        let w = common::random_weights(&mut rng, k);
        let before = w.clone();
        let params = common::random_params(&mut rng, k);
        let sample: Vec<f64> = (0..k).map(|_| rng.random_range(-6.0..6.0)).collect();
        let p = pooled_predict(&sample, &d, &w, &params);
        if let PooledClass::Class(c) = p.predicted {
            assert!(!p.vetoed.contains(&c));
            assert!(w.w.row(c).iter().any(|&x| x != 0.0));
        }
        let m = mahalanobis_matrix(&sample, &d);
        let _ = veto(&m, &w, params.v1, params.v2);
        assert_eq!(w, before);
    }
}

#[test]
fn full_row_of_outliers_vetoes_class() {
    let mut rng = common::rng(17);
    let w = common::random_weights(&mut rng, 4);
    let mut m = Matrix::zeros(4, 4);
    m.row_mut(2).fill(7.0);
    let out = veto(&m, &w, 7.0, 1);
    assert_eq!(out.vetoed, vec![2]);
    assert!(out.weights.row(2).iter().all(|&x| x == 0.0));
}

proptest! {
    #[test]
    fn distance_monotone_toward_center(mu in -5.0..5.0f64, sl in 0.1..3.0f64, sr in 0.1..3.0f64,
                                       x in -10.0..10.0f64, t in 0.0..1.0f64) {
        let closer = x + t * (mu - x);
        prop_assert!(asym_mahalanobis(closer, mu, sl, sr) <= asym_mahalanobis(x, mu, sl, sr));
    }
}

fn mask_fixture() -> (
    LabeledResponses,
    sph_core::DistributionArray,
    sph_core::WeightMatrix,
) {
    // Three classes with home units; class 0 samples sit ambiguous under
    // softmax (units 0 and 1 tied) but match class 0's profile exactly.
    let d = sph_core::DistributionArray {
        center_statistic: sph_core::CenterStatistic::Mean,
        sigma_floor: 1e-6,
        mu: Matrix::try_from(vec![
            vec![1.0, 1.0, -1.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ])
        .unwrap(),
        sigma_left: Matrix::filled(3, 3, 0.5),
        sigma_right: Matrix::filled(3, 3, 0.5),
    };
    let w = sph_core::WeightMatrix {
        w: Matrix::filled(3, 3, 1.0 / 3.0),
        row_fallback: vec![false; 3],
    };
    // Class 0: pooled right, softmax tie -> class 0 too (lowest index) for
    // the first sample; the second leans to unit 1 so softmax is wrong.
    let data = LabeledResponses::new(
        3,
        Matrix::try_from(vec![
            vec![1.0, 1.0, -1.0],
            vec![1.0, 1.1, -1.0],
            vec![0.0, 3.0, 0.0],
        ])
        .unwrap(),
        vec![0, 0, 1],
    )
    .unwrap();
    (data, d, w)
}

#[test]
fn mask_rules() {
    let (data, d, w) = mask_fixture();
    let base = HyperParams {
        c: 1.01,
        v1: f64::INFINITY,
        ..Default::default()
    };
    // Class 0: pooled 2/2, softmax 1/2 -> gain 0.5. Class 1: both right.
    // Class 2: no samples.
    let m = fit_class_mask(
        &data,
        &d,
        &w,
        &HyperParams {
            a1: 0.0,
            ..base.clone()
        },
    );
    assert_eq!(m, ClassMask(vec![true, false, false]));
    let m = fit_class_mask(
        &data,
        &d,
        &w,
        &HyperParams {
            a1: 0.5,
            ..base.clone()
        },
    );
    assert_eq!(m, ClassMask(vec![false, false, false]));
    let m = fit_class_mask(
        &data,
        &d,
        &w,
        &HyperParams {
            a1: f64::INFINITY,
            ..base.clone()
        },
    );
    assert_eq!(m, ClassMask::all(3, false));
    let m = fit_class_mask(
        &data,
        &d,
        &w,
        &HyperParams {
            a1: f64::NEG_INFINITY,
            ..base.clone()
        },
    );
    assert_eq!(m, ClassMask(vec![true, true, false]));
    // Gate at zero: no low-scoring samples at all.
    let m = fit_class_mask(
        &data,
        &d,
        &w,
        &HyperParams {
            c: 0.0,
            a1: f64::NEG_INFINITY,
            ..base
        },
    );
    assert_eq!(m, ClassMask::all(3, false));
}
