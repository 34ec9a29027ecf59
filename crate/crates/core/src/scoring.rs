//! Softmax scores, the softmax decision rule and the confidence gate.

use serde::{Deserialize, Serialize};

use crate::stats::argmax;

/// Softmax outputs for one sample: nonnegative, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    SoftmaxPath,
    PoolingPath,
}

/// Softmax with max-subtraction, so large responses never overflow.
pub fn softmax_scores(responses: &[f64]) -> ScoreVector {
    let max = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = responses.iter().map(|&r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ScoreVector(exps.into_iter().map(|e| e / total).collect())
}

/// Top softmax score without materializing the whole vector.
pub fn softmax_top(responses: &[f64]) -> f64 {
    let max = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = responses.iter().map(|&r| (r - max).exp()).sum();
    1.0 / total
}

/// Softmax prediction: argmax of the scores, lowest index on ties.
pub fn softmax_predict(responses: &[f64]) -> usize {
    softmax_scores(responses).argmax()
}

/// `SoftmaxPath` iff the top score reaches `c`.
pub fn gate(scores: &ScoreVector, c: f64) -> Route {
    route_for_top(scores.max(), c)
}

pub(crate) fn route_for_top(top: f64, c: f64) -> Route {
    if top >= c {
        Route::SoftmaxPath
    } else {
        Route::PoolingPath
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_responses() {
        let s = softmax_scores(&[0.0; 10]);
        for &v in s.as_slice() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_analytic() {
        let s = softmax_scores(&[2f64.ln(), 0.0]);
        assert!((s.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn huge_response_does_not_overflow() {
        let s = softmax_scores(&[1000.0, 0.0]);
        assert_eq!(s.as_slice()[0], 1.0);
        assert!(s.as_slice()[1] >= 0.0 && s.as_slice()[1] < 1e-300);
        assert!(s.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn predict_and_ties() {
        assert_eq!(softmax_predict(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(softmax_predict(&[5.0, 5.0]), 0);
    }

    #[test]
    fn gate_thresholds() {
        let at = |top: f64| ScoreVector(vec![top, 1.0 - top]);
        assert_eq!(gate(&at(0.9), 0.8), Route::SoftmaxPath);
        assert_eq!(gate(&at(0.7), 0.8), Route::PoolingPath);
        assert_eq!(gate(&at(0.8), 0.8), Route::SoftmaxPath);
    }

    proptest! {
        #[test]
        fn shift_invariant(r in prop::collection::vec(-50.0..50.0f64, 2..12), shift in -100.0..100.0f64) {
            let a = softmax_scores(&r);
            let shifted: Vec<f64> = r.iter().map(|v| v + shift).collect();
            let b = softmax_scores(&shifted);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn scores_form_distribution(r in prop::collection::vec(-500.0..500.0f64, 2..12)) {
            let s = softmax_scores(&r);
            prop_assert!(s.as_slice().iter().all(|&v| v >= 0.0));
            prop_assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((softmax_top(&r) - s.max()).abs() < 1e-12);
        }

        #[test]
        fn score_argmax_matches_response_argmax(r in prop::collection::vec(-20.0..20.0f64, 2..12)) {
            prop_assert_eq!(softmax_predict(&r), argmax(&r));
        }

        #[test]
        fn predict_matches_score_argmax(r in prop::collection::vec(-20.0..20.0f64, 2..12)) {
            prop_assert_eq!(softmax_predict(&r), softmax_scores(&r).argmax());
        }

        #[test]
        fn degenerate_gates(r in prop::collection::vec(-20.0..20.0f64, 2..12)) {
            let s = softmax_scores(&r);
            prop_assert_eq!(gate(&s, 0.0), Route::SoftmaxPath);
            prop_assert_eq!(gate(&s, 1.0 + 1e-9), Route::PoolingPath);
        }
    }
}
