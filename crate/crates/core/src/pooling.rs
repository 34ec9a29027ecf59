//! The pooling branch: asymmetric Mahalanobis distances, the veto stage and
//! the pooled-likelihood prediction.

use serde::{Deserialize, Serialize};

use crate::calibration::{HyperParams, WeightMatrix};
use crate::dist::DistributionArray;
use crate::matrix::Matrix;
use crate::stats::argmin;

/// Distance of `x` from `mu` in units of the spread on the side `x` lies on.
pub fn asym_mahalanobis(x: f64, mu: f64, sigma_left: f64, sigma_right: f64) -> f64 {
    if x < mu {
        (mu - x) / sigma_left
    } else if x > mu {
        (x - mu) / sigma_right
    } else {
        0.0
    }
}

/// `M[(i, j)]`: distance of the sample's unit-`j` response from cell `(i, j)`.
pub fn mahalanobis_matrix(sample: &[f64], d: &DistributionArray) -> Matrix {
    let k = d.n_classes();
    Matrix::from_fn(k, k, |i, j| {
        asym_mahalanobis(
            sample[j],
            d.mu[(i, j)],
            d.sigma_left[(i, j)],
            d.sigma_right[(i, j)],
        )
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VetoOutcome {
    /// Per-sample weights: a copy of `W` with vetoed rows zeroed.
    pub weights: Matrix,
    pub vetoed: Vec<usize>,
}

/// Vetoes every class with at least `v2` units at distance `>= v1`.
pub fn veto(m: &Matrix, w: &WeightMatrix, v1: f64, v2: usize) -> VetoOutcome {
    let mut weights = w.w.clone();
    let mut vetoed = Vec::new();
    for i in 0..m.rows() {
        let flagged = m.row(i).iter().filter(|&&d| d >= v1).count();
        if flagged >= v2 {
            weights.row_mut(i).fill(0.0);
            vetoed.push(i);
        }
    }
    VetoOutcome { weights, vetoed }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PooledClass {
    Class(usize),
    /// Every class was vetoed or had an all-zero weight row.
    NoViableClass,
}

impl PooledClass {
    pub fn class(self) -> Option<usize> {
        match self {
            PooledClass::Class(c) => Some(c),
            PooledClass::NoViableClass => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledPrediction {
    pub predicted: PooledClass,
    pub vetoed: Vec<usize>,
    /// Pooled score per class; `None` for classes excluded from the argmin.
    pub class_scores: Vec<Option<f64>>,
}

/// Argmin, over classes with a nonzero per-sample weight row, of
/// `sum_j (W(s)[i][j] * M[i][j])^m2`. A zero score is a perfect match and
/// wins; ties go to the lowest class index.
pub fn pooled_predict(
    sample: &[f64],
    d: &DistributionArray,
    w: &WeightMatrix,
    params: &HyperParams,
) -> PooledPrediction {
    let m = mahalanobis_matrix(sample, d);
    let VetoOutcome { weights, vetoed } = veto(&m, w, params.v1, params.v2);
    let class_scores: Vec<Option<f64>> = (0..m.rows())
        .map(|i| {
            let row = weights.row(i);
            if row.iter().all(|&x| x == 0.0) {
                return None;
            }
            Some(
                row.iter()
                    .zip(m.row(i))
                    .map(|(&wij, &mij)| (wij * mij).powf(params.m2))
                    .sum(),
            )
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, score) in class_scores.iter().enumerate() {
        if let Some(s) = *score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    PooledPrediction {
        predicted: best.map_or(PooledClass::NoViableClass, |(i, _)| PooledClass::Class(i)),
        vetoed,
        class_scores,
    }
}

/// Gaussian naive-Bayes baseline on the same array: argmin over classes of
/// the sum of squared distances, with uniform weights and no veto.
pub fn naive_bayes_predict(sample: &[f64], d: &DistributionArray) -> usize {
    let m = mahalanobis_matrix(sample, d);
    let totals: Vec<f64> = m
        .iter_rows()
        .map(|row| row.iter().map(|x| x * x).sum())
        .collect();
    argmin(&totals)
}
