//! Weight matrix and class-trust mask.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledResponses;
use crate::dist::{CenterStatistic, DistributionArray};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pooling::{pooled_predict, PooledClass};
use crate::scoring::{softmax_predict, softmax_top};
use crate::stats::median;

/// Upper bound on the gating threshold; anything above 1 already routes
/// every sample to pooling.
pub const MAX_GATE: f64 = 1.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Gate: samples with top softmax score below `c` go to pooling.
    pub c: f64,
    /// Closed range of top scores used to fit the distribution array.
    pub c_low: f64,
    pub c_high: f64,
    /// Minimum separation for a weight to survive sparsification.
    pub w1: f64,
    /// Sharpening exponent for row normalization.
    pub alpha: f64,
    /// Mahalanobis distance that flags a unit as an outlier.
    #[serde(with = "crate::extended_float")]
    pub v1: f64,
    /// Number of flagged units that vetoes a class.
    pub v2: usize,
    /// Required pooled-over-softmax accuracy margin for a class to be trusted.
    #[serde(with = "crate::extended_float")]
    pub a1: f64,
    /// Sharpening exponent applied to each weighted distance.
    pub m2: f64,
    pub center: CenterStatistic,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            c: 0.9,
            c_low: 0.6,
            c_high: 1.0,
            w1: 1.0,
            alpha: 1.0,
            v1: 4.0,
            v2: 2,
            a1: 0.0,
            m2: 1.0,
            center: CenterStatistic::Mean,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(0.0..=MAX_GATE).contains(&self.c) {
            return fail(format!("c = {} outside [0, {MAX_GATE}]", self.c));
        }
        if !(0.0..=1.0).contains(&self.c_low)
            || !(0.0..=1.0).contains(&self.c_high)
            || self.c_low >= self.c_high
        {
            return fail(format!(
                "need 0 <= c_low < c_high <= 1, got [{}, {}]",
                self.c_low, self.c_high
            ));
        }
        if !(self.w1 >= 0.0 && self.w1.is_finite()) {
            return fail(format!("w1 = {} must be finite and >= 0", self.w1));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha = {} must be finite and > 0", self.alpha));
        }
        if !(self.v1 > 0.0) {
            return fail(format!("v1 = {} must be > 0", self.v1));
        }
        if self.v2 < 1 || self.v2 > n_classes {
            return fail(format!("v2 = {} outside [1, {n_classes}]", self.v2));
        }
        if self.a1.is_nan() {
            return fail("a1 is NaN".into());
        }
        if !(self.m2 > 0.0 && self.m2.is_finite()) {
            return fail(format!("m2 = {} must be finite and > 0", self.m2));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub w: Matrix,
    /// Rows with no surviving entry; such rows are all zero.
    pub row_fallback: Vec<bool>,
}

impl WeightMatrix {
    pub fn n_classes(&self) -> usize {
        self.w.rows()
    }

    pub fn nonzero_count(&self) -> usize {
        self.w.as_slice().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.w.rows();
        if self.w.cols() != k {
            return Err(Error::Schema(format!("w is {}x{}", k, self.w.cols())));
        }
        if self.row_fallback.len() != k {
            return Err(Error::Schema(format!(
                "row_fallback has {} entries for {k} classes",
                self.row_fallback.len()
            )));
        }
        for (i, row) in self.w.iter_rows().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::Schema(format!(
                    "w row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if self.row_fallback[i] {
                if sum != 0.0 {
                    return Err(Error::Schema(format!("fallback row {i} is not all zero")));
                }
            } else if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Schema(format!("w row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMask(pub Vec<bool>);

impl ClassMask {
    pub fn all(n_classes: usize, trusted: bool) -> Self {
        Self(vec![trusted; n_classes])
    }

    pub fn is_trusted(&self, class: usize) -> bool {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Separation of class `i` from the other classes at unit `j`: the median
/// over `k != i` of the gap between centers divided by the mean of the two
/// facing spreads.
pub fn fisher_separation(d: &DistributionArray, i: usize, j: usize) -> f64 {
    let k_count = d.n_classes();
    let terms: Vec<f64> = (0..k_count)
        .filter(|&k| k != i)
        .map(|k| pair_separation(d, i, k, j))
        .collect();
    median(&terms)
}

fn pair_separation(d: &DistributionArray, i: usize, k: usize, j: usize) -> f64 {
    let (mu_i, mu_k) = (d.mu[(i, j)], d.mu[(k, j)]);
    if mu_i > mu_k {
        (mu_i - mu_k) / (0.5 * (d.sigma_left[(i, j)] + d.sigma_right[(k, j)]))
    } else if mu_i < mu_k {
        (mu_k - mu_i) / (0.5 * (d.sigma_right[(i, j)] + d.sigma_left[(k, j)]))
    } else {
        0.0
    }
}

/// All separations `f_ij` as a K×K matrix.
pub fn separation_matrix(d: &DistributionArray) -> Matrix {
    let k = d.n_classes();
    Matrix::from_fn(k, k, |i, j| fisher_separation(d, i, j))
}

/// Sparsifies separations below `w1`, then normalizes each row of the
/// survivors raised to `alpha`.
pub fn build_weight_matrix(d: &DistributionArray, w1: f64, alpha: f64) -> WeightMatrix {
    weights_from_separation(&separation_matrix(d), w1, alpha)
}

pub(crate) fn weights_from_separation(f: &Matrix, w1: f64, alpha: f64) -> WeightMatrix {
    let k = f.rows();
    let mut w = Matrix::zeros(k, k);
    let mut row_fallback = vec![false; k];
    for i in 0..k {
        let powered: Vec<f64> = f
            .row(i)
            .iter()
            .map(|&v| if v >= w1 { v.powf(alpha) } else { 0.0 })
            .collect();
        let total: f64 = powered.iter().sum();
        if total > 0.0 && total.is_finite() {
            for (dst, p) in w.row_mut(i).iter_mut().zip(&powered) {
                *dst = p / total;
            }
        } else {
            row_fallback[i] = true;
        }
    }
    WeightMatrix { w, row_fallback }
}

/// Trusts class `i` when pooling beats softmax by more than `a1` on the
/// low-scoring validation samples of true class `i`. Classes without such
/// samples are distrusted. A pooled `NoViableClass` counts as a miss.
pub fn fit_class_mask(
    val: &LabeledResponses,
    d: &DistributionArray,
    w: &WeightMatrix,
    params: &HyperParams,
) -> ClassMask {
    let k = val.n_classes();
    let mut count = vec![0usize; k];
    let mut pooled_hits = vec![0usize; k];
    let mut softmax_hits = vec![0usize; k];
    for (sample, label) in val.iter() {
        if softmax_top(sample) >= params.c {
            continue;
        }
        count[label] += 1;
        if softmax_predict(sample) == label {
            softmax_hits[label] += 1;
        }
        if pooled_predict(sample, d, w, params).predicted == PooledClass::Class(label) {
            pooled_hits[label] += 1;
        }
    }
    ClassMask(
        (0..k)
            .map(|i| {
                if count[i] == 0 {
                    return false;
                }
                let n = count[i] as f64;
                let gain = pooled_hits[i] as f64 / n - softmax_hits[i] as f64 / n;
                gain > params.a1
            })
            .collect(),
    )
}
