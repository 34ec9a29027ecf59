//! The end-to-end hybrid predictor.
//!
//! A sample whose top softmax score reaches `c` keeps the softmax decision.
//! Otherwise the pooling branch runs; its answer is kept only when the
//! predicted class is trusted by the mask, and the softmax decision is used
//! in every other case.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{fit_class_mask, separation_matrix, weights_from_separation};
use crate::calibration::{ClassMask, HyperParams, WeightMatrix};
use crate::dataset::LabeledResponses;
use crate::dist::{filter_by_score_range, fit_distributions, DistributionArray, ScoreRange};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::relative_error_reduction;
use crate::pooling::{naive_bayes_predict, pooled_predict, PooledClass, PooledPrediction};
use crate::scoring::{route_for_top, softmax_predict, softmax_top, Route};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphModel {
    format_version: u32,
    n_classes: usize,
    params: HyperParams,
    distributions: DistributionArray,
    weights: WeightMatrix,
    mask: ClassMask,
}

/// On-disk shape of a model; every field is required.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format_version: u32,
    n_classes: usize,
    params: HyperParams,
    distributions: DistributionArray,
    weights: WeightMatrix,
    mask: ClassMask,
}

impl SphModel {
    /// Assembles a model from already fitted parts, checking that they agree.
    pub fn from_parts(
        params: HyperParams,
        distributions: DistributionArray,
        weights: WeightMatrix,
        mask: ClassMask,
    ) -> Result<Self> {
        let model = Self {
            format_version: MODEL_FORMAT_VERSION,
            n_classes: distributions.n_classes(),
            params,
            distributions,
            weights,
            mask,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let k = self.n_classes;
        self.distributions.validate()?;
        self.weights.validate()?;
        if self.distributions.n_classes() != k {
            return Err(Error::Schema(format!(
                "distribution array has {} classes, model declares {k}",
                self.distributions.n_classes()
            )));
        }
        if self.weights.n_classes() != k {
            return Err(Error::Schema(format!(
                "weight matrix has {} classes, model declares {k}",
                self.weights.n_classes()
            )));
        }
        if self.mask.len() != k {
            return Err(Error::Schema(format!(
                "mask has {} entries, model declares {k}",
                self.mask.len()
            )));
        }
        self.params
            .validate(k)
            .map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn distributions(&self) -> &DistributionArray {
        &self.distributions
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn mask(&self) -> &ClassMask {
        &self.mask
    }

    /// Same model with a replaced mask.
    pub fn with_mask(&self, mask: ClassMask) -> Result<Self> {
        Self::from_parts(
            self.params.clone(),
            self.distributions.clone(),
            self.weights.clone(),
            mask,
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::Schema("missing field `format_version`".into()))?
            .as_u64()
            .ok_or_else(|| Error::Schema("`format_version` must be an integer".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let doc: ModelDocument =
            serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        let model = Self {
            format_version: doc.format_version,
            n_classes: doc.n_classes,
            params: doc.params,
            distributions: doc.distributions,
            weights: doc.weights,
            mask: doc.mask,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &SphModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SphModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SphModel::from_json(&text)
}

/// Fits a model on held-out validation data. Never pass training data: the
/// responses of samples the network was trained on are not representative.
pub fn fit(val: &LabeledResponses, params: &HyperParams) -> Result<SphModel> {
    params.validate(val.n_classes())?;
    let d = fit_range(val, params)?;
    let f = separation_matrix(&d);
    assemble(val, params, d, &f)
}

pub(crate) fn fit_range(val: &LabeledResponses, params: &HyperParams) -> Result<DistributionArray> {
    let range = ScoreRange::new(params.c_low, params.c_high)?;
    fit_distributions(&filter_by_score_range(val, range), params.center)
}

/// Builds the weights and mask for `params` on top of a fitted array and its
/// separation matrix.
pub(crate) fn assemble(
    val: &LabeledResponses,
    params: &HyperParams,
    d: DistributionArray,
    separation: &Matrix,
) -> Result<SphModel> {
    let w = weights_from_separation(separation, params.w1, params.alpha);
    let mask = fit_class_mask(val, &d, &w, params);
    SphModel::from_parts(params.clone(), d, w, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRoute {
    SoftmaxHigh,
    PooledTrusted,
    PooledReverted,
    PooledNoViable,
}

impl OutcomeRoute {
    pub const ALL: [OutcomeRoute; 4] = [
        OutcomeRoute::SoftmaxHigh,
        OutcomeRoute::PooledTrusted,
        OutcomeRoute::PooledReverted,
        OutcomeRoute::PooledNoViable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeRoute::SoftmaxHigh => "softmax_high",
            OutcomeRoute::PooledTrusted => "pooled_trusted",
            OutcomeRoute::PooledReverted => "pooled_reverted",
            OutcomeRoute::PooledNoViable => "pooled_no_viable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionOutcome {
    pub predicted: usize,
    pub route: OutcomeRoute,
    pub softmax_top: f64,
    pub pooled: Option<PooledPrediction>,
}

pub fn predict(sample: &[f64], model: &SphModel) -> Result<PredictionOutcome> {
    if sample.len() != model.n_classes {
        return Err(Error::DimensionMismatch {
            expected: model.n_classes,
            actual: sample.len(),
        });
    }
    Ok(predict_unchecked(sample, model))
}

fn predict_unchecked(sample: &[f64], model: &SphModel) -> PredictionOutcome {
    let top = softmax_top(sample);
    if route_for_top(top, model.params.c) == Route::SoftmaxPath {
        return PredictionOutcome {
            predicted: softmax_predict(sample),
            route: OutcomeRoute::SoftmaxHigh,
            softmax_top: top,
            pooled: None,
        };
    }
    let pooled = pooled_predict(sample, &model.distributions, &model.weights, &model.params);
    let (predicted, route) = match pooled.predicted {
        PooledClass::NoViableClass => (softmax_predict(sample), OutcomeRoute::PooledNoViable),
        PooledClass::Class(i) if model.mask.is_trusted(i) => (i, OutcomeRoute::PooledTrusted),
        PooledClass::Class(_) => (softmax_predict(sample), OutcomeRoute::PooledReverted),
    };
    PredictionOutcome {
        predicted,
        route,
        softmax_top: top,
        pooled: Some(pooled),
    }
}

/// Predicts every sample, in parallel, preserving input order.
pub fn predict_all(data: &LabeledResponses, model: &SphModel) -> Result<Vec<PredictionOutcome>> {
    if data.n_classes() != model.n_classes {
        return Err(Error::DimensionMismatch {
            expected: model.n_classes,
            actual: data.n_classes(),
        });
    }
    Ok((0..data.len())
        .into_par_iter()
        .map(|i| predict_unchecked(data.sample(i), model))
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub softmax_high: usize,
    pub pooled_trusted: usize,
    pub pooled_reverted: usize,
    pub pooled_no_viable: usize,
}

impl RouteCounts {
    pub fn record(&mut self, route: OutcomeRoute) {
        *self.slot(route) += 1;
    }

    pub fn get(&self, route: OutcomeRoute) -> usize {
        match route {
            OutcomeRoute::SoftmaxHigh => self.softmax_high,
            OutcomeRoute::PooledTrusted => self.pooled_trusted,
            OutcomeRoute::PooledReverted => self.pooled_reverted,
            OutcomeRoute::PooledNoViable => self.pooled_no_viable,
        }
    }

    fn slot(&mut self, route: OutcomeRoute) -> &mut usize {
        match route {
            OutcomeRoute::SoftmaxHigh => &mut self.softmax_high,
            OutcomeRoute::PooledTrusted => &mut self.pooled_trusted,
            OutcomeRoute::PooledReverted => &mut self.pooled_reverted,
            OutcomeRoute::PooledNoViable => &mut self.pooled_no_viable,
        }
    }

    pub fn total(&self) -> usize {
        OutcomeRoute::ALL.iter().map(|&r| self.get(r)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub count: usize,
    /// `None` when the class has no samples.
    pub sph_accuracy: Option<f64>,
    pub softmax_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Training-set size of the upstream model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<u64>,
    pub n_samples: usize,
    pub n_classes: usize,
    pub accuracy: f64,
    pub softmax_accuracy: f64,
    pub naive_bayes_accuracy: f64,
    /// `None` when softmax is already perfect on this data.
    pub relative_error_reduction: Option<f64>,
    pub routes: RouteCounts,
    pub per_class: Vec<ClassAccuracy>,
}

pub fn evaluate(data: &LabeledResponses, model: &SphModel) -> Result<EvalReport> {
    let outcomes = predict_all(data, model)?;
    let k = data.n_classes();
    let nb: Vec<usize> = (0..data.len())
        .into_par_iter()
        .map(|i| naive_bayes_predict(data.sample(i), &model.distributions))
        .collect();

    let mut routes = RouteCounts::default();
    let mut count = vec![0usize; k];
    let mut sph_hits = vec![0usize; k];
    let mut soft_hits = vec![0usize; k];
    let mut nb_hits = 0usize;
    for (i, (out, label)) in outcomes.iter().zip(data.labels()).enumerate() {
        routes.record(out.route);
        count[*label] += 1;
        if out.predicted == *label {
            sph_hits[*label] += 1;
        }
        if softmax_predict(data.sample(i)) == *label {
            soft_hits[*label] += 1;
        }
        if nb[i] == *label {
            nb_hits += 1;
        }
    }
    let n = data.len() as f64;
    let accuracy = sph_hits.iter().sum::<usize>() as f64 / n;
    let softmax_accuracy = soft_hits.iter().sum::<usize>() as f64 / n;
    let ratio = |hits: usize, c: usize| (c > 0).then(|| hits as f64 / c as f64);
    Ok(EvalReport {
        n_train: None,
        n_samples: data.len(),
        n_classes: k,
        accuracy,
        softmax_accuracy,
        naive_bayes_accuracy: nb_hits as f64 / n,
        relative_error_reduction: relative_error_reduction(softmax_accuracy, accuracy).ok(),
        routes,
        per_class: (0..k)
            .map(|c| ClassAccuracy {
                class: c,
                count: count[c],
                sph_accuracy: ratio(sph_hits[c], count[c]),
                softmax_accuracy: ratio(soft_hits[c], count[c]),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::CenterStatistic;

    fn toy_model(c: f64, mask: Vec<bool>) -> SphModel {
        let k = 3;
        let d = DistributionArray {
            center_statistic: CenterStatistic::Mean,
            sigma_floor: 1e-6,
            mu: Matrix::from_fn(k, k, |i, j| if i == j { 4.0 } else { 0.0 }),
            sigma_left: Matrix::filled(k, k, 1.0),
            sigma_right: Matrix::filled(k, k, 1.0),
        };
        let w = WeightMatrix {
            w: Matrix::filled(k, k, 1.0 / 3.0),
            row_fallback: vec![false; k],
        };
        let params = HyperParams {
            c,
            v1: f64::INFINITY,
            ..Default::default()
        };
        SphModel::from_parts(params, d, w, ClassMask(mask)).unwrap()
    }

    #[test]
    fn gate_zero_is_softmax() {
        let m = toy_model(0.0, vec![true; 3]);
        let out = predict(&[0.0, 0.1, 0.0], &m).unwrap();
        assert_eq!(out.route, OutcomeRoute::SoftmaxHigh);
        assert_eq!(out.predicted, 1);
        assert!(out.pooled.is_none());
    }

    #[test]
    fn trusted_pooled_class_is_kept() {
        let m = toy_model(1.01, vec![true; 3]);
        // Softmax says class 0 (0.3 > 0.2) but unit 2 sits on class 2's center.
        let out = predict(&[0.3, 0.2, 0.25], &m).unwrap();
        assert_eq!(
            out.pooled.as_ref().unwrap().predicted,
            PooledClass::Class(0)
        );
        let out = predict(&[1.0, 0.0, 4.0], &m).unwrap();
        assert_eq!(out.route, OutcomeRoute::PooledTrusted);
        assert_eq!(out.predicted, 2);
    }

    #[test]
    fn untrusted_pooled_class_reverts() {
        let m = toy_model(1.01, vec![true, true, false]);
        let out = predict(&[3.0, 0.0, 3.5], &m).unwrap();
        assert_eq!(
            out.pooled.as_ref().unwrap().predicted,
            PooledClass::Class(2)
        );
        assert_eq!(out.route, OutcomeRoute::PooledReverted);
        assert_eq!(out.predicted, softmax_predict(&[3.0, 0.0, 3.5]));
    }

    #[test]
    fn dimension_mismatch() {
        let m = toy_model(0.5, vec![true; 3]);
        assert!(matches!(
            predict(&[1.0, 2.0], &m),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn json_round_trip_and_schema_errors() {
        let m = toy_model(0.7, vec![true, false, true]);
        let json = m.to_json();
        assert_eq!(SphModel::from_json(&json).unwrap(), m);

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v.as_object_mut().unwrap().remove("mask");
        let err = SphModel::from_json(&v.to_string()).unwrap_err();
        assert!(
            matches!(err, Error::Schema(ref s) if s.contains("mask")),
            "{err}"
        );

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            SphModel::from_json(&v.to_string()),
            Err(Error::VersionMismatch { found: 99, .. })
        ));

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["weights"]["w"] = serde_json::json!([[0.5, 0.5], [0.5, 0.5]]);
        v["weights"]["row_fallback"] = serde_json::json!([false, false]);
        assert!(matches!(
            SphModel::from_json(&v.to_string()),
            Err(Error::Schema(_))
        ));
    }
}
