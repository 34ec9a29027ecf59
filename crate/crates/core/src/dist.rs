//! Asymmetric-Gaussian characterization of the class-response array.
//!
//! Cell `(i, j)` describes how response unit `j` reacts to samples of class
//! `i`: a center `mu` plus separate left and right spreads. Each spread is
//! the standard deviation of the samples on that side of the center,
//! reflected about the center.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledResponses;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scoring::softmax_top;
use crate::stats::{mean, median, population_std};

/// Relative size of the spread floor against the global response scale.
pub const SIGMA_FLOOR_RELATIVE: f64 = 1e-6;
/// Lower bound on the global response scale used to derive the floor.
pub const MIN_RESPONSE_SCALE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterStatistic {
    #[default]
    Mean,
    Median,
}

impl CenterStatistic {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            CenterStatistic::Mean => mean(values),
            CenterStatistic::Median => median(values),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionArray {
    pub center_statistic: CenterStatistic,
    /// Floor applied to every spread when fitting.
    pub sigma_floor: f64,
    pub mu: Matrix,
    pub sigma_left: Matrix,
    pub sigma_right: Matrix,
}

impl DistributionArray {
    pub fn n_classes(&self) -> usize {
        self.mu.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.rows();
        for (name, m) in [
            ("mu", &self.mu),
            ("sigma_left", &self.sigma_left),
            ("sigma_right", &self.sigma_right),
        ] {
            if m.rows() != k || m.cols() != k {
                return Err(Error::Schema(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.all_finite() {
                return Err(Error::Schema(format!("{name} has non-finite entries")));
            }
        }
        if k < 2 {
            return Err(Error::Schema(format!("distribution array has {k} classes")));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Schema("sigma_floor must be positive".into()));
        }
        let below = |m: &Matrix| m.as_slice().iter().any(|&s| s < self.sigma_floor);
        if below(&self.sigma_left) || below(&self.sigma_right) {
            return Err(Error::Schema("spread below sigma_floor".into()));
        }
        Ok(())
    }
}

/// Closed interval of top softmax scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRange {
    low: f64,
    high: f64,
}

impl ScoreRange {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low >= high {
            return Err(Error::InvalidParams(format!(
                "score range [{low}, {high}] must satisfy 0 <= low < high <= 1"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn contains(&self, top: f64) -> bool {
        self.low <= top && top <= self.high
    }
}

/// Samples whose top softmax score lies in `range`, in their original order.
pub fn filter_by_score_range(data: &LabeledResponses, range: ScoreRange) -> LabeledResponses {
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| range.contains(softmax_top(data.sample(i))))
        .collect();
    if keep.is_empty() {
        return LabeledResponses::from_parts_unchecked(
            data.n_classes(),
            Matrix::zeros(0, data.n_classes()),
            Vec::new(),
        );
    }
    data.subset(&keep)
}

/// One-sided spread: the population standard deviation of the samples on
/// `side` of `center`, reflected about the center. Values equal to the
/// center are on neither side. Returns `floor` for an empty side or when the
/// spread falls below it.
pub fn mirror_sigma(values: &[f64], center: f64, side: Side, floor: f64) -> f64 {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for &v in values {
        let d = v - center;
        let on_side = match side {
            Side::Right => d > 0.0,
            Side::Left => d < 0.0,
        };
        if on_side {
            sum_sq += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return floor;
    }
    // The reflected multiset {d, -d} has mean zero; each square appears twice
    // among its 2*count members.
    let sigma = (sum_sq / count as f64).sqrt();
    if sigma < floor {
        floor
    } else {
        sigma
    }
}

/// Spread floor for a filtered set: a fixed fraction of the standard
/// deviation of all its responses.
pub fn sigma_floor_for(data: &LabeledResponses) -> f64 {
    let scale = population_std(data.responses().as_slice()).max(MIN_RESPONSE_SCALE);
    SIGMA_FLOOR_RELATIVE * scale
}

/// Fits `mu`, `sigma_left`, `sigma_right` for every (class, unit) cell.
pub fn fit_distributions(
    filtered: &LabeledResponses,
    center_statistic: CenterStatistic,
) -> Result<DistributionArray> {
    let k = filtered.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (idx, &label) in filtered.labels().iter().enumerate() {
        by_class[label].push(idx);
    }
    if let Some(class) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass { class });
    }

    let floor = sigma_floor_for(filtered);
    let mut mu = Matrix::zeros(k, k);
    let mut sigma_left = Matrix::zeros(k, k);
    let mut sigma_right = Matrix::zeros(k, k);
    let mut column = Vec::new();
    for (i, members) in by_class.iter().enumerate() {
        for j in 0..k {
            column.clear();
            column.extend(members.iter().map(|&s| filtered.sample(s)[j]));
            let center = center_statistic.apply(&column);
            mu[(i, j)] = center;
            sigma_left[(i, j)] = mirror_sigma(&column, center, Side::Left, floor);
            sigma_right[(i, j)] = mirror_sigma(&column, center, Side::Right, floor);
        }
    }
    Ok(DistributionArray {
        center_statistic,
        sigma_floor: floor,
        mu,
        sigma_left,
        sigma_right,
    })
}
