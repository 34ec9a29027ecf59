//! Synthetic response generator and its exact Bayes classifier.
//!
//! Each (class, unit) cell is an asymmetric Gaussian: a half-normal of
//! spread `sigma_left` below `mu` and one of spread `sigma_right` above it,
//! joined so the density is continuous at `mu`. The left half carries
//! probability `sigma_left / (sigma_left + sigma_right)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledResponses;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_classes: usize,
    pub true_mu: Matrix,
    pub true_sigma_left: Matrix,
    pub true_sigma_right: Matrix,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes;
        if k < 2 {
            return Err(Error::InvalidParams(format!("n_classes = {k} < 2")));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidParams(
                "samples_per_class must be positive".into(),
            ));
        }
        for (name, m) in [
            ("true_mu", &self.true_mu),
            ("true_sigma_left", &self.true_sigma_left),
            ("true_sigma_right", &self.true_sigma_right),
        ] {
            if m.rows() != k || m.cols() != k {
                return Err(Error::InvalidParams(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.all_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        let non_positive = |m: &Matrix| m.as_slice().iter().any(|&s| s <= 0.0);
        if non_positive(&self.true_sigma_left) || non_positive(&self.true_sigma_right) {
            return Err(Error::InvalidParams("spreads must be positive".into()));
        }
        Ok(())
    }
}

/// Draws one value from the asymmetric Gaussian `(mu, sigma_left, sigma_right)`.
pub fn sample_asymmetric<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma_left: f64,
    sigma_right: f64,
) -> f64 {
    let p_left = sigma_left / (sigma_left + sigma_right);
    let go_left = rng.random::<f64>() < p_left;
    let z: f64 = StandardNormal.sample(rng);
    if go_left {
        mu - sigma_left * z.abs()
    } else {
        mu + sigma_right * z.abs()
    }
}

/// Log-density of the asymmetric Gaussian at `x`.
pub fn asymmetric_log_density(x: f64, mu: f64, sigma_left: f64, sigma_right: f64) -> f64 {
    let sigma = if x < mu { sigma_left } else { sigma_right };
    let z = (x - mu) / sigma;
    (2.0 / (sigma_left + sigma_right)).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
}

/// Generates `samples_per_class` samples of every class, grouped by class.
/// Class `i` draws from ChaCha8 seeded with `seed` on stream `i`, so the
/// output is independent of thread count.
pub fn generate(spec: &GeneratorSpec) -> Result<LabeledResponses> {
    spec.validate()?;
    let k = spec.n_classes;
    let n = spec.samples_per_class;
    let blocks: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let mut block = Vec::with_capacity(n * k);
            for _ in 0..n {
                for j in 0..k {
                    block.push(sample_asymmetric(
                        &mut rng,
                        spec.true_mu[(i, j)],
                        spec.true_sigma_left[(i, j)],
                        spec.true_sigma_right[(i, j)],
                    ));
                }
            }
            block
        })
        .collect();
    let labels = (0..k).flat_map(|i| std::iter::repeat_n(i, n)).collect();
    LabeledResponses::new(k, Matrix::from_vec(k * n, k, blocks.concat()), labels)
}

/// Class with the highest exact generative log-density; lowest index on ties.
pub fn bayes_oracle(sample: &[f64], spec: &GeneratorSpec) -> usize {
    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..spec.n_classes {
        let ll: f64 = sample
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                asymmetric_log_density(
                    x,
                    spec.true_mu[(i, j)],
                    spec.true_sigma_left[(i, j)],
                    spec.true_sigma_right[(i, j)],
                )
            })
            .sum();
        if ll > best_ll {
            best = i;
            best_ll = ll;
        }
    }
    best
}

/// Home-unit response of every class in the confusion fixture.
pub const FIXTURE_HOME: f64 = 6.0;
/// How far the confusable pair's second home unit sits below the first.
pub const FIXTURE_PAIR_GAP: f64 = 0.3;
/// Off-unit shift separating the confusable pair (`+` for one, `-` for the other).
pub const FIXTURE_OFF_SHIFT: f64 = 2.0;

/// The two classes the confusion fixture makes confusable: `(1, K - 1)`.
pub fn confusable_pair(n_classes: usize) -> (usize, usize) {
    (1, n_classes - 1)
}

/// Units on which the confusable pair is separated: up to three units
/// outside the pair's own home units.
pub fn separating_units(n_classes: usize) -> Vec<usize> {
    let (a, b) = confusable_pair(n_classes);
    (0..n_classes)
        .filter(|&j| j != a && j != b)
        .take(3)
        .collect()
}

/// A generator where classes `a, b = confusable_pair(K)` respond almost
/// identically on their home units (so softmax confuses them) but sit
/// `2 * FIXTURE_OFF_SHIFT` standard deviations apart on the separating units.
/// Every other class has a clean home unit.
pub fn confusion_fixture(
    n_classes: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<GeneratorSpec> {
    if n_classes < 3 {
        return Err(Error::InvalidParams(format!(
            "confusion fixture needs at least 3 classes, got {n_classes}"
        )));
    }
    let k = n_classes;
    let (a, b) = confusable_pair(k);
    let mut mu = Matrix::from_fn(k, k, |i, j| if i == j { FIXTURE_HOME } else { 0.0 });
    mu[(a, a)] = FIXTURE_HOME;
    mu[(a, b)] = FIXTURE_HOME - FIXTURE_PAIR_GAP;
    mu[(b, b)] = FIXTURE_HOME;
    mu[(b, a)] = FIXTURE_HOME - FIXTURE_PAIR_GAP;
    for j in separating_units(k) {
        mu[(a, j)] = FIXTURE_OFF_SHIFT;
        mu[(b, j)] = -FIXTURE_OFF_SHIFT;
    }
    let spec = GeneratorSpec {
        n_classes: k,
        true_mu: mu,
        true_sigma_left: Matrix::filled(k, k, 1.0),
        true_sigma_right: Matrix::filled(k, k, 1.0),
        samples_per_class,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}
