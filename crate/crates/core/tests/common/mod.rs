#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sph_core::calibration::{HyperParams, WeightMatrix};
use sph_core::dist::{CenterStatistic, DistributionArray};
use sph_core::{LabeledResponses, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_array<R: Rng>(rng: &mut R, k: usize) -> DistributionArray {
    DistributionArray {
        center_statistic: CenterStatistic::Mean,
        sigma_floor: 1e-6,
        mu: Matrix::from_fn(k, k, |_, _| rng.random_range(-3.0..3.0)),
        sigma_left: Matrix::from_fn(k, k, |_, _| rng.random_range(0.2..2.0)),
        sigma_right: Matrix::from_fn(k, k, |_, _| rng.random_range(0.2..2.0)),
    }
}

/// Random row-normalized weights with some zero entries and, occasionally,
/// all-zero fallback rows.
pub fn random_weights<R: Rng>(rng: &mut R, k: usize) -> WeightMatrix {
    let mut w = Matrix::zeros(k, k);
    let mut row_fallback = vec![false; k];
    for i in 0..k {
        if rng.random_bool(0.1) {
            row_fallback[i] = true;
            continue;
        }
        let mut raw: Vec<f64> = (0..k)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.1..3.0)
                }
            })
            .collect();
        if raw.iter().all(|&x| x == 0.0) {
            raw[rng.random_range(0..k)] = 1.0;
        }
        let total: f64 = raw.iter().sum();
        for j in 0..k {
            w[(i, j)] = raw[j] / total;
        }
    }
    WeightMatrix { w, row_fallback }
}

pub fn random_params<R: Rng>(rng: &mut R, k: usize) -> HyperParams {
    HyperParams {
        c: rng.random_range(0.0..1.01),
        c_low: 0.0,
        c_high: 1.0,
        w1: rng.random_range(0.0..2.0),
        alpha: rng.random_range(0.5..3.0),
        v1: rng.random_range(0.5..4.0),
        v2: rng.random_range(1..=k),
        a1: rng.random_range(-0.2..0.2),
        m2: [0.5, 1.0, 2.0, 3.0][rng.random_range(0..4)],
        center: CenterStatistic::Mean,
    }
}

pub fn random_dataset<R: Rng>(rng: &mut R, k: usize, n: usize, spread: f64) -> LabeledResponses {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let responses = Matrix::from_fn(n, k, |_, _| rng.random_range(-spread..spread));
    LabeledResponses::new(k, responses, labels).unwrap()
}

/// Dataset where every class appears at least twice and the class's home
/// unit is raised, so models fitted on it are non-degenerate.
pub fn structured_dataset<R: Rng>(rng: &mut R, k: usize, per_class: usize) -> LabeledResponses {
    let n = k * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let responses = Matrix::from_fn(n, k, |i, j| {
        let base = if labels[i] == j { 2.0 } else { 0.0 };
        base + rng.random_range(-1.5..1.5)
    });
    LabeledResponses::new(k, responses, labels).unwrap()
}

/// Independent, deliberately naive pooled prediction: returns the winning
/// class or `None`.
pub fn brute_force_pooled(
    sample: &[f64],
    d: &DistributionArray,
    w: &WeightMatrix,
    v1: f64,
    v2: usize,
    m2: f64,
) -> Option<usize> {
    let k = sample.len();
    let mut winner: Option<usize> = None;
    let mut winner_score = 0.0;
    for i in 0..k {
        let mut dist = vec![0.0; k];
        let mut flagged = 0;
        for j in 0..k {
            let x = sample[j];
            let mu = d.mu[(i, j)];
            dist[j] = if x < mu {
                (mu - x) / d.sigma_left[(i, j)]
            } else if x > mu {
                (x - mu) / d.sigma_right[(i, j)]
            } else {
                0.0
            };
            if dist[j] >= v1 {
                flagged += 1;
            }
        }
        if flagged >= v2 {
            continue;
        }
        let mut any_weight = false;
        let mut score = 0.0;
        for j in 0..k {
            let wij = w.w[(i, j)];
            if wij != 0.0 {
                any_weight = true;
            }
            score += (wij * dist[j]).powf(m2);
        }
        if !any_weight {
            continue;
        }
        if winner.is_none() || score < winner_score {
            winner = Some(i);
            winner_score = score;
        }
    }
    winner
}

/// Independent naive-Bayes reference on squared asymmetric distances.
pub fn brute_force_naive_bayes(sample: &[f64], d: &DistributionArray) -> usize {
    let k = sample.len();
    let mut best = 0;
    let mut best_total = f64::INFINITY;
    for i in 0..k {
        let mut total = 0.0;
        for j in 0..k {
            let diff = sample[j] - d.mu[(i, j)];
            let sigma = if diff < 0.0 {
                d.sigma_left[(i, j)]
            } else {
                d.sigma_right[(i, j)]
            };
            let m = diff.abs() / sigma;
            total += m * m;
        }
        if total < best_total {
            best = i;
            best_total = total;
        }
    }
    best
}

/// Standard normal draws via Box-Muller, independent of `rand_distr`.
pub fn box_muller<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        out.push(r * t.cos());
        if out.len() < n {
            out.push(r * t.sin());
        }
    }
    out
}
