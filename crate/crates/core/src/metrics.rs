//! Figures of merit: relative error reduction, accuracy-versus-training-size
//! quadratics with the derived "wasted data" estimate, and report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::EvalReport;
use crate::sweep::{correlation_report, CorrelationReport, Selection, SweepResult};

/// `(Err_softmax - Err_sph) / Err_softmax`. Negative when the hybrid loses.
pub fn relative_error_reduction(acc_softmax: f64, acc_sph: f64) -> Result<f64> {
    let err_softmax = 1.0 - acc_softmax;
    if err_softmax <= 0.0 {
        return Err(Error::PerfectBaseline);
    }
    let err_sph = 1.0 - acc_sph;
    Ok((err_softmax - err_sph) / err_softmax)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub n_train: u64,
    pub acc_softmax: f64,
    pub acc_sph: f64,
}

/// Least-squares quadratic `y = a n^2 + b n + c`.
///
/// Fitted in the standardized variable `t = (n - center) / scale` for
/// conditioning; raw coefficients are derived on demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    center: f64,
    scale: f64,
    /// Coefficients of `1, t, t^2`.
    t_coeffs: [f64; 3],
}

impl Quadratic {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let mut distinct = xs.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::Insufficient(format!(
                "quadratic fit needs at least 3 distinct x values, got {}",
                distinct.len()
            )));
        }
        let center = xs.iter().sum::<f64>() / xs.len() as f64;
        let scale = xs.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
        let design = DMatrix::from_fn(xs.len(), 3, |r, c| {
            ((xs[r] - center) / scale).powi(c as i32)
        });
        let rhs = DVector::from_column_slice(ys);
        let sol = design
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::Insufficient(format!("least squares failed: {e}")))?;
        Ok(Self {
            center,
            scale,
            t_coeffs: [sol[0], sol[1], sol[2]],
        })
    }

    /// `[a, b, c]` for `a n^2 + b n + c`.
    pub fn coefficients(&self) -> [f64; 3] {
        let [p0, p1, p2] = self.t_coeffs;
        let (m, s) = (self.center, self.scale);
        let a = p2 / (s * s);
        let b = p1 / s - 2.0 * p2 * m / (s * s);
        let c = p0 - p1 * m / s + p2 * m * m / (s * s);
        [a, b, c]
    }

    pub fn eval(&self, n: f64) -> f64 {
        let t = (n - self.center) / self.scale;
        let [p0, p1, p2] = self.t_coeffs;
        p0 + t * (p1 + t * p2)
    }

    /// Real solutions of `eval(n) = y`, ascending.
    pub fn solve(&self, y: f64) -> Vec<f64> {
        let [p0, p1, p2] = self.t_coeffs;
        let c = p0 - y;
        let mut roots = Vec::with_capacity(2);
        if p2 == 0.0 {
            if p1 != 0.0 {
                roots.push(-c / p1);
            }
        } else {
            let disc = p1 * p1 - 4.0 * p2 * c;
            if disc >= 0.0 {
                let q = -0.5 * (p1 + p1.signum() * disc.sqrt());
                if q != 0.0 {
                    roots.push(q / p2);
                    roots.push(c / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
        let mut ns: Vec<f64> = roots
            .into_iter()
            .map(|t| t * self.scale + self.center)
            .collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        ns
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WastePoint {
    pub n_train: u64,
    /// Hybrid accuracy read off its fitted curve at `n_train`.
    pub acc_sph_fitted: f64,
    /// Training size at which the softmax curve reaches the same accuracy.
    pub n_softmax_equivalent: Option<f64>,
    /// `(n_softmax_equivalent - n_train) / n_train * 100`.
    pub waste_percent: Option<f64>,
    /// The equivalent size lies outside the fitted `n_train` range.
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WasteCurve {
    pub softmax: Quadratic,
    pub sph: Quadratic,
    pub n_min: u64,
    pub n_max: u64,
    pub points: Vec<WastePoint>,
}

/// Relative slack before an equivalent size counts as extrapolated.
const RANGE_TOLERANCE: f64 = 1e-9;

/// Fits accuracy-versus-`n_train` quadratics for both methods and, for every
/// point, how much more training data softmax would need to match the hybrid.
///
/// Among the real roots, the one inside the fitted range is used, else the
/// one nearest to it (ties: nearest to the point's own `n_train`).
pub fn fit_waste_curve(points: &[AccuracyPoint]) -> Result<WasteCurve> {
    let xs: Vec<f64> = points.iter().map(|p| p.n_train as f64).collect();
    let soft: Vec<f64> = points.iter().map(|p| p.acc_softmax).collect();
    let sph: Vec<f64> = points.iter().map(|p| p.acc_sph).collect();
    let softmax_q = Quadratic::fit(&xs, &soft)?;
    let sph_q = Quadratic::fit(&xs, &sph)?;
    let n_min = points.iter().map(|p| p.n_train).min().unwrap_or(0);
    let n_max = points.iter().map(|p| p.n_train).max().unwrap_or(0);
    let (lo, hi) = (n_min as f64, n_max as f64);
    let range_distance = |n: f64| {
        if n < lo {
            lo - n
        } else if n > hi {
            n - hi
        } else {
            0.0
        }
    };

    let waste = points
        .iter()
        .map(|p| {
            let n = p.n_train as f64;
            let target = sph_q.eval(n);
            let root = softmax_q.solve(target).into_iter().min_by(|a, b| {
                range_distance(*a)
                    .total_cmp(&range_distance(*b))
                    .then((a - n).abs().total_cmp(&(b - n).abs()))
            });
            WastePoint {
                n_train: p.n_train,
                acc_sph_fitted: target,
                n_softmax_equivalent: root,
                waste_percent: root.map(|r| (r - n) / n * 100.0),
                extrapolated: root.is_some_and(|r| range_distance(r) > RANGE_TOLERANCE * (hi - lo)),
            }
        })
        .collect();
    Ok(WasteCurve {
        softmax: softmax_q,
        sph: sph_q,
        n_min,
        n_max,
        points: waste,
    })
}

/// Inputs for [`emit_report`].
#[derive(Clone, Debug, Default)]
pub struct ReportInputs {
    pub evals: Vec<EvalReport>,
    pub sweep: Option<SweepResult>,
}

#[derive(Clone, Serialize)]
struct EvalSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_train: Option<u64>,
    n_samples: usize,
    softmax_accuracy: f64,
    sph_accuracy: f64,
    raw_gain: f64,
    relative_error_reduction: Option<f64>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    n_rows: usize,
    n_skipped: usize,
    n_failed: usize,
    selection: Option<&'a Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlation: Option<CorrelationReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    evals: Vec<EvalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    waste_curve: Option<WasteCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSummary<'a>>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `summary.json` plus plot-ready CSV tables into `dir`. Tables with
/// no rows are not written.
pub fn emit_report(inputs: &ReportInputs, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(name.to_string());
        Ok(())
    };

    let evals: Vec<EvalSummary> = inputs
        .evals
        .iter()
        .map(|e| EvalSummary {
            n_train: e.n_train,
            n_samples: e.n_samples,
            softmax_accuracy: e.softmax_accuracy,
            sph_accuracy: e.accuracy,
            raw_gain: e.accuracy - e.softmax_accuracy,
            relative_error_reduction: relative_error_reduction(e.softmax_accuracy, e.accuracy).ok(),
        })
        .collect();

    let mut by_n: Vec<EvalSummary> = evals
        .iter()
        .filter(|e| e.n_train.is_some())
        .cloned()
        .collect();
    by_n.sort_by_key(|e| e.n_train);
    let points: Vec<AccuracyPoint> = by_n
        .iter()
        .map(|e| AccuracyPoint {
            n_train: e.n_train.unwrap_or_default(),
            acc_softmax: e.softmax_accuracy,
            acc_sph: e.sph_accuracy,
        })
        .collect();
    let waste_curve = fit_waste_curve(&points).ok();

    let sweep = inputs.sweep.as_ref().filter(|s| !s.rows.is_empty());
    let summary = Summary {
        waste_curve: waste_curve.clone(),
        sweep: sweep.map(|s| SweepSummary {
            n_rows: s.rows.len(),
            n_skipped: s.skipped.len(),
            n_failed: s.rows.iter().filter(|r| r.error.is_some()).count(),
            selection: s.selection.as_ref(),
            correlation: correlation_report(s).ok(),
        }),
        evals,
    };

    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write("summary.json", json)?;

    if !by_n.is_empty() {
        let mut t = String::from(
            "n_train,softmax_accuracy,sph_accuracy,raw_gain,relative_error_reduction\n",
        );
        for e in &by_n {
            let _ = writeln!(
                t,
                "{},{},{},{},{}",
                e.n_train.unwrap_or_default(),
                e.softmax_accuracy,
                e.sph_accuracy,
                e.raw_gain,
                cell(e.relative_error_reduction)
            );
        }
        write("accuracy_vs_ntrain.csv", t)?;
    }

    if !summary.evals.is_empty() {
        let mut t = String::from("softmax_accuracy,raw_gain,relative_error_reduction\n");
        for e in &summary.evals {
            let _ = writeln!(
                t,
                "{},{},{}",
                e.softmax_accuracy,
                e.raw_gain,
                cell(e.relative_error_reduction)
            );
        }
        write("reduction_vs_accuracy.csv", t)?;
    }

    if let Some(curve) = &waste_curve {
        let mut t = String::from(
            "n_train,sph_accuracy_fitted,n_softmax_equivalent,waste_percent,extrapolated\n",
        );
        for p in &curve.points {
            let _ = writeln!(
                t,
                "{},{},{},{},{}",
                p.n_train,
                p.acc_sph_fitted,
                cell(p.n_softmax_equivalent),
                cell(p.waste_percent),
                p.extrapolated
            );
        }
        write("waste.csv", t)?;
    }

    if let Some(s) = sweep {
        let mut t = String::from("index,val_reduction,test_reduction\n");
        for r in &s.rows {
            if let Some(m) = &r.metrics {
                let _ = writeln!(
                    t,
                    "{},{},{}",
                    r.index,
                    cell(m.val_reduction),
                    cell(m.test_reduction)
                );
            }
        }
        write("sweep_scatter.csv", t)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_arithmetic() {
        let r = relative_error_reduction(0.9, 0.92).unwrap();
        assert!((r - 0.2).abs() < 1e-15, "{r}");
        assert_eq!(relative_error_reduction(0.7, 0.7).unwrap(), 0.0);
        let r = relative_error_reduction(0.5, 0.4).unwrap();
        assert!((r + 0.2).abs() < 1e-15, "{r}");
        assert!(matches!(
            relative_error_reduction(1.0, 1.0),
            Err(Error::PerfectBaseline)
        ));
    }

    #[test]
    fn three_points_interpolate() {
        // y = 0.5 x^2 - 2 x + 3
        let f = |x: f64| 0.5 * x * x - 2.0 * x + 3.0;
        let xs = [1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let q = Quadratic::fit(&xs, &ys).unwrap();
        let [a, b, c] = q.coefficients();
        assert!((a - 0.5).abs() < 1e-9 && (b + 2.0).abs() < 1e-9 && (c - 3.0).abs() < 1e-9);
        for (&x, &y) in xs.iter().zip(&ys) {
            assert!((q.eval(x) - y).abs() < 1e-9);
        }
        let roots = q.solve(f(4.0));
        assert_eq!(roots.len(), 2);
        assert!(
            (roots[0] - 0.0).abs() < 1e-9 && (roots[1] - 4.0).abs() < 1e-9,
            "{roots:?}"
        );
    }

    #[test]
    fn too_few_distinct_points() {
        assert!(Quadratic::fit(&[1.0, 1.0, 2.0], &[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn linear_data_solves() {
        let q = Quadratic::fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        let roots = q.solve(4.0);
        assert!(roots.iter().any(|r| (r - 1.5).abs() < 1e-9), "{roots:?}");
    }

    #[test]
    fn identical_curves_waste_nothing() {
        let pts: Vec<AccuracyPoint> = [100u64, 1000, 5000, 10000]
            .iter()
            .map(|&n| {
                let x = n as f64;
                let acc = 0.7 + 3e-5 * x - 1.2e-9 * x * x;
                AccuracyPoint {
                    n_train: n,
                    acc_softmax: acc,
                    acc_sph: acc,
                }
            })
            .collect();
        let curve = fit_waste_curve(&pts).unwrap();
        for p in &curve.points {
            assert!(p.waste_percent.unwrap().abs() < 1e-6, "{p:?}");
            assert!(!p.extrapolated);
        }
    }
}
