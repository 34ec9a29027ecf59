//! Grid sweep over hyperparameters with validation/test gain recording.
//!
//! Every grid point is fitted on the validation set, re-applied to it, and
//! applied to the test set. Points are independent and run in parallel;
//! rows are always merged back in grid order, so the result does not depend
//! on scheduling. Distribution arrays are shared between points with the
//! same fitting range.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{separation_matrix, HyperParams};
use crate::dataset::LabeledResponses;
use crate::dist::{CenterStatistic, DistributionArray};
use crate::error::{Error, Result};
use crate::hybrid::{assemble, evaluate, fit_range, RouteCounts};
use crate::matrix::Matrix;
use crate::stats::pearson;

/// Candidate values per hyperparameter. The fitting range is given as
/// offsets from the gate: `c_low = c - c_low_offset`, `c_high = c +
/// c_high_offset`, both clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub c: Vec<f64>,
    pub c_low_offset: Vec<f64>,
    pub c_high_offset: Vec<f64>,
    pub w1: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(with = "crate::extended_float::vec")]
    pub v1: Vec<f64>,
    pub v2: Vec<usize>,
    #[serde(with = "crate::extended_float::vec")]
    pub a1: Vec<f64>,
    pub m2: Vec<f64>,
    #[serde(default)]
    pub center: CenterStatistic,
}

impl SweepGrid {
    /// Number of combinations, skipped ones included.
    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    fn dims(&self) -> [usize; 9] {
        [
            self.c.len(),
            self.c_low_offset.len(),
            self.c_high_offset.len(),
            self.w1.len(),
            self.alpha.len(),
            self.v1.len(),
            self.v2.len(),
            self.a1.len(),
            self.m2.len(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedGrid {
    pub points: Vec<(usize, HyperParams)>,
    pub skipped: Vec<SkippedPoint>,
}

const PARAM_NAMES: [&str; 9] = [
    "c",
    "c_low_offset",
    "c_high_offset",
    "w1",
    "alpha",
    "v1",
    "v2",
    "a1",
    "m2",
];

/// Cartesian product in declaration order, last parameter varying fastest.
/// Combinations that violate the hyperparameter invariants are skipped and
/// recorded with their reason.
pub fn expand_grid(grid: &SweepGrid, n_classes: usize) -> Result<ExpandedGrid> {
    let dims = grid.dims();
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidGrid(format!(
            "`{}` has no values",
            PARAM_NAMES[pos]
        )));
    }
    let total = grid.size();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut idx = [0usize; 9];
    for index in 0..total {
        let c = grid.c[idx[0]];
        let params = HyperParams {
            c,
            c_low: (c - grid.c_low_offset[idx[1]]).clamp(0.0, 1.0),
            c_high: (c + grid.c_high_offset[idx[2]]).clamp(0.0, 1.0),
            w1: grid.w1[idx[3]],
            alpha: grid.alpha[idx[4]],
            v1: grid.v1[idx[5]],
            v2: grid.v2[idx[6]],
            a1: grid.a1[idx[7]],
            m2: grid.m2[idx[8]],
            center: grid.center,
        };
        match params.validate(n_classes) {
            Ok(()) => points.push((index, params)),
            Err(e) => skipped.push(SkippedPoint {
                index,
                reason: e.to_string(),
            }),
        }
        // Odometer increment, rightmost digit fastest.
        for d in (0..9).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidGrid(format!(
            "empty product: all {total} combinations are invalid"
        )));
    }
    Ok(ExpandedGrid { points, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub val_softmax_accuracy: f64,
    pub val_accuracy: f64,
    pub val_reduction: Option<f64>,
    pub test_softmax_accuracy: f64,
    pub test_accuracy: f64,
    pub test_reduction: Option<f64>,
    pub val_routes: RouteCounts,
    pub test_routes: RouteCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<RowMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    BestValidation,
    BestTest,
}

impl SelectionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionPolicy::BestValidation => "best-validation",
            SelectionPolicy::BestTest => "best-test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub policy: SelectionPolicy,
    pub index: usize,
    pub params: HyperParams,
    pub val_reduction: Option<f64>,
    pub test_reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid_size: usize,
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedPoint>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<Selection>,
}

type FittedRange = std::result::Result<(DistributionArray, Matrix), String>;

fn range_key(p: &HyperParams) -> (u64, u64) {
    (p.c_low.to_bits(), p.c_high.to_bits())
}

/// Runs the sweep. `threads = None` uses the global rayon pool.
pub fn run_sweep(
    val: &LabeledResponses,
    test: &LabeledResponses,
    grid: &SweepGrid,
    threads: Option<usize>,
) -> Result<SweepResult> {
    if val.n_classes() != test.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: val.n_classes(),
            actual: test.n_classes(),
        });
    }
    let expanded = expand_grid(grid, val.n_classes())?;
    let work = || sweep_points(val, test, &expanded.points);
    let rows = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidGrid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(SweepResult {
        grid_size: grid.size(),
        rows,
        skipped: expanded.skipped,
        selection: None,
    })
}

fn sweep_points(
    val: &LabeledResponses,
    test: &LabeledResponses,
    points: &[(usize, HyperParams)],
) -> Vec<SweepRow> {
    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut reps: Vec<&HyperParams> = Vec::new();
    for (_, p) in points {
        let key = range_key(p);
        if !keys.contains(&key) {
            keys.push(key);
            reps.push(p);
        }
    }
    let fitted: Vec<FittedRange> = reps
        .par_iter()
        .map(|p| {
            fit_range(val, p)
                .map(|d| {
                    let f = separation_matrix(&d);
                    (d, f)
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    let cache: HashMap<(u64, u64), FittedRange> = keys.into_iter().zip(fitted).collect();

    points
        .par_iter()
        .map(|(index, params)| {
            let outcome = match &cache[&range_key(params)] {
                Ok((d, f)) => evaluate_point(val, test, params, d, f),
                Err(e) => Err(e.clone()),
            };
            let (metrics, error) = match outcome {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e)),
            };
            SweepRow {
                index: *index,
                params: params.clone(),
                metrics,
                error,
            }
        })
        .collect()
}

fn evaluate_point(
    val: &LabeledResponses,
    test: &LabeledResponses,
    params: &HyperParams,
    d: &DistributionArray,
    f: &Matrix,
) -> std::result::Result<RowMetrics, String> {
    let model = assemble(val, params, d.clone(), f).map_err(|e| e.to_string())?;
    let v = evaluate(val, &model).map_err(|e| e.to_string())?;
    let t = evaluate(test, &model).map_err(|e| e.to_string())?;
    Ok(RowMetrics {
        val_softmax_accuracy: v.softmax_accuracy,
        val_accuracy: v.accuracy,
        val_reduction: v.relative_error_reduction,
        test_softmax_accuracy: t.softmax_accuracy,
        test_accuracy: t.accuracy,
        test_reduction: t.relative_error_reduction,
        val_routes: v.routes,
        test_routes: t.routes,
    })
}

/// Row maximizing the policy's error reduction; ties go to the lowest grid
/// index. Rows that failed or have an undefined reduction are ignored.
pub fn select(result: &SweepResult, policy: SelectionPolicy) -> Result<Selection> {
    let key = |m: &RowMetrics| match policy {
        SelectionPolicy::BestValidation => m.val_reduction,
        SelectionPolicy::BestTest => m.test_reduction,
    };
    let mut best: Option<(&SweepRow, &RowMetrics, f64)> = None;
    for row in &result.rows {
        let Some(m) = &row.metrics else { continue };
        let Some(v) = key(m) else { continue };
        if best.is_none_or(|(_, _, b)| v > b) {
            best = Some((row, m, v));
        }
    }
    let (row, m, _) = best.ok_or_else(|| {
        Error::Insufficient(format!(
            "no sweep row has a defined {} reduction",
            policy.as_str()
        ))
    })?;
    Ok(Selection {
        policy,
        index: row.index,
        params: row.params.clone(),
        val_reduction: m.val_reduction,
        test_reduction: m.test_reduction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub index: usize,
    pub val_reduction: f64,
    pub test_reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pairs: Vec<ScatterPoint>,
    /// `None` when either column is constant.
    pub pearson: Option<f64>,
}

/// Validation-versus-test reduction pairs and their Pearson correlation.
pub fn correlation_report(result: &SweepResult) -> Result<CorrelationReport> {
    let pairs: Vec<ScatterPoint> = result
        .rows
        .iter()
        .filter_map(|r| {
            let m = r.metrics.as_ref()?;
            Some(ScatterPoint {
                index: r.index,
                val_reduction: m.val_reduction?,
                test_reduction: m.test_reduction?,
            })
        })
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Insufficient(format!(
            "correlation needs at least 2 rows, got {}",
            pairs.len()
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.val_reduction).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.test_reduction).collect();
    Ok(CorrelationReport {
        pearson: pearson(&xs, &ys),
        pairs,
    })
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep result serializes");
        s.push('\n');
        s
    }

    /// One row per grid point, skipped points included, in grid order.
    pub fn to_table_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from(
            "index,status,c,c_low,c_high,w1,alpha,v1,v2,a1,m2,center,\
             val_softmax_accuracy,val_accuracy,val_reduction,\
             test_softmax_accuracy,test_accuracy,test_reduction,\
             test_softmax_high,test_pooled_trusted,test_pooled_reverted,test_pooled_no_viable\n",
        );
        let mut lines: Vec<(usize, String)> = Vec::new();
        for r in &self.rows {
            let p = &r.params;
            let mut line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                if r.error.is_some() { "failed" } else { "ok" },
                p.c,
                p.c_low,
                p.c_high,
                p.w1,
                p.alpha,
                p.v1,
                p.v2,
                p.a1,
                p.m2,
                match p.center {
                    CenterStatistic::Mean => "mean",
                    CenterStatistic::Median => "median",
                }
            );
            match &r.metrics {
                Some(m) => {
                    let _ = write!(
                        line,
                        ",{},{},{},{},{},{},{},{},{},{}",
                        m.val_softmax_accuracy,
                        m.val_accuracy,
                        opt(m.val_reduction),
                        m.test_softmax_accuracy,
                        m.test_accuracy,
                        opt(m.test_reduction),
                        m.test_routes.softmax_high,
                        m.test_routes.pooled_trusted,
                        m.test_routes.pooled_reverted,
                        m.test_routes.pooled_no_viable
                    );
                }
                None => line.push_str(",,,,,,,,,,"),
            }
            lines.push((r.index, line));
        }
        for s in &self.skipped {
            lines.push((s.index, format!("{},skipped{}", s.index, ",".repeat(20))));
        }
        lines.sort_by_key(|(i, _)| *i);
        for (_, l) in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}
