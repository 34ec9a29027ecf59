//! Labeled response matrices and the RSP-CSV interchange format.
//!
//! An RSP-CSV file starts with the header `label,r0,r1,...,r{K-1}`; every
//! following line holds an integer label and `K` decimal floats. Lines end
//! in `\n` and cells are never quoted. Floats are written with Rust's
//! shortest round-trip rendering, so `save → load → save` is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `N` samples of `K` pre-softmax responses, each with a class label in `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledResponses {
    n_classes: usize,
    responses: Matrix,
    labels: Vec<usize>,
}

impl LabeledResponses {
    pub fn new(n_classes: usize, responses: Matrix, labels: Vec<usize>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if responses.cols() != n_classes {
            return Err(Error::InvalidData(format!(
                "response matrix has {} columns for {n_classes} classes",
                responses.cols()
            )));
        }
        if responses.rows() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} response rows but {} labels",
                responses.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidData("dataset has no samples".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::InvalidData(format!(
                "sample {i}: label {l} out of range for {n_classes} classes"
            )));
        }
        if !responses.all_finite() {
            return Err(Error::InvalidData("non-finite response value".into()));
        }
        Ok(Self {
            n_classes,
            responses,
            labels,
        })
    }

    /// Builds a possibly empty dataset. Used for score filtering, where an
    /// empty result is legal and handled downstream.
    pub(crate) fn from_parts_unchecked(
        n_classes: usize,
        responses: Matrix,
        labels: Vec<usize>,
    ) -> Self {
        Self {
            n_classes,
            responses,
            labels,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn responses(&self) -> &Matrix {
        &self.responses
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.responses.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.responses.iter_rows().zip(self.labels.iter().copied())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            n_classes: self.n_classes,
            responses: self.responses.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Reads and validates an RSP-CSV file.
pub fn load_responses(path: impl AsRef<Path>) -> Result<LabeledResponses> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_responses(&text)
}

/// Parses RSP-CSV text. Line numbers in errors are 1-based.
pub fn parse_responses(text: &str) -> Result<LabeledResponses> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("");
    let n_classes = parse_header(header)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut pending_blank = None;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            // Only a single trailing newline is allowed.
            pending_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(Error::parse(blank, "empty line"));
        }
        let mut cells = line.split(',');
        let label_cell = cells.next().unwrap_or("");
        let label: usize = label_cell
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid label {label_cell:?}")))?;
        let before = data.len();
        for cell in cells {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(line_no, format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != n_classes {
            return Err(Error::parse(
                line_no,
                format!("expected {n_classes} response columns, found {got}"),
            ));
        }
        if label >= n_classes {
            return Err(Error::parse(
                line_no,
                format!("label out of range: {label} (K = {n_classes})"),
            ));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::InvalidData("dataset has no samples".into()));
    }
    let n = labels.len();
    LabeledResponses::new(n_classes, Matrix::from_vec(n, n_classes, data), labels)
}

fn parse_header(header: &str) -> Result<usize> {
    let mut cols = header.split(',');
    if cols.next() != Some("label") {
        return Err(Error::parse(1, "header must start with `label`"));
    }
    let mut k = 0;
    for col in cols {
        if col != format!("r{k}") {
            return Err(Error::parse(
                1,
                format!("malformed header column {col:?}, expected \"r{k}\""),
            ));
        }
        k += 1;
    }
    if k < 2 {
        return Err(Error::parse(
            1,
            format!("header declares {k} response columns, need at least 2"),
        ));
    }
    Ok(k)
}

/// Renders a dataset as RSP-CSV text.
pub fn format_responses(data: &LabeledResponses) -> String {
    let k = data.n_classes();
    let mut out = String::with_capacity(16 * (k + 1) * (data.len() + 1));
    out.push_str("label");
    for j in 0..k {
        let _ = write!(out, ",r{j}");
    }
    out.push('\n');
    for (row, label) in data.iter() {
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_responses(data: &LabeledResponses, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_responses(data).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// Draws disjoint validation and test sets without replacement.
///
/// Indices are shuffled with Fisher-Yates driven by ChaCha8 seeded through
/// `seed_from_u64(seed)`; the first `val_size` shuffled indices form the
/// validation set and the next `test_size` the test set.
pub fn split(
    data: &LabeledResponses,
    spec: SplitSpec,
) -> Result<(LabeledResponses, LabeledResponses)> {
    if spec.val_size == 0 || spec.test_size == 0 {
        return Err(Error::InvalidData("split sizes must be positive".into()));
    }
    let requested = spec.val_size + spec.test_size;
    if requested > data.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: data.len(),
        });
    }
    let order = shuffled_indices(data.len(), spec.seed);
    let val = data.subset(&order[..spec.val_size]);
    let test = data.subset(&order[spec.val_size..requested]);
    Ok((val, test))
}

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledResponses {
        LabeledResponses::new(2, Matrix::from_vec(1, 2, vec![0.1, -3.0]), vec![1]).unwrap()
    }

    #[test]
    fn minimal_file_layout() {
        let text = format_responses(&tiny());
        assert_eq!(text, "label,r0,r1\n1,0.1,-3\n");
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 3);
    }

    #[test]
    fn short_row_names_line() {
        let err = parse_responses("label,r0,r1,r2\n0,1,2,3\n1,1,2\n").unwrap_err();
        match err {
            Error::Parse { line, ref message } => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_equal_to_k_is_out_of_range() {
        let err = parse_responses("label,r0,r1\n2,0.5,0.5\n").unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
        assert!(err.to_string().starts_with("line 2"), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        for (text, needle) in [
            ("lbl,r0,r1\n0,1,2\n", "header"),
            ("label,r0,r2\n0,1,2\n", "header"),
            ("label,r0\n0,1\n", "at least 2"),
            ("label,r0,r1\n0,1,x\n", "non-numeric"),
            ("label,r0,r1\n0,1,NaN\n", "non-finite"),
            ("label,r0,r1\n0,1,inf\n", "non-finite"),
            ("label,r0,r1\n-1,1,2\n", "invalid label"),
            ("label,r0,r1\n", "no samples"),
            ("label,r0,r1\n0,1,2\n\n1,1,2\n", "empty line"),
        ] {
            let err = parse_responses(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn decimal_values_survive_exactly() {
        let d = LabeledResponses::new(
            2,
            Matrix::from_vec(2, 2, vec![0.1, 1.0 / 3.0, 1e-300, -2.5e17]),
            vec![0, 1],
        )
        .unwrap();
        let back = parse_responses(&format_responses(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn split_partition_and_determinism() {
        let n = 50;
        let d = LabeledResponses::new(
            3,
            Matrix::from_fn(n, 3, |i, j| (i * 3 + j) as f64),
            (0..n).map(|i| i % 3).collect(),
        )
        .unwrap();
        let spec = SplitSpec {
            val_size: 20,
            test_size: 30,
            seed: 7,
        };
        let (v, t) = split(&d, spec).unwrap();
        let mut seen: Vec<f64> = v.iter().chain(t.iter()).map(|(r, _)| r[0]).collect();
        seen.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..n).map(|i| (i * 3) as f64).collect();
        assert_eq!(seen, expected);
        assert_eq!(split(&d, spec).unwrap(), (v, t));
    }

    #[test]
    fn split_too_large() {
        let spec = SplitSpec {
            val_size: 1,
            test_size: 1,
            seed: 0,
        };
        assert!(matches!(
            split(&tiny(), spec),
            Err(Error::SplitTooLarge {
                requested: 2,
                available: 1
            })
        ));
    }
}
