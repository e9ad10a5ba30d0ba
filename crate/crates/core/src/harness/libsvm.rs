//! LIBSVM text-format ingestion: `<label> <index>:<value> ...` with
//! 1-based ascending indices. Labels land in `{-1, +1}`; raw `0/1` labels
//! are remapped (`0 -> -1`).

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::objectives::NonconvexLogReg;

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("empty dataset: no samples parsed")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct LibsvmData {
    /// Sparse rows of `(zero-based column, value)` pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    /// Inferred dimension (largest 1-based index seen).
    pub dim: usize,
}

impl LibsvmData {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    /// Min-max scaling of every feature column to `[-1, 1]`; columns with a
    /// single observed value map to zero.
    pub fn scale_features(&mut self) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for row in &self.rows {
            for &(c, v) in row {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        for row in self.rows.iter_mut() {
            for (c, v) in row.iter_mut() {
                let (l, h) = (lo[*c], hi[*c]);
                *v = if h > l { -1.0 + 2.0 * (*v - l) / (h - l) } else { 0.0 };
            }
        }
    }

    pub fn into_objective(self, reg_alpha: f64) -> NonconvexLogReg {
        NonconvexLogReg::from_sparse_rows(&self.rows, &self.labels, self.dim, reg_alpha)
    }
}

pub fn parse_libsvm(path: &Path) -> Result<LibsvmData, LibsvmError> {
    let text = fs::read_to_string(path).map_err(|source| LibsvmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_libsvm_str(&text)
}

pub fn parse_libsvm_str(text: &str) -> Result<LibsvmData, LibsvmError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().expect("nonempty line has a first token");
        let label_val: f64 = label_tok.parse().map_err(|_| LibsvmError::Malformed {
            line: line_no,
            message: format!("unparsable label `{label_tok}`"),
        })?;
        let label = match label_val {
            v if v == 1.0 => 1.0,
            v if v == -1.0 => -1.0,
            v if v == 0.0 => -1.0,
            v => {
                return Err(LibsvmError::Malformed {
                    line: line_no,
                    message: format!("label {v} is not one of -1, 0, +1"),
                })
            }
        };
        let mut row = Vec::new();
        let mut prev_index = 0usize;
        for tok in parts {
            let (i_str, v_str) = tok.split_once(':').ok_or_else(|| LibsvmError::Malformed {
                line: line_no,
                message: format!("feature `{tok}` is not index:value"),
            })?;
            let index: usize = i_str.parse().map_err(|_| LibsvmError::Malformed {
                line: line_no,
                message: format!("bad feature index `{i_str}`"),
            })?;
            if index == 0 {
                return Err(LibsvmError::Malformed {
                    line: line_no,
                    message: "feature indices are 1-based".to_string(),
                });
            }
            if index <= prev_index {
                return Err(LibsvmError::Malformed {
                    line: line_no,
                    message: format!("indices must be ascending, saw {index} after {prev_index}"),
                });
            }
            let value: f64 = v_str.parse().map_err(|_| LibsvmError::Malformed {
                line: line_no,
                message: format!("bad feature value `{v_str}`"),
            })?;
            prev_index = index;
            dim = dim.max(index);
            row.push((index - 1, value));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(LibsvmError::Empty);
    }
    Ok(LibsvmData { rows, labels, dim })
}
