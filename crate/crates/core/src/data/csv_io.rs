use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Column layout of a tabular dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: usize,
    /// Feature columns in order; `None` means every column except the label.
    #[serde(default)]
    pub feature_columns: Option<Vec<usize>>,
    #[serde(default)]
    pub has_header: bool,
    /// Declared class count. When absent it is inferred as `max label + 1`.
    #[serde(default)]
    pub n_classes: Option<usize>,
}

impl CsvSchema {
    pub fn label_last(n_columns: usize, has_header: bool) -> Self {
        CsvSchema {
            label_column: n_columns - 1,
            feature_columns: None,
            has_header,
            n_classes: None,
        }
    }
}

fn parse_label(cell: &str, row: usize, column: usize) -> Result<usize> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<usize>() {
        return Ok(v);
    }
    // integral floats such as "3.0" are accepted
    match t.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < usize::MAX as f64 => Ok(f as usize),
        _ => Err(Error::UnknownLabel {
            row,
            column,
            value: cell.to_string(),
        }),
    }
}

/// Reads a comma-separated table of 64-bit reals with an integer class label column.
///
/// Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;

    let mut header: Option<Vec<String>> = None;
    let mut arity: Option<usize> = None;
    let mut feature_cols: Vec<usize> = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();

    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let row = rec.position().map_or(k + 1, |p| p.line() as usize);
        match arity {
            None => {
                let n = rec.len();
                if schema.label_column >= n {
                    return Err(Error::Config(format!(
                        "label column {} out of range for {n} columns",
                        schema.label_column
                    )));
                }
                feature_cols = match &schema.feature_columns {
                    Some(c) => c.clone(),
                    None => (0..n).filter(|&c| c != schema.label_column).collect(),
                };
                if let Some(&bad) = feature_cols.iter().find(|&&c| c >= n) {
                    return Err(Error::Config(format!(
                        "feature column {bad} out of range for {n} columns"
                    )));
                }
                arity = Some(n);
            }
            Some(n) if rec.len() != n => {
                return Err(Error::RaggedRow {
                    row,
                    expected: n,
                    found: rec.len(),
                })
            }
            _ => {}
        }
        if k == 0 && schema.has_header {
            header = Some(feature_cols.iter().map(|&c| rec[c].trim().to_string()).collect());
            continue;
        }
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumeric {
                row,
                column: c,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        let label = parse_label(&rec[schema.label_column], row, schema.label_column)?;
        if let Some(k) = schema.n_classes {
            if label >= k {
                return Err(Error::UnknownLabel {
                    row,
                    column: schema.label_column,
                    value: rec[schema.label_column].to_string(),
                });
            }
        }
        labels.push(label);
    }

    let n = labels.len();
    let n_classes = schema
        .n_classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Matrix::from_vec(n, feature_cols.len(), values)?;
    let mut ds = LabeledDataset::new(
        features,
        Labels::Classes {
            values: labels,
            n_classes,
        },
    )?;
    ds.feature_names = header;
    Ok(ds)
}

/// Writes features followed by a final label column; a header row is
/// emitted when the dataset carries feature names.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let wrap = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    if let Some(names) = &ds.feature_names {
        let mut h = names.clone();
        h.push("label".into());
        w.write_record(&h).map_err(wrap)?;
    }
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(match &ds.labels {
            Labels::Classes { values, .. } => values[i].to_string(),
            Labels::Real(v) => format!("{:?}", v[i]),
        });
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
