//! Datasets, generators, CSV ingestion and membership-experiment splits.

mod csv_io;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use split::{sample_reference_subset, split_four_way, SplitPlan};
pub use synthetic::{
    make_synthetic_classification, make_toy_regression, toy_function, SyntheticSpec,
    TOY_MIXTURE_MEANS, TOY_MIXTURE_STD, TOY_NOISE_VAR,
};

/// Targets attached to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes { values: Vec<usize>, n_classes: usize },
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { values, .. } => values.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes { values, n_classes } => Labels::Classes {
                values: idx.iter().map(|&i| values[i]).collect(),
                n_classes: *n_classes,
            },
            Labels::Real(v) => Labels::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Labels::Classes { values, .. } => Some(values),
            Labels::Real(_) => None,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Labels::Classes { n_classes, .. } => Some(*n_classes),
            Labels::Real(_) => None,
        }
    }

    pub fn reals(&self) -> Option<&[f64]> {
        match self {
            Labels::Real(v) => Some(v),
            Labels::Classes { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Labels,
    pub feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Labels) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Labels::Classes { values, n_classes } = &labels {
            if let Some(&bad) = values.iter().find(|&&c| c >= *n_classes) {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes: *n_classes,
                });
            }
        }
        Ok(LabeledDataset {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels: self.labels.select(idx),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Copy of this dataset with real-valued targets replaced.
    pub fn with_real_targets(&self, targets: Vec<f64>) -> Result<LabeledDataset> {
        let mut d = LabeledDataset::new(self.features.clone(), Labels::Real(targets))?;
        d.feature_names = self.feature_names.clone();
        Ok(d)
    }
}
