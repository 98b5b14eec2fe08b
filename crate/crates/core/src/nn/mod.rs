//! Small fully-connected networks: the target, reference, toy-regression and
//! quantile models are all [`MlpModel`]s.

mod checkpoint;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, gemm, GemmOperand, Matrix, RngState};

pub use checkpoint::{load_model, save_model, ModelCheckpoint, MODEL_FORMAT_VERSION};
pub use train::{
    loss_and_grad, sgd_train, sgd_train_logged, softmax, Gradients, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Softmax cross-entropy over the output logits.
    Classification,
    /// Half squared error on a single output.
    Regression,
    /// Summed pinball losses, one output per quantile level.
    Quantile(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub task: Task,
}

impl MlpArchitecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, task: Task) -> Result<Self> {
        let a = MlpArchitecture {
            layer_widths,
            activation,
            task,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 || self.layer_widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "architecture needs >= 2 non-zero widths, got {:?}",
                self.layer_widths
            )));
        }
        let out = *self.layer_widths.last().unwrap();
        match &self.task {
            Task::Classification if out < 2 => Err(Error::InvalidArgument(
                "classification needs >= 2 outputs".into(),
            )),
            Task::Regression if out != 1 => Err(Error::InvalidArgument(
                "regression models have exactly one output".into(),
            )),
            Task::Quantile(taus) if taus.len() != out => Err(Error::InvalidArgument(format!(
                "{} quantile levels for {out} outputs",
                taus.len()
            ))),
            Task::Quantile(taus) if taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) => Err(
                Error::InvalidArgument("quantile levels must lie in (0, 1)".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub architecture: MlpArchitecture,
    /// Layer weights, each `out × in`.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Uniform `±√(6 / fan_in)` weights and zero biases.
pub fn weight_init(architecture: &MlpArchitecture, seed: u64) -> Result<MlpModel> {
    architecture.validate()?;
    let root = RngState::new(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, pair) in architecture.layer_widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut rng = root.substream("weight-init", &[l as u64]);
        let mut w = Matrix::zeros(fan_out, fan_in);
        for x in w.as_mut_slice() {
            *x = rng.uniform_range(-bound, bound);
        }
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpModel {
        architecture: architecture.clone(),
        weights,
        biases,
    })
}

impl MlpModel {
    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|x| x.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.architecture.input_width() {
            return Err(Error::Dimension(format!(
                "input of length {} for a model with {} inputs",
                x.len(),
                self.architecture.input_width()
            )));
        }
        Ok(())
    }

    /// Penultimate activations, not yet augmented.
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let act = self.architecture.activation;
        let mut a = x.to_vec();
        for l in 0..self.n_layers() - 1 {
            let w = &self.weights[l];
            a = (0..w.rows())
                .map(|i| act.apply(dot(w.row(i), &a) + self.biases[l][i]))
                .collect();
        }
        a
    }

    /// Network output for one input (logits, regression value or quantiles).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let h = self.hidden(x);
        let l = self.n_layers() - 1;
        let w = &self.weights[l];
        Ok((0..w.rows())
            .map(|i| dot(w.row(i), &h) + self.biases[l][i] * 1.0)
            .collect())
    }

    /// Last-layer input with a trailing constant 1, so that
    /// `forward(x) = W_aug · h` with `W_aug = [W_last | b_last]`.
    pub fn last_layer_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = self.hidden(x);
        h.push(1.0);
        Ok(h)
    }

    /// `[W_last | b_last]`, shape `O × (H + 1)`.
    pub fn last_layer_augmented(&self) -> Matrix {
        let l = self.n_layers() - 1;
        let w = &self.weights[l];
        let (o, h) = w.shape();
        let mut aug = Matrix::zeros(o, h + 1);
        for i in 0..o {
            aug.row_mut(i)[..h].copy_from_slice(w.row(i));
            aug[(i, h)] = self.biases[l][i];
        }
        aug
    }

    /// Replaces the last layer from an augmented `O × (H + 1)` matrix.
    pub fn set_last_layer_augmented(&mut self, aug: &Matrix) -> Result<()> {
        let l = self.n_layers() - 1;
        let (o, h) = self.weights[l].shape();
        if aug.shape() != (o, h + 1) {
            return Err(Error::Dimension(format!(
                "augmented last layer must be {o}x{}, got {:?}",
                h + 1,
                aug.shape()
            )));
        }
        for i in 0..o {
            self.weights[l].row_mut(i).copy_from_slice(&aug.row(i)[..h]);
            self.biases[l][i] = aug[(i, h)];
        }
        Ok(())
    }

    /// Batched pass returning every layer's activation (input first, raw
    /// outputs last).
    pub(crate) fn forward_trace(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.cols() != self.architecture.input_width() {
            return Err(Error::Dimension(format!(
                "batch with {} columns for a model with {} inputs",
                x.cols(),
                self.architecture.input_width()
            )));
        }
        let act = self.architecture.activation;
        let last = self.n_layers() - 1;
        let mut trace = Vec::with_capacity(self.n_layers() + 1);
        trace.push(x.clone());
        for l in 0..=last {
            let prev = trace.last().unwrap();
            let w = &self.weights[l];
            let mut z = Matrix::zeros(prev.rows(), w.rows());
            gemm(1.0, GemmOperand::plain(prev), GemmOperand::transposed(w), 0.0, &mut z);
            let b = &self.biases[l];
            for r in 0..z.rows() {
                for (v, bi) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bi;
                    if l < last {
                        *v = act.apply(*v);
                    }
                }
            }
            trace.push(z);
        }
        Ok(trace)
    }

    /// Outputs for every row of `x`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(x)?.pop().unwrap())
    }

    /// Fraction of rows whose arg-max logit equals the class label.
    pub fn accuracy(&self, data: &crate::data::LabeledDataset) -> Result<f64> {
        let y = data.labels.classes().ok_or_else(|| {
            Error::InvalidArgument("accuracy needs class labels".into())
        })?;
        if y.is_empty() {
            return Ok(0.0);
        }
        let out = self.forward_batch(&data.features)?;
        let hits = (0..out.rows())
            .filter(|&i| {
                let r = out.row(i);
                let best = (0..r.len()).fold(0, |b, k| if r[k] > r[b] { k } else { b });
                best == y[i]
            })
            .count();
        Ok(hits as f64 / y.len() as f64)
    }

    /// Augmented last-layer features for every row of `x`, shape `N × (H + 1)`.
    pub fn last_layer_features_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut rows = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            rows.push(self.last_layer_features(x.row(i))?);
        }
        if rows.is_empty() {
            let h = self.weights.last().unwrap().cols();
            return Ok(Matrix::zeros(0, h + 1));
        }
        Matrix::from_rows(&rows)
    }
}
