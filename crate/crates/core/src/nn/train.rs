use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::nn::{MlpModel, Task};
use crate::numkit::{gemm, GemmOperand, Matrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    #[serde(default)]
    pub milestone_epochs: Vec<usize>,
    #[serde(default = "default_milestone_factor")]
    pub milestone_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
}

fn default_milestone_factor() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 120,
            milestone_epochs: vec![50, 100],
            milestone_factor: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.milestone_factor > 0.0) {
            return bad("milestone_factor must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let m = &self.milestone_epochs;
        if m.windows(2).any(|w| w[0] >= w[1]) || m.last().is_some_and(|&e| e >= self.epochs) {
            return bad("milestones must be strictly increasing and below epochs");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestone_epochs.iter().filter(|&&m| epoch >= m).count();
        self.learning_rate * self.milestone_factor.powi(passed as i32)
    }
}

/// Per-parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn squared_norm(model: &MlpModel) -> f64 {
    let w: f64 = model
        .weights
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|x| x * x)
        .sum();
    let b: f64 = model.biases.iter().flatten().map(|x| x * x).sum();
    w + b
}

/// Data term plus `(weight_decay / 2)·‖w‖²` over all parameters, with gradients.
///
/// The data term is the batch mean of softmax cross-entropy, half squared
/// error or summed pinball loss, chosen by the model's task.
pub fn loss_and_grad(
    model: &MlpModel,
    features: &Matrix,
    targets: &Labels,
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if targets.len() != n {
        return Err(Error::Dimension(format!(
            "{n} rows but {} targets",
            targets.len()
        )));
    }
    let trace = model.forward_trace(features)?;
    let out = trace.last().unwrap();
    let o = out.cols();
    let inv_n = 1.0 / n as f64;

    let mut delta = Matrix::zeros(n, o);
    let mut data_loss = 0.0;
    match (&model.architecture.task, targets) {
        (Task::Classification, Labels::Classes { values, .. }) => {
            for (i, &y) in values.iter().enumerate() {
                if y >= o {
                    return Err(Error::LabelOutOfRange { label: y, classes: o });
                }
                let z = out.row(i);
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                data_loss += lse - z[y];
                let d = delta.row_mut(i);
                for k in 0..o {
                    d[k] = (z[k] - lse).exp() * inv_n;
                }
                d[y] -= inv_n;
            }
        }
        (Task::Regression, Labels::Real(ys)) => {
            for (i, &y) in ys.iter().enumerate() {
                let r = out[(i, 0)] - y;
                data_loss += 0.5 * r * r;
                delta[(i, 0)] = r * inv_n;
            }
        }
        (Task::Quantile(taus), Labels::Real(ys)) => {
            for (i, &y) in ys.iter().enumerate() {
                for (k, &tau) in taus.iter().enumerate() {
                    let u = y - out[(i, k)];
                    if u >= 0.0 {
                        data_loss += tau * u;
                        delta[(i, k)] = -tau * inv_n;
                    } else {
                        data_loss += (tau - 1.0) * u;
                        delta[(i, k)] = (1.0 - tau) * inv_n;
                    }
                }
            }
        }
        (task, _) => {
            return Err(Error::InvalidArgument(format!(
                "targets do not match task {task:?}"
            )))
        }
    }
    let loss = data_loss * inv_n + 0.5 * weight_decay * squared_norm(model);

    let act = model.architecture.activation;
    let layers = model.n_layers();
    let mut gw = vec![Matrix::zeros(0, 0); layers];
    let mut gb = vec![Vec::new(); layers];
    for l in (0..layers).rev() {
        let a_prev = &trace[l];
        let w = &model.weights[l];
        let mut g = w.scale(weight_decay);
        gemm(1.0, GemmOperand::transposed(&delta), GemmOperand::plain(a_prev), 1.0, &mut g);
        let mut b: Vec<f64> = model.biases[l].iter().map(|x| weight_decay * x).collect();
        for r in 0..n {
            for (bk, dk) in b.iter_mut().zip(delta.row(r)) {
                *bk += dk;
            }
        }
        gw[l] = g;
        gb[l] = b;
        if l > 0 {
            let mut prev = Matrix::zeros(n, w.cols());
            gemm(1.0, GemmOperand::plain(&delta), GemmOperand::plain(w), 0.0, &mut prev);
            for (d, a) in prev.as_mut_slice().iter_mut().zip(a_prev.as_slice()) {
                *d *= act.derivative_from_output(*a);
            }
            delta = prev;
        }
    }
    Ok((
        loss,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

/// Mini-batch SGD with classical momentum and step decay.
pub fn sgd_train(
    init: &MlpModel,
    data: &LabeledDataset,
    config: &TrainConfig,
    rng: &mut RngState,
) -> Result<MlpModel> {
    sgd_train_logged(init, data, config, rng).map(|(m, _)| m)
}

/// Like [`sgd_train`], also returning the mean mini-batch loss of every epoch.
pub fn sgd_train_logged(
    init: &MlpModel,
    data: &LabeledDataset,
    config: &TrainConfig,
    rng: &mut RngState,
) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if data.dims() != init.architecture.input_width() {
        return Err(Error::Dimension(format!(
            "data has {} features, model expects {}",
            data.dims(),
            init.architecture.input_width()
        )));
    }
    let mut model = init.clone();
    let mut vel_w: Vec<Matrix> = model
        .weights
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut vel_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let n = data.len();
    let mu = config.momentum;

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let order = rng.permutation(n);
        let mut total = 0.0;
        let mut batches = 0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = data.features.select_rows(idx);
            let y = data.labels.select(idx);
            let (loss, g) = loss_and_grad(&model, &x, &y, config.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
            total += loss;
            batches += 1;
            for l in 0..model.n_layers() {
                let vw = vel_w[l].as_mut_slice();
                let w = model.weights[l].as_mut_slice();
                for ((v, p), gi) in vw.iter_mut().zip(w.iter_mut()).zip(g.weights[l].as_slice()) {
                    *v = mu * *v + gi;
                    *p -= lr * *v;
                }
                for ((v, p), gi) in vel_b[l]
                    .iter_mut()
                    .zip(model.biases[l].iter_mut())
                    .zip(&g.biases[l])
                {
                    *v = mu * *v + gi;
                    *p -= lr * *v;
                }
            }
        }
        history.push(total / batches as f64);
    }
    if !model.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs.saturating_sub(1),
            batch: 0,
        });
    }
    Ok((model, history))
}
