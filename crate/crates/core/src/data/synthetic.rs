use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngState};

/// Parameters of the Gaussian-cluster classification generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dims: usize,
    pub classes: usize,
    /// Norm of every class mean.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    #[serde(default = "default_spread")]
    pub cluster_spread: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    3.0
}

fn default_spread() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(n: usize, dims: usize, classes: usize, cluster_spread: f64, seed: u64) -> Self {
        SyntheticSpec {
            n,
            dims,
            classes,
            separation: default_separation(),
            cluster_spread,
            seed,
        }
    }
}

/// Isotropic Gaussian clusters, one per class, with class means on a sphere.
pub fn make_synthetic_classification(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if spec.n < spec.classes {
        return Err(Error::InvalidArgument(format!(
            "n = {} is smaller than the class count {}",
            spec.n, spec.classes
        )));
    }
    if !(spec.cluster_spread > 0.0) || spec.dims == 0 {
        return Err(Error::InvalidArgument(
            "cluster_spread must be positive and dims non-zero".into(),
        ));
    }
    let root = RngState::new(spec.seed);
    let mut mean_rng = root.substream("class-means", &[]);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let mut v = vec![0.0; spec.dims];
            mean_rng.fill_standard_normal(&mut v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            v.iter().map(|x| x / norm * spec.separation).collect()
        })
        .collect();

    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    root.substream("label-order", &[]).shuffle(&mut labels);

    let mut noise = root.substream("features", &[]);
    let mut features = Matrix::zeros(spec.n, spec.dims);
    for (i, &c) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for (x, m) in row.iter_mut().zip(&means[c]) {
            *x = m + spec.cluster_spread * noise.standard_normal();
        }
    }
    LabeledDataset::new(
        features,
        Labels::Classes {
            values: labels,
            n_classes: spec.classes,
        },
    )
}

pub const TOY_MIXTURE_MEANS: [f64; 2] = [-3.0, 3.0];
pub const TOY_MIXTURE_STD: f64 = 0.8;
pub const TOY_NOISE_VAR: f64 = 0.01;

/// Noise-free target of the toy regression task.
pub fn toy_function(x: f64) -> f64 {
    (1.2 * x).sin()
}

/// 1-D regression with inputs from a two-bump Gaussian mixture and
/// `y = sin(1.2x) + ε`, `ε ~ N(0, 0.01)`.
pub fn make_toy_regression(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("toy regression needs n >= 1".into()));
    }
    let root = RngState::new(seed);
    let mut xr = root.substream("toy-x", &[]);
    let mut nr = root.substream("toy-noise", &[]);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let comp = if xr.uniform() < 0.5 { 0 } else { 1 };
        let x = xr.normal(TOY_MIXTURE_MEANS[comp], TOY_MIXTURE_STD);
        let eps = nr.normal(0.0, TOY_NOISE_VAR.sqrt());
        xs.push(x);
        ys.push(toy_function(x) + eps);
    }
    let mut d = LabeledDataset::new(Matrix::from_vec(n, 1, xs)?, Labels::Real(ys))?;
    d.feature_names = Some(vec!["x".into()]);
    Ok(d)
}
