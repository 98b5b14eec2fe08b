use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{make_toy_regression, LabeledDataset};
use crate::error::{Error, Result};
use crate::laplace::{
    default_prior_grid, fit_last_layer_posterior, tune_prior_precision, CurvatureKind, Likelihood,
    PreparedPosterior, TuneMode,
};
use crate::nn::{sgd_train, weight_init, Activation, MlpArchitecture, MlpModel, Task, TrainConfig};
use crate::numkit::{derive_seed, std_normal_quantile, RngState};
use crate::pipeline::{write_manifest, StageFiles};

/// Observation noise variance of the toy data.
pub const DEMO_NOISE_VAR: f64 = crate::data::TOY_NOISE_VAR;
const QR_LEVELS: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub data_seed: u64,
    pub test_seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub curvature: CurvatureKind,
    /// Tune the prior by holdout predictive density instead of the evidence.
    #[serde(default)]
    pub validation_tuning: bool,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            n_train: 1000,
            n_test: 2000,
            data_seed: 11,
            test_seed: 12,
            hidden: vec![50, 50],
            activation: Activation::Tanh,
            train: TrainConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 1e-4,
                epochs: 300,
                milestone_epochs: vec![200, 260],
                milestone_factor: 0.1,
                batch_size: 32,
                seed: 13,
            },
            init_seed: 14,
            curvature: CurvatureKind::FullGgn,
            validation_tuning: false,
            grid_min: -6.0,
            grid_max: 6.0,
            grid_points: 241,
        }
    }
}

impl DemoConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: DemoConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if c.grid_points < 2 || !(c.grid_max > c.grid_min) || c.n_train == 0 {
            return Err(Error::Config("invalid demo grid or sample size".into()));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub x: f64,
    pub qr_low: f64,
    pub qr_med: f64,
    pub qr_high: f64,
    pub bnn_mean: f64,
    pub bnn_low: f64,
    pub bnn_high: f64,
}

/// Trained demo models and the interval table.
#[derive(Debug, Clone)]
pub struct DemoResult {
    pub rows: Vec<IntervalRow>,
    pub prior_precision: f64,
    pub quantile_model: MlpModel,
    pub regression_model: MlpModel,
    pub posterior: PreparedPosterior,
    /// Fraction of a fresh draw inside the BNN and QR 90% intervals.
    pub bnn_coverage: f64,
    pub qr_coverage: f64,
}

impl DemoResult {
    /// `(low, median, high)` of the quantile model at `x`.
    pub fn qr_interval(&self, x: f64) -> Result<(f64, f64, f64)> {
        let q = self.quantile_model.forward(&[x])?;
        let mut s = q.clone();
        s.sort_by(f64::total_cmp);
        Ok((s[0], s[1], s[2]))
    }

    /// `(mean, low, high)`: mean ± z₀.₉₅·√(epistemic + noise variance).
    pub fn bnn_interval(&self, x: f64) -> Result<(f64, f64, f64)> {
        let h = self.regression_model.last_layer_features(&[x])?;
        let pg = self.posterior.predictive(&h)?;
        let z = std_normal_quantile(0.95)?;
        let half = z * (pg.cov[(0, 0)] + DEMO_NOISE_VAR).sqrt();
        Ok((pg.mean[0], pg.mean[0] - half, pg.mean[0] + half))
    }

    pub fn bnn_width(&self, x: f64) -> Result<f64> {
        self.bnn_interval(x).map(|(_, l, h)| h - l)
    }

    pub fn qr_width(&self, x: f64) -> Result<f64> {
        self.qr_interval(x).map(|(l, _, h)| h - l)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,qr_low,qr_med,qr_high,bnn_mean,bnn_low,bnn_high\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.x, r.qr_low, r.qr_med, r.qr_high, r.bnn_mean, r.bnn_low, r.bnn_high
            );
        }
        s
    }
}

fn train_model(
    data: &LabeledDataset,
    task: Task,
    cfg: &DemoConfig,
    label: &str,
) -> Result<MlpModel> {
    let mut widths = vec![1];
    widths.extend(&cfg.hidden);
    widths.push(match &task {
        Task::Quantile(t) => t.len(),
        _ => 1,
    });
    let arch = MlpArchitecture::new(widths, cfg.activation, task)?;
    let init = weight_init(&arch, derive_seed(cfg.init_seed, label, &[]))?;
    let mut rng = RngState::new(cfg.train.seed).substream(label, &[]);
    sgd_train(&init, data, &cfg.train, &mut rng)
}

/// Fits the quantile-regression and last-layer Laplace models on the toy
/// data and tabulates both 90% intervals over a grid of inputs.
pub fn fit_toy_regression_demo(cfg: &DemoConfig) -> Result<DemoResult> {
    let train = make_toy_regression(cfg.n_train, cfg.data_seed)?;
    let qr = train_model(&train, Task::Quantile(QR_LEVELS.to_vec()), cfg, "qr")?;
    let reg = train_model(&train, Task::Regression, cfg, "bnn")?;
    let likelihood = Likelihood::Gaussian {
        noise_var: DEMO_NOISE_VAR,
    };
    let mode = if cfg.validation_tuning {
        TuneMode::Validation {
            data: make_toy_regression(cfg.n_train, derive_seed(cfg.data_seed, "validation", &[]))?,
            n_samples: 1,
            seed: 0,
        }
    } else {
        TuneMode::MarginalLikelihood
    };
    let lam = tune_prior_precision(&reg, &train, cfg.curvature, &default_prior_grid(), likelihood, &mode)?;
    let posterior = fit_last_layer_posterior(&reg, &train, cfg.curvature, lam, likelihood)?;
    let mut result = DemoResult {
        rows: Vec::with_capacity(cfg.grid_points),
        prior_precision: lam,
        quantile_model: qr,
        regression_model: reg,
        posterior: PreparedPosterior::new(&posterior)?,
        bnn_coverage: 0.0,
        qr_coverage: 0.0,
    };
    let step = (cfg.grid_max - cfg.grid_min) / (cfg.grid_points - 1) as f64;
    for k in 0..cfg.grid_points {
        let x = cfg.grid_min + step * k as f64;
        let (qr_low, qr_med, qr_high) = result.qr_interval(x)?;
        let (bnn_mean, bnn_low, bnn_high) = result.bnn_interval(x)?;
        result.rows.push(IntervalRow {
            x,
            qr_low,
            qr_med,
            qr_high,
            bnn_mean,
            bnn_low,
            bnn_high,
        });
    }
    if cfg.n_test > 0 {
        let test = make_toy_regression(cfg.n_test, cfg.test_seed)?;
        let ys = test.labels.reals().expect("real targets");
        let (mut bnn_in, mut qr_in) = (0usize, 0usize);
        for (i, &y) in ys.iter().enumerate() {
            let x = test.row(i)[0];
            let (_, l, h) = result.bnn_interval(x)?;
            bnn_in += (l..=h).contains(&y) as usize;
            let (l, _, h) = result.qr_interval(x)?;
            qr_in += (l..=h).contains(&y) as usize;
        }
        result.bnn_coverage = bnn_in as f64 / ys.len() as f64;
        result.qr_coverage = qr_in as f64 / ys.len() as f64;
    }
    Ok(result)
}

/// Runs the demonstration and writes `intervals.csv`, `summary.json` and a
/// manifest to `out`.
pub fn run_toy_regression_demo(cfg: &DemoConfig, out: &Path) -> Result<(DemoResult, Vec<PathBuf>)> {
    let result = fit_toy_regression_demo(cfg).map_err(|e| e.in_stage("demo-regression"))?;
    let mut files = StageFiles::default();
    let intervals = out.join("intervals.csv");
    let summary = out.join("summary.json");
    let written = (|| {
        files.write(intervals.clone(), result.to_csv().as_bytes())?;
        let s = serde_json::json!({
            "prior_precision": result.prior_precision,
            "bnn_coverage": result.bnn_coverage,
            "qr_coverage": result.qr_coverage,
            "bnn_width_at_0": result.bnn_width(0.0)?,
            "qr_width_at_0": result.qr_width(0.0)?,
            "bnn_width_at_3": result.bnn_width(3.0)?,
            "bnn_width_at_minus_3": result.bnn_width(-3.0)?,
        });
        let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
        text.push('\n');
        files.write(summary.clone(), text.as_bytes())?;
        write_manifest(out)
    })();
    if let Err(e) = written {
        files.mark_partial();
        return Err(e.in_stage("demo-regression"));
    }
    Ok((result, vec![intervals, summary]))
}
