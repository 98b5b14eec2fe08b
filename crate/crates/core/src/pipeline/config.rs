use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, SyntheticSpec};
use crate::error::{Error, Result};
use crate::laplace::{CurvatureKind, PredictiveMode};
use crate::nn::{Activation, TrainConfig};
use crate::numkit::derive_seed;

/// Where the experiment's examples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        n: usize,
        dims: usize,
        classes: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_spread")]
        cluster_spread: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        schema: CsvSchema,
    },
}

fn default_separation() -> f64 {
    3.0
}

fn default_spread() -> f64 {
    1.0
}

impl DatasetConfig {
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match self {
            DatasetConfig::Synthetic {
                n,
                dims,
                classes,
                separation,
                cluster_spread,
                seed,
            } => Some(SyntheticSpec {
                n: *n,
                dims: *dims,
                classes: *classes,
                separation: *separation,
                cluster_spread: *cluster_spread,
                seed: *seed,
            }),
            DatasetConfig::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 4],
    pub seed: u64,
}

/// Hidden layers of the target and reference networks. Input and output
/// widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Reference models trained for the shadow-model attacks.
    pub n_models: usize,
    /// Model `i` uses seed `base_seed + i` for its subset, initialization
    /// and shuffling; `train.seed` is not consulted.
    pub base_seed: u64,
    pub train: TrainConfig,
}

/// Prior precision: a fixed value or a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Fixed {
        value: f64,
    },
    MarginalLikelihood {
        #[serde(default)]
        grid: Option<Vec<f64>>,
    },
    /// Scores each λ by the log predictive density of the holdout set.
    Validation {
        #[serde(default)]
        grid: Option<Vec<f64>>,
        n_samples: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    pub curvature: CurvatureKind,
    pub prior: PriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmiaConfig {
    pub n_samples: usize,
    pub mode: PredictiveMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmiaConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Candidate weight decays, picked by holdout pinball loss.
    pub weight_decays: Vec<f64>,
    pub init_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Bmia,
    AttackP,
    AttackR,
    Lira,
    Qmia,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Bmia => "bmia",
            AttackKind::AttackP => "attack_p",
            AttackKind::AttackR => "attack_r",
            AttackKind::Lira => "lira_offline",
            AttackKind::Qmia => "qmia",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub run: Vec<AttackKind>,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub bmia: Option<BmiaConfig>,
    #[serde(default)]
    pub qmia: Option<QmiaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// When false, every time column is written as zero so the outputs are
    /// a pure function of the config.
    pub timing: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { timing: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub target: TrainConfig,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub laplace: Option<LaplaceConfig>,
    pub attacks: AttackConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let f = &self.split.fractions;
        if f.iter().any(|x| !(*x >= 0.0)) || f.iter().sum::<f64>() > 1.0 + 1e-12 {
            return cfg(format!("split fractions {f:?} must be non-negative and sum to at most 1"));
        }
        if self.model.hidden.iter().any(|&w| w == 0) {
            return cfg("hidden widths must be positive".into());
        }
        self.target
            .validate()
            .map_err(|e| Error::Config(format!("target: {e}")))?;
        self.reference
            .train
            .validate()
            .map_err(|e| Error::Config(format!("reference: {e}")))?;
        if self.attacks.run.is_empty() {
            return cfg("no attacks configured".into());
        }
        if self.attacks.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return cfg("alphas must lie in (0, 1)".into());
        }
        let runs = |k: AttackKind| self.attacks.run.contains(&k);
        if runs(AttackKind::Bmia) {
            if self.laplace.is_none() {
                return cfg("bmia needs a [laplace] section".into());
            }
            match &self.attacks.bmia {
                None => return cfg("bmia needs an [attacks.bmia] section".into()),
                Some(b) if b.n_samples < 2 => return cfg("bmia n_samples must be >= 2".into()),
                _ => {}
            }
        }
        if (runs(AttackKind::Bmia) || runs(AttackKind::AttackR)) && self.reference.n_models < 1 {
            return cfg("reference.n_models must be >= 1".into());
        }
        if runs(AttackKind::Lira) && self.reference.n_models < 2 {
            return cfg("lira needs reference.n_models >= 2".into());
        }
        if runs(AttackKind::Qmia) {
            match &self.attacks.qmia {
                None => return cfg("qmia needs an [attacks.qmia] section".into()),
                Some(q) => {
                    q.train
                        .validate()
                        .map_err(|e| Error::Config(format!("qmia: {e}")))?;
                    if q.weight_decays.is_empty() || q.weight_decays.iter().any(|w| !(*w >= 0.0)) {
                        return cfg("qmia weight_decays must be a non-empty list of non-negative values".into());
                    }
                }
            }
        }
        if let Some(l) = &self.laplace {
            match &l.prior {
                PriorConfig::Fixed { value } if !(*value > 0.0) => {
                    return cfg("prior value must be positive".into())
                }
                PriorConfig::MarginalLikelihood { grid: Some(g) }
                | PriorConfig::Validation { grid: Some(g), .. }
                    if g.is_empty() || g.iter().any(|v| !(*v > 0.0)) =>
                {
                    return cfg("prior grid must hold positive values".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Re-derives every seed in the config from `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        let d = |label: &str| derive_seed(seed, label, &[]);
        if let DatasetConfig::Synthetic { seed: s, .. } = &mut self.dataset {
            *s = d("dataset");
        }
        self.split.seed = d("split");
        self.target.seed = d("target");
        self.reference.base_seed = d("reference");
        if let Some(b) = &mut self.attacks.bmia {
            b.seed = d("bmia");
        }
        if let Some(q) = &mut self.attacks.qmia {
            q.train.seed = d("qmia-train");
            q.init_seed = d("qmia-init");
        }
        if let Some(LaplaceConfig {
            prior: PriorConfig::Validation { seed: s, .. },
            ..
        }) = &mut self.laplace
        {
            *s = d("prior-validation");
        }
    }

    /// The desk-scale membership experiment: 50-dimensional, 10-class
    /// Gaussian clusters with 2000 target-training points and a 4-layer MLP.
    pub fn desk_scale(seed: u64) -> Self {
        let train = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 60,
            milestone_epochs: vec![40, 50],
            milestone_factor: 0.1,
            batch_size: 64,
            seed: 0,
        };
        let mut cfg = ExperimentConfig {
            output_dir: None,
            dataset: DatasetConfig::Synthetic {
                n: 10_000,
                dims: 50,
                classes: 10,
                separation: 3.0,
                cluster_spread: 1.0,
                seed: 0,
            },
            split: SplitConfig {
                fractions: [0.2, 0.2, 0.4, 0.2],
                seed: 0,
            },
            model: ModelConfig {
                hidden: vec![128, 64, 32, 16],
                activation: Activation::Relu,
            },
            target: train.clone(),
            reference: ReferenceConfig {
                n_models: 8,
                base_seed: 0,
                train: train.clone(),
            },
            laplace: Some(LaplaceConfig {
                curvature: CurvatureKind::Kfac,
                prior: PriorConfig::MarginalLikelihood { grid: None },
            }),
            attacks: AttackConfig {
                run: vec![
                    AttackKind::AttackP,
                    AttackKind::AttackR,
                    AttackKind::Lira,
                    AttackKind::Qmia,
                    AttackKind::Bmia,
                ],
                alphas: crate::attacks::DEFAULT_ALPHAS.to_vec(),
                bmia: Some(BmiaConfig {
                    n_samples: 1024,
                    mode: PredictiveMode::LinearizedLogit,
                    seed: 0,
                }),
                qmia: Some(QmiaConfig {
                    hidden: vec![64, 32],
                    train: TrainConfig {
                        learning_rate: 0.01,
                        epochs: 40,
                        milestone_epochs: vec![30],
                        ..train
                    },
                    weight_decays: vec![1e-4, 1e-2],
                    init_seed: 0,
                }),
            },
            report: ReportConfig::default(),
        };
        cfg.override_seeds(seed);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_round_trips_through_toml() {
        let c = ExperimentConfig::desk_scale(3);
        c.validate().unwrap();
        let text = c.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn config_errors() {
        let mut c = ExperimentConfig::desk_scale(0);
        c.attacks.alphas = vec![1.5];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml("bogus = 1"),
            Err(Error::Config(_))
        ));
        let mut c = ExperimentConfig::desk_scale(0);
        c.reference.n_models = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_changes_every_seed() {
        let a = ExperimentConfig::desk_scale(1);
        let b = ExperimentConfig::desk_scale(2);
        assert_ne!(a.split.seed, b.split.seed);
        assert_ne!(a.target.seed, b.target.seed);
        assert_ne!(a.reference.base_seed, b.reference.base_seed);
        assert_eq!(a, ExperimentConfig::desk_scale(1));
    }
}
