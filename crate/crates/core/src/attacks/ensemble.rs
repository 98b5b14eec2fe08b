use std::time::Instant;

use crate::data::{sample_reference_subset, LabeledDataset};
use crate::error::Result;
use crate::nn::{sgd_train, weight_init, MlpArchitecture, MlpModel, TrainConfig};
use crate::numkit::{derive_seed, RngState};

/// Reference (shadow) models, each trained on a random half of the population.
#[derive(Debug, Clone)]
pub struct ReferenceEnsemble {
    pub models: Vec<MlpModel>,
    /// Row indices into the population dataset.
    pub training_subsets: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    /// Wall-clock training time of every model.
    pub train_seconds: Vec<f64>,
}

impl ReferenceEnsemble {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// The first `n` models as their own ensemble.
    pub fn truncated(&self, n: usize) -> ReferenceEnsemble {
        let n = n.min(self.len());
        ReferenceEnsemble {
            models: self.models[..n].to_vec(),
            training_subsets: self.training_subsets[..n].to_vec(),
            seeds: self.seeds[..n].to_vec(),
            train_seconds: self.train_seconds[..n].to_vec(),
        }
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.train_seconds.iter().sum()
    }
}

/// Trains one reference model on a half of the population.
pub fn train_reference_model(
    population: &LabeledDataset,
    architecture: &MlpArchitecture,
    config: &TrainConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<usize>)> {
    let all: Vec<usize> = (0..population.len()).collect();
    let subset = sample_reference_subset(&all, seed)?;
    let data = population.subset(&subset);
    let init = weight_init(architecture, derive_seed(seed, "reference-init", &[]))?;
    let mut rng = RngState::new(seed).substream("reference-train", &[]);
    let model = sgd_train(&init, &data, config, &mut rng)?;
    Ok((model, subset))
}

/// Model `i` uses seed `base_seed + i` for its subset, initialization and
/// shuffling. Models train one after another so per-model timings are not
/// distorted by contention.
pub fn build_reference_ensemble(
    population: &LabeledDataset,
    n: usize,
    architecture: &MlpArchitecture,
    config: &TrainConfig,
    base_seed: u64,
) -> Result<ReferenceEnsemble> {
    let mut ens = ReferenceEnsemble {
        models: Vec::with_capacity(n),
        training_subsets: Vec::with_capacity(n),
        seeds: Vec::with_capacity(n),
        train_seconds: Vec::with_capacity(n),
    };
    for i in 0..n {
        let seed = base_seed.wrapping_add(i as u64);
        let start = Instant::now();
        let (model, subset) = train_reference_model(population, architecture, config, seed)
            .map_err(|e| e.in_stage(&format!("reference model {i}")))?;
        ens.train_seconds.push(start.elapsed().as_secs_f64());
        ens.models.push(model);
        ens.training_subsets.push(subset);
        ens.seeds.push(seed);
    }
    Ok(ens)
}
