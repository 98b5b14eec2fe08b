use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::RngState;

/// Disjoint index sets of a membership experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub target_train: Vec<usize>,
    pub target_test: Vec<usize>,
    pub population: Vec<usize>,
    pub holdout: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn sizes(&self) -> [usize; 4] {
        [
            self.target_train.len(),
            self.target_test.len(),
            self.population.len(),
            self.holdout.len(),
        ]
    }

    pub fn parts(&self) -> [&[usize]; 4] {
        [
            &self.target_train,
            &self.target_test,
            &self.population,
            &self.holdout,
        ]
    }
}

/// Seeded permutation of `0..n` cut into (target-train, target-test,
/// population, holdout). Sizes use floor rounding; the remainder goes to
/// the holdout when the fractions sum to one.
pub fn split_four_way(n: usize, fractions: [f64; 4], seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("split needs n >= 4, got {n}")));
    }
    if fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::InvalidArgument("split fractions must be non-negative".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {total} > 1"
        )));
    }
    let perm = RngState::new(seed).substream("split", &[]).permutation(n);
    let mut sizes = [0usize; 4];
    for k in 0..3 {
        sizes[k] = (fractions[k] * n as f64 + 1e-9).floor() as usize;
    }
    let used: usize = sizes[..3].iter().sum();
    sizes[3] = if (total - 1.0).abs() <= 1e-12 {
        n - used
    } else {
        ((fractions[3] * n as f64 + 1e-9).floor() as usize).min(n - used)
    };
    let mut cuts = Vec::with_capacity(4);
    let mut start = 0;
    for s in sizes {
        cuts.push(perm[start..start + s].to_vec());
        start += s;
    }
    let mut it = cuts.into_iter();
    Ok(SplitPlan {
        target_train: it.next().unwrap(),
        target_test: it.next().unwrap(),
        population: it.next().unwrap(),
        holdout: it.next().unwrap(),
        seed,
    })
}

/// Uniform half of `population` (floor), drawn without replacement.
pub fn sample_reference_subset(population: &[usize], seed: u64) -> Result<Vec<usize>> {
    if population.len() < 2 {
        return Err(Error::InvalidArgument(
            "reference subset needs a population of at least 2".into(),
        ));
    }
    let mut pool = population.to_vec();
    RngState::new(seed).substream("reference-subset", &[]).shuffle(&mut pool);
    pool.truncate(population.len() / 2);
    Ok(pool)
}
