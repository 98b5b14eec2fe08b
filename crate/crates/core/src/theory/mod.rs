//! Closed-form and Monte Carlo true-positive rates for Gaussian member and
//! non-member score models, and the law-of-total-variance split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{std_normal_cdf, std_normal_quantile, RngState};

/// Minimum sample count accepted by [`tpr_marginal_mc`].
pub const MIN_MC_SAMPLES: usize = 10_000;
const MC_CHUNK: usize = 1 << 16;

/// Member scores `N(mu_s, sigma_s²)`, non-member scores `N(mu_d, sigma_d²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
}

impl GaussianPair {
    pub fn new(mu_s: f64, sigma_s: f64, mu_d: f64, sigma_d: f64) -> Result<Self> {
        if !(sigma_s > 0.0 && sigma_d > 0.0) || !(mu_s.is_finite() && mu_d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian pair needs finite means and positive spreads, got ({mu_s}, {sigma_s}, {mu_d}, {sigma_d})"
            )));
        }
        Ok(GaussianPair {
            mu_s,
            sigma_s,
            mu_d,
            sigma_d,
        })
    }

    /// Score threshold with false-positive rate `alpha` under the non-member law.
    pub fn threshold(&self, alpha: f64) -> Result<f64> {
        Ok(self.mu_d + std_normal_quantile(1.0 - alpha)? * self.sigma_d)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `Φ((μ_S − μ_D + Φ⁻¹(α)·σ_D) / σ_S)`.
pub fn tpr_marginal_closed_form(pair: &GaussianPair, alpha: f64) -> Result<f64> {
    tpr_marginal_closed_form_with(pair, alpha, std_normal_cdf)
}

/// As [`tpr_marginal_closed_form`] with a caller-supplied normal CDF.
pub fn tpr_marginal_closed_form_with(
    pair: &GaussianPair,
    alpha: f64,
    cdf: fn(f64) -> f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let z = (pair.mu_s - pair.mu_d + std_normal_quantile(alpha)? * pair.sigma_d) / pair.sigma_s;
    Ok(cdf(z))
}

/// Fraction of `n` member-score draws at or above the exact non-member
/// threshold.
pub fn tpr_marginal_mc(pair: &GaussianPair, alpha: f64, n: usize, rng: &RngState) -> Result<f64> {
    check_alpha(alpha)?;
    if n < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "monte carlo needs at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    let tau = pair.threshold(alpha)?;
    let chunks = n.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream("tpr-mc", &[c as u64]);
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            (0..len)
                .filter(|_| r.normal(pair.mu_s, pair.sigma_s) >= tau)
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(hits as f64 / n as f64)
}

/// Distribution of per-example score parameters:
/// `μ_D ~ N(mu_d_mean, mu_d_std²)`, `μ_S = μ_D + gap` with
/// `gap ~ U[gap_lo, gap_hi]`, and uniform spreads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFamily {
    pub mu_d_mean: f64,
    pub mu_d_std: f64,
    pub gap: (f64, f64),
    pub sigma_d: (f64, f64),
    pub sigma_s: (f64, f64),
}

impl ConditionalFamily {
    /// Every example has the same parameters.
    pub fn constant(pair: GaussianPair) -> Self {
        let gap = pair.mu_s - pair.mu_d;
        ConditionalFamily {
            mu_d_mean: pair.mu_d,
            mu_d_std: 0.0,
            gap: (gap, gap),
            sigma_d: (pair.sigma_d, pair.sigma_d),
            sigma_s: (pair.sigma_s, pair.sigma_s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0 <= r.1;
        if !(self.mu_d_std >= 0.0)
            || !ok(self.gap)
            || !ok(self.sigma_d)
            || !ok(self.sigma_s)
            || !(self.sigma_d.0 > 0.0 && self.sigma_s.0 > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid conditional family {self:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngState) -> GaussianPair {
        let mu_d = self.mu_d_mean + self.mu_d_std * rng.standard_normal();
        let draw = |r: &mut RngState, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                r.uniform_range(lo, hi)
            }
        };
        let gap = draw(rng, self.gap);
        let sigma_d = draw(rng, self.sigma_d);
        let sigma_s = draw(rng, self.sigma_s);
        GaussianPair {
            mu_s: mu_d + gap,
            sigma_s,
            mu_d,
            sigma_d,
        }
    }
}

/// Conditional-attack TPR together with the marginal attack on the same
/// population of examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTpr {
    /// Mean over examples of the per-example closed-form TPR.
    pub conditional: f64,
    /// Marginal attack by direct simulation: one threshold at the pooled
    /// non-member `(1 − α)`-quantile, applied to pooled member scores.
    pub marginal_mc: f64,
    /// Marginal attack with both mixtures replaced by Gaussians of equal
    /// mean and variance.
    pub marginal_moment: f64,
    /// Largest per-example TPR encountered.
    pub max_example_tpr: f64,
}

pub fn tpr_conditional_mc(
    family: &ConditionalFamily,
    alpha: f64,
    n_examples: usize,
    n_samples: usize,
    rng: &RngState,
) -> Result<ConditionalTpr> {
    check_alpha(alpha)?;
    family.validate()?;
    if n_examples < 1000 || n_samples < 1000 {
        return Err(Error::InvalidArgument(
            "conditional monte carlo needs at least 1000 examples and 1000 samples".into(),
        ));
    }
    let mut prng = rng.substream("family", &[]);
    let pairs: Vec<GaussianPair> = (0..n_examples).map(|_| family.sample(&mut prng)).collect();

    let mut conditional = 0.0;
    let mut max_example_tpr = 0.0_f64;
    for p in &pairs {
        let t = tpr_marginal_closed_form(p, alpha)?;
        conditional += t;
        max_example_tpr = max_example_tpr.max(t);
    }
    conditional /= n_examples as f64;

    let draws: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = rng.substream("example-scores", &[i as u64]);
            let non: Vec<f64> = (0..n_samples).map(|_| r.normal(p.mu_d, p.sigma_d)).collect();
            let mem: Vec<f64> = (0..n_samples).map(|_| r.normal(p.mu_s, p.sigma_s)).collect();
            (non, mem)
        })
        .collect();
    let mut non: Vec<f64> = draws.iter().flat_map(|d| d.0.iter().copied()).collect();
    non.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * non.len() as f64).ceil() as usize;
    let tau = non[k.clamp(1, non.len()) - 1];
    let total = draws.len() * n_samples;
    // strictly above the empirical quantile keeps the pooled FPR at most α
    let hits = draws.iter().flat_map(|d| d.1.iter()).filter(|&&s| s > tau).count();
    let marginal_mc = hits as f64 / total as f64;

    let moments = |f: &dyn Fn(&GaussianPair) -> (f64, f64)| {
        let n = pairs.len() as f64;
        let mean = pairs.iter().map(|p| f(p).0).sum::<f64>() / n;
        let second = pairs
            .iter()
            .map(|p| {
                let (m, s) = f(p);
                s * s + m * m
            })
            .sum::<f64>()
            / n;
        (mean, (second - mean * mean).max(0.0).sqrt())
    };
    let (ms, ss) = moments(&|p| (p.mu_s, p.sigma_s));
    let (md, sd) = moments(&|p| (p.mu_d, p.sigma_d));
    let marginal_moment = tpr_marginal_closed_form(&GaussianPair::new(ms, ss, md, sd)?, alpha)?;

    Ok(ConditionalTpr {
        conditional,
        marginal_mc,
        marginal_moment,
        max_example_tpr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSplit {
    pub epistemic: f64,
    pub aleatoric: f64,
    pub total: f64,
}

/// Splits predictive variance into the spread of per-draw means and the mean
/// of per-draw variances. `sample_variance` switches the spread to the n − 1
/// denominator, after which `total` is no longer an exact identity.
pub fn variance_decomposition(
    mean_per_sample: &[f64],
    var_per_sample: &[f64],
    sample_variance: bool,
) -> Result<VarianceSplit> {
    if mean_per_sample.len() != var_per_sample.len() {
        return Err(Error::Dimension(format!(
            "{} means but {} variances",
            mean_per_sample.len(),
            var_per_sample.len()
        )));
    }
    let n = mean_per_sample.len();
    if n == 0 || (sample_variance && n < 2) {
        return Err(Error::InvalidArgument("too few draws for a variance".into()));
    }
    if var_per_sample.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("variances must be non-negative".into()));
    }
    let mean = mean_per_sample.iter().sum::<f64>() / n as f64;
    let ss: f64 = mean_per_sample.iter().map(|m| (m - mean) * (m - mean)).sum();
    let epistemic = ss / if sample_variance { n - 1 } else { n } as f64;
    let aleatoric = var_per_sample.iter().sum::<f64>() / n as f64;
    Ok(VarianceSplit {
        epistemic,
        aleatoric,
        total: epistemic + aleatoric,
    })
}
