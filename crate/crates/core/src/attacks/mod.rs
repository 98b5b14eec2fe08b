//! Membership scores and the attack procedures built on them.
//!
//! Every attack returns an [`AttackDecision`] whose `statistic` follows the
//! convention "larger means more member-like", so all attacks share one ROC
//! sweep.

mod ensemble;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{PredictiveMode, PreparedPosterior};
use crate::nn::MlpModel;
use crate::numkit::{mean_std, std_normal_cdf, std_normal_sf, student_t_sf, RngState};

pub use ensemble::{build_reference_ensemble, train_reference_model, ReferenceEnsemble};
pub use io::{
    read_decisions, read_score_cache, write_decisions, write_score_cache, DecisionRow, ScoreRow,
};

/// Significance levels reported by default.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.001, 0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipQuery {
    pub x: Vec<f64>,
    pub y: usize,
    pub is_member: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackDecision {
    pub attack_name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    /// `(α, verdict)` pairs in the order requested.
    pub verdict_at: Vec<(f64, bool)>,
    /// Caveats such as a nearest-level fallback.
    pub notes: Vec<String>,
}

impl AttackDecision {
    fn new(name: &str, statistic: f64, p_value: Option<f64>) -> Self {
        AttackDecision {
            attack_name: name.to_string(),
            statistic,
            p_value,
            verdict_at: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn verdict(&self, alpha: f64) -> Option<bool> {
        self.verdict_at
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|&(_, v)| v)
    }
}

/// True-class logit minus the largest other logit.
pub fn hinge_score(logits: &[f64], y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument("hinge score needs at least 2 classes".into()));
    }
    if y >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: logits.len(),
        });
    }
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y] - other)
}

/// Hinge score of a query under `model`.
pub fn model_score(model: &MlpModel, x: &[f64], y: usize) -> Result<f64> {
    hinge_score(&model.forward(x)?, y)
}

/// One-sided one-sample t-test on score differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceTest {
    pub mean: f64,
    pub std: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Tests `H0: E[d] ≤ 0` against `E[d] > 0`. A zero spread is resolved by
/// the sign of the mean (`p` of 0.5, 0 or 1, `t` of 0 or ±∞).
pub fn difference_t_test(d: &[f64]) -> Result<DifferenceTest> {
    if d.len() < 2 {
        return Err(Error::InvalidArgument("t-test needs at least 2 differences".into()));
    }
    let (mean, mut std) = mean_std(d);
    // identical differences can still leave rounding residue in the spread
    if d.iter().all(|&x| x == d[0]) {
        std = 0.0;
    }
    let (t, p_value) = if std > 0.0 {
        let t = mean / (std / (d.len() as f64).sqrt());
        (t, student_t_sf(t, d.len() as u64 - 1)?)
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else if mean < 0.0 {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (0.0, 0.5)
    };
    Ok(DifferenceTest {
        mean,
        std,
        t,
        p_value,
    })
}

/// BMIA decision from the target score and posterior reference scores.
///
/// The statistic is the t value rather than `−p`: the two rank queries
/// identically for a fixed sample count, but `p` underflows to zero for
/// large `t` and would collapse the low-FPR end of the ROC into ties.
pub fn bmia_from_scores(s0: f64, ref_scores: &[f64], alphas: &[f64]) -> Result<AttackDecision> {
    let d: Vec<f64> = ref_scores.iter().map(|s| s0 - s).collect();
    let test = difference_t_test(&d)?;
    let mut out = AttackDecision::new("bmia", test.t, Some(test.p_value));
    out.verdict_at = alphas.iter().map(|&a| (a, test.p_value < a)).collect();
    Ok(out)
}

/// Conditional attack with one reference model's last-layer posterior.
#[allow(clippy::too_many_arguments)]
pub fn bmia_attack(
    target: &MlpModel,
    reference: &MlpModel,
    posterior: &PreparedPosterior,
    query: &MembershipQuery,
    alphas: &[f64],
    n_samples: usize,
    mode: PredictiveMode,
    rng: &mut RngState,
) -> Result<AttackDecision> {
    let s0 = model_score(target, &query.x, query.y)?;
    let scores = posterior.sample_scores(reference, &query.x, query.y, n_samples, mode, rng)?;
    bmia_from_scores(s0, &scores, alphas)
}

/// Fraction of `scores` strictly below `s0`, ties counting one half.
pub fn midrank(scores: &[f64], s0: f64) -> f64 {
    let mut below = 0.0;
    for &s in scores {
        if s < s0 {
            below += 1.0;
        } else if s == s0 {
            below += 0.5;
        }
    }
    below / scores.len() as f64
}

/// Empirical `q`-quantile: the smallest sample whose empirical CDF reaches `q`.
pub fn empirical_quantile(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[k - 1])
}

fn threshold_verdicts(scores: &[f64], s0: f64, alphas: &[f64]) -> Result<Vec<(f64, bool)>> {
    alphas
        .iter()
        .map(|&a| Ok((a, s0 >= empirical_quantile(scores, 1.0 - a)?)))
        .collect()
}

/// Marginal attack: rank of the target score among population non-member scores.
pub fn attack_p(population_scores: &[f64], s0: f64, alphas: &[f64]) -> Result<AttackDecision> {
    if population_scores.is_empty() {
        return Err(Error::InvalidArgument("attack-p needs population scores".into()));
    }
    let mut out = AttackDecision::new("attack_p", midrank(population_scores, s0), None);
    out.verdict_at = threshold_verdicts(population_scores, s0, alphas)?;
    Ok(out)
}

/// Per-query empirical threshold from reference-model scores.
pub fn attack_r(ref_scores: &[f64], s0: f64, alphas: &[f64]) -> Result<AttackDecision> {
    if ref_scores.is_empty() {
        return Err(Error::InvalidArgument("attack-r needs reference scores".into()));
    }
    let mut out = AttackDecision::new("attack_r", midrank(ref_scores, s0), None);
    out.verdict_at = threshold_verdicts(ref_scores, s0, alphas)?;
    Ok(out)
}

/// Offline LiRA: Gaussian fit to the query's reference scores.
pub fn lira_offline(ref_scores: &[f64], s0: f64, alphas: &[f64]) -> Result<AttackDecision> {
    if ref_scores.len() < 2 {
        return Err(Error::InvalidArgument("offline LiRA needs at least 2 reference scores".into()));
    }
    let (mu, sigma) = mean_std(ref_scores);
    let (stat, upper) = if sigma > 0.0 {
        let z = (s0 - mu) / sigma;
        (std_normal_cdf(z), std_normal_sf(z))
    } else if s0 > mu {
        (1.0, 0.0)
    } else if s0 < mu {
        (0.0, 1.0)
    } else {
        (0.5, 0.5)
    };
    let mut out = AttackDecision::new("lira_offline", stat, Some(upper));
    out.verdict_at = alphas.iter().map(|&a| (a, stat >= 1.0 - a)).collect();
    Ok(out)
}

/// Sorts predicted quantiles so they are non-decreasing in the level.
pub fn rearrange_quantiles(levels: &[f64], predicted: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let mut values = predicted.to_vec();
    values.sort_by(f64::total_cmp);
    // value of rank r goes to the level of rank r
    let mut out = vec![0.0; predicted.len()];
    for (r, &k) in order.iter().enumerate() {
        out[k] = values[r];
    }
    out
}

fn nearest_level(levels: &[f64], want: f64) -> usize {
    let mut best = 0;
    for (k, &l) in levels.iter().enumerate() {
        if (l - want).abs() < (levels[best] - want).abs() {
            best = k;
        }
    }
    best
}

/// Quantile-regression attack. `quantile_model` predicts the score
/// quantiles at the levels of its task from the features alone.
pub fn qmia_attack(
    quantile_model: &MlpModel,
    x: &[f64],
    s0: f64,
    alphas: &[f64],
) -> Result<AttackDecision> {
    let levels = match &quantile_model.architecture.task {
        crate::nn::Task::Quantile(t) if !t.is_empty() => t.clone(),
        _ => {
            return Err(Error::InvalidArgument(
                "qmia needs a quantile-regression model".into(),
            ))
        }
    };
    let q = rearrange_quantiles(&levels, &quantile_model.forward(x)?);
    qmia_from_quantiles(&levels, &q, s0, alphas)
}

/// QMIA decision from already rearranged quantile predictions.
pub fn qmia_from_quantiles(
    levels: &[f64],
    quantiles: &[f64],
    s0: f64,
    alphas: &[f64],
) -> Result<AttackDecision> {
    if levels.len() != quantiles.len() || levels.is_empty() {
        return Err(Error::Dimension("quantile levels and predictions differ".into()));
    }
    let mut notes = Vec::new();
    let m = nearest_level(levels, 0.5);
    if levels[m] != 0.5 {
        notes.push(format!("median taken at level {}", levels[m]));
    }
    let mut out = AttackDecision::new("qmia", s0 - quantiles[m], None);
    for &a in alphas {
        let k = nearest_level(levels, 1.0 - a);
        if (levels[k] - (1.0 - a)).abs() > 1e-12 {
            notes.push(format!("alpha {a} uses nearest level {}", levels[k]));
        }
        out.verdict_at.push((a, s0 >= quantiles[k]));
    }
    out.notes = notes;
    Ok(out)
}

/// Quantile levels a QMIA model needs for the given significance levels,
/// plus the median.
pub fn qmia_levels(alphas: &[f64]) -> Vec<f64> {
    let mut levels: Vec<f64> = alphas.iter().map(|a| 1.0 - a).collect();
    levels.push(0.5);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_score(&[2.0, 1.0, 0.0], 0).unwrap(), 1.0);
        assert_eq!(hinge_score(&[2.0, 1.0, 0.0], 2).unwrap(), -2.0);
        assert_eq!(hinge_score(&[1.0, 1.0, 0.0], 0).unwrap(), 0.0);
        assert!(hinge_score(&[1.0, 2.0], 2).is_err());
        assert!(hinge_score(&[1.0], 0).is_err());
    }

    #[test]
    fn t_test_worked_example() {
        let r = difference_t_test(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.std, 1.0);
        assert!((r.t - 12f64.sqrt()).abs() < 1e-12);
        assert!((r.p_value - 0.0371).abs() < 1e-3);
        let n = difference_t_test(&[-1.0, -2.0, -3.0]).unwrap();
        assert!((n.p_value - (1.0 - r.p_value)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spread() {
        let d = bmia_from_scores(1.0, &[1.0; 5], &[0.01, 0.5, 0.6]).unwrap();
        assert_eq!(d.p_value, Some(0.5));
        assert_eq!(d.verdict(0.01), Some(false));
        assert_eq!(d.verdict(0.5), Some(false));
        assert_eq!(d.verdict(0.6), Some(true));
        assert_eq!(bmia_from_scores(2.0, &[1.0; 5], &[]).unwrap().p_value, Some(0.0));
        assert_eq!(bmia_from_scores(0.0, &[1.0; 5], &[]).unwrap().p_value, Some(1.0));
    }

    #[test]
    fn rank_attacks() {
        let pop = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(attack_p(&pop, 0.0, &[]).unwrap().statistic, 0.0);
        assert_eq!(attack_p(&pop, 9.0, &[]).unwrap().statistic, 1.0);
        assert_eq!(attack_p(&pop, 2.5, &[]).unwrap().statistic, 0.5);
        assert_eq!(attack_r(&pop, 5.0, &[]).unwrap().statistic, 1.0);
        assert_eq!(attack_r(&pop, 0.0, &[]).unwrap().statistic, 0.0);
        assert_eq!(attack_r(&pop, 2.5, &[]).unwrap().statistic, 0.5);
        assert_eq!(attack_r(&pop, 2.0, &[]).unwrap().statistic, 0.375);
    }

    #[test]
    fn empirical_quantile_counts() {
        let s = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&s, 0.2).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&s, 0.21).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&s, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn lira_examples() {
        assert_eq!(lira_offline(&[-1.0, 1.0], 0.0, &[]).unwrap().statistic, 0.5);
        let d = lira_offline(&[-1.0, 1.0], 2f64.sqrt(), &[]).unwrap();
        assert!((d.statistic - 0.841344746068543).abs() < 1e-9);
        assert_eq!(lira_offline(&[2.0, 2.0], 3.0, &[]).unwrap().statistic, 1.0);
        assert_eq!(lira_offline(&[2.0, 2.0], 1.0, &[]).unwrap().statistic, 0.0);
        assert!(lira_offline(&[2.0], 1.0, &[]).is_err());
    }

    #[test]
    fn rearrangement_makes_quantiles_monotone() {
        let levels = [0.5, 0.05, 0.95];
        let q = rearrange_quantiles(&levels, &[0.0, 1.0, -1.0]);
        assert_eq!(q, vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn qmia_statistic_and_fallback() {
        let levels = [0.5, 0.9, 0.99];
        let q = [1.0, 2.0, 3.0];
        let d = qmia_from_quantiles(&levels, &q, 1.0, &[0.01, 0.05]).unwrap();
        assert_eq!(d.statistic, 0.0);
        assert_eq!(d.verdict(0.01), Some(false));
        assert!(d.notes.iter().any(|n| n.contains("0.05")));
        let d = qmia_from_quantiles(&levels, &q, 3.5, &[0.01]).unwrap();
        assert_eq!(d.verdict(0.01), Some(true));
        assert!(d.notes.is_empty());
    }

    #[test]
    fn levels_include_median() {
        let l = qmia_levels(&DEFAULT_ALPHAS);
        assert_eq!(l.len(), 4);
        assert_eq!(l[0], 0.5);
    }
}
