use std::fmt::Write as _;

use crate::error::Result;
use crate::numkit::{std_normal_cdf, std_normal_quantile, RngState};
use crate::theory::{
    tpr_conditional_mc, tpr_marginal_closed_form, tpr_marginal_closed_form_with, tpr_marginal_mc,
    variance_decomposition, ConditionalFamily, GaussianPair,
};

/// Replaceable pieces, for negative controls.
#[derive(Debug, Clone, Copy)]
pub struct TheoryHooks {
    pub normal_cdf: fn(f64) -> f64,
}

impl Default for TheoryHooks {
    fn default() -> Self {
        TheoryHooks {
            normal_cdf: std_normal_cdf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const MC_SAMPLES: usize = 200_000;

fn row(name: &str, passed: bool, detail: String) -> TheoryCheck {
    TheoryCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_pair(rng: &mut RngState) -> GaussianPair {
    GaussianPair {
        mu_s: rng.uniform_range(-1.0, 3.0),
        sigma_s: rng.uniform_range(0.5, 2.0),
        mu_d: rng.uniform_range(-1.0, 1.0),
        sigma_d: rng.uniform_range(0.5, 2.0),
    }
}

fn check_worked_value(h: &TheoryHooks) -> Result<TheoryCheck> {
    let p = GaussianPair::new(1.0, 1.0, 0.0, 1.0)?;
    let v = tpr_marginal_closed_form_with(&p, 0.01, h.normal_cdf)?;
    Ok(row(
        "marginal closed form, worked value",
        (v - 0.0925).abs() < 2e-4,
        format!("{v:.6} vs 0.0925 (tolerance 2e-4)"),
    ))
}

fn check_closed_vs_mc(h: &TheoryHooks, seed: u64) -> Result<TheoryCheck> {
    let root = RngState::new(seed);
    let mut prng = root.substream("pairs", &[]);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let p = random_pair(&mut prng);
        let alpha = [0.001, 0.01, 0.05, 0.2][k % 4];
        let exact = tpr_marginal_closed_form_with(&p, alpha, h.normal_cdf)?;
        let mc = tpr_marginal_mc(&p, alpha, MC_SAMPLES, &root.substream("mc", &[k as u64]))?;
        let se = (mc * (1.0 - mc) / MC_SAMPLES as f64).sqrt().max(1.0 / MC_SAMPLES as f64);
        worst = worst.max((exact - mc).abs() / se);
    }
    Ok(row(
        "marginal closed form vs monte carlo",
        worst <= 5.0,
        format!("max deviation {worst:.2} standard errors (limit 5)"),
    ))
}

fn check_limits(h: &TheoryHooks) -> Result<TheoryCheck> {
    let lo = GaussianPair::new(-20.0, 1.0, 0.0, 1.0)?;
    let hi = GaussianPair::new(20.0, 1.0, 0.0, 1.0)?;
    let a = tpr_marginal_closed_form_with(&lo, 0.01, h.normal_cdf)?;
    let b = tpr_marginal_closed_form_with(&hi, 0.01, h.normal_cdf)?;
    Ok(row(
        "marginal closed form limits",
        a < 1e-12 && b > 1.0 - 1e-12,
        format!("{a:.3e} at -20 sd, {b:.12} at +20 sd"),
    ))
}

fn heterogeneous_family(rng: &mut RngState) -> ConditionalFamily {
    let lo = rng.uniform_range(0.0, 0.3);
    ConditionalFamily {
        mu_d_mean: rng.uniform_range(-1.0, 1.0),
        mu_d_std: rng.uniform_range(0.5, 2.0),
        gap: (lo, lo + rng.uniform_range(0.1, 0.8)),
        sigma_d: (0.8, 0.8 + rng.uniform_range(0.0, 0.7)),
        sigma_s: (0.8, 0.8 + rng.uniform_range(0.0, 0.7)),
    }
}

fn check_conditional_dominance(seed: u64) -> Result<TheoryCheck> {
    let root = RngState::new(seed);
    let mut frng = root.substream("families", &[]);
    let mut failures = 0;
    let mut total = 0;
    let mut min_gap = f64::INFINITY;
    for f in 0..5 {
        let fam = heterogeneous_family(&mut frng);
        for (k, &alpha) in [0.001, 0.01, 0.05].iter().enumerate() {
            let r = tpr_conditional_mc(&fam, alpha, 1000, 1000, &root.substream("mc", &[f, k as u64]))?;
            total += 1;
            if r.conditional < r.marginal_moment || r.max_example_tpr >= 0.5 {
                failures += 1;
            }
            min_gap = min_gap.min(r.conditional - r.marginal_moment);
        }
    }
    Ok(row(
        "conditional tpr >= moment-matched marginal tpr",
        failures == 0,
        format!("{failures}/{total} violations, smallest gap {min_gap:.4}"),
    ))
}

/// The conditional proposition's statement writes `− Φ⁻¹(α)·σ_D` where the
/// proofs use `+`. Only the `+` form reproduces simulated per-example TPRs.
fn check_sign_convention(seed: u64) -> Result<TheoryCheck> {
    let p = GaussianPair::new(1.0, 1.0, 0.0, 1.0)?;
    let alpha = 0.01;
    let plus = tpr_marginal_closed_form(&p, alpha)?;
    let minus = std_normal_cdf((p.mu_s - p.mu_d - std_normal_quantile(alpha)? * p.sigma_d) / p.sigma_s);
    let mc = tpr_marginal_mc(&p, alpha, MC_SAMPLES, &RngState::new(seed))?;
    let se = (mc * (1.0 - mc) / MC_SAMPLES as f64).sqrt();
    let plus_ok = (plus - mc).abs() <= 5.0 * se;
    let minus_ok = (minus - mc).abs() <= 5.0 * se;
    Ok(row(
        "threshold sign (+ form matches simulation, - form does not)",
        plus_ok && !minus_ok,
        format!("+ form {plus:.4}, - form {minus:.4}, simulated {mc:.4}"),
    ))
}

fn check_variance_identity(seed: u64) -> Result<TheoryCheck> {
    let mut rng = RngState::new(seed).substream("variance", &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng.below(50);
        let m: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.uniform() * 2.0).collect();
        let d = variance_decomposition(&m, &v, false)?;
        let ulp = f64::EPSILON * d.total.abs().max(f64::MIN_POSITIVE);
        worst = worst.max((d.epistemic + d.aleatoric - d.total).abs() / ulp);
    }
    Ok(row(
        "total variance = epistemic + aleatoric",
        worst <= 1.0,
        format!("max residual {worst:.1} ulp"),
    ))
}

/// Runs the theory self-checks with the given hooks.
pub fn verify_theory_with(hooks: &TheoryHooks, seed: u64) -> Result<Vec<TheoryCheck>> {
    Ok(vec![
        check_worked_value(hooks)?,
        check_closed_vs_mc(hooks, seed)?,
        check_limits(hooks)?,
        check_conditional_dominance(seed)?,
        check_sign_convention(seed)?,
        check_variance_identity(seed)?,
    ])
}

pub fn verify_theory(seed: u64) -> Result<Vec<TheoryCheck>> {
    verify_theory_with(&TheoryHooks::default(), seed)
}

pub fn format_theory_table(rows: &[TheoryCheck]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "{}  {:<width$}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    s
}
