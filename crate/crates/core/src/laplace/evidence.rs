use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::laplace::{
    check_prior, data_nll, fit_last_layer_posterior, Curvature, CurvatureKind, LastLayerPosterior,
    Likelihood, PreparedPosterior,
};
use crate::nn::{softmax, MlpModel};
use crate::numkit::{symmetric_eigen, RngState};

/// 17 log-spaced prior precisions from 1e-4 to 1e4.
pub fn default_prior_grid() -> Vec<f64> {
    (0..17).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

#[derive(Debug, Clone)]
enum Spectrum {
    Plain(Vec<f64>),
    Kronecker { a: Vec<f64>, b: Vec<f64> },
}

/// λ-independent pieces of the Laplace evidence, so a sweep over prior
/// precisions costs one eigen-decomposition.
#[derive(Debug, Clone)]
pub struct EvidenceTerms {
    data_nll: f64,
    w_sq_norm: f64,
    n_params: usize,
    spectrum: Spectrum,
}

impl EvidenceTerms {
    pub fn new(posterior: &LastLayerPosterior, data_nll: f64) -> Result<Self> {
        let spectrum = match &posterior.curvature {
            Curvature::Full(g) => Spectrum::Plain(symmetric_eigen(g)?.0),
            Curvature::Diagonal(g) => Spectrum::Plain(g.clone()),
            Curvature::Kfac(f) => Spectrum::Kronecker {
                a: symmetric_eigen(&f.a)?.0,
                b: symmetric_eigen(&f.b)?.0,
            },
        };
        Ok(EvidenceTerms {
            data_nll,
            w_sq_norm: posterior.w_map.as_slice().iter().map(|x| x * x).sum(),
            n_params: posterior.n_params(),
            spectrum,
        })
    }

    /// `ln det` of the posterior precision at prior precision `lam`.
    pub fn log_det_precision(&self, lam: f64) -> Result<f64> {
        let ln_pos = |v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::NotPositiveDefinite { pivot: 0, value: v })
            }
        };
        match &self.spectrum {
            // curvature eigenvalues are PSD up to round-off
            Spectrum::Plain(g) => g.iter().map(|&v| ln_pos(v.max(0.0) + lam)).sum(),
            Spectrum::Kronecker { a, b } => {
                let s = lam.sqrt();
                let la: f64 = a.iter().map(|&v| ln_pos(v.max(0.0) + s)).sum::<Result<f64>>()?;
                let lb: f64 = b.iter().map(|&v| ln_pos(v.max(0.0) + s)).sum::<Result<f64>>()?;
                Ok(b.len() as f64 * la + a.len() as f64 * lb)
            }
        }
    }

    /// `−L(D; w_MAP) + (d/2)·ln 2π + ½·ln det Σ`, where `L` is the data NLL
    /// plus the Gaussian prior's negative log density.
    pub fn log_marginal_likelihood(&self, lam: f64) -> Result<f64> {
        check_prior(lam)?;
        let d = self.n_params as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        let neg_log_prior = 0.5 * lam * self.w_sq_norm - 0.5 * d * (lam / two_pi).ln();
        let loss = self.data_nll + neg_log_prior;
        Ok(-loss + 0.5 * d * two_pi.ln() - 0.5 * self.log_det_precision(lam)?)
    }
}

fn evidence_terms(
    model: &MlpModel,
    fit_data: &LabeledDataset,
    kind: CurvatureKind,
    likelihood: Likelihood,
) -> Result<(LastLayerPosterior, EvidenceTerms)> {
    let posterior = fit_last_layer_posterior(model, fit_data, kind, 1.0, likelihood)?;
    let outputs = model.forward_batch(&fit_data.features)?;
    let nll = data_nll(likelihood, &outputs, &fit_data.labels)?;
    let terms = EvidenceTerms::new(&posterior, nll)?;
    Ok((posterior, terms))
}

/// Laplace estimate of the log evidence at prior precision `lam`.
pub fn log_marginal_likelihood(
    model: &MlpModel,
    fit_data: &LabeledDataset,
    kind: CurvatureKind,
    lam: f64,
    likelihood: Likelihood,
) -> Result<f64> {
    check_prior(lam)?;
    evidence_terms(model, fit_data, kind, likelihood)?
        .1
        .log_marginal_likelihood(lam)
}

/// How [`tune_prior_precision`] scores a candidate λ.
#[derive(Debug, Clone)]
pub enum TuneMode {
    MarginalLikelihood,
    /// Summed log posterior-predictive density of a validation set.
    Validation {
        data: LabeledDataset,
        n_samples: usize,
        seed: u64,
    },
}

fn validation_log_predictive(
    model: &MlpModel,
    posterior: &LastLayerPosterior,
    data: &LabeledDataset,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let prepared = PreparedPosterior::new(posterior)?;
    let root = RngState::new(seed);
    let mut total = 0.0;
    for i in 0..data.len() {
        let h = model.last_layer_features(data.row(i))?;
        let pg = prepared.predictive(&h)?;
        match (&data.labels, posterior.likelihood) {
            (Labels::Real(ys), Likelihood::Gaussian { noise_var }) => {
                let var = pg.cov[(0, 0)] + noise_var;
                let r = ys[i] - pg.mean[0];
                total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r * r / var;
            }
            (Labels::Classes { values, .. }, Likelihood::Categorical) => {
                let mut rng = root.substream("validation", &[i as u64]);
                let logits = pg.sample(n_samples.max(1), &mut rng)?;
                let mut p = 0.0;
                for s in 0..logits.rows() {
                    p += softmax(logits.row(s))[values[i]];
                }
                total += (p / logits.rows() as f64).max(f64::MIN_POSITIVE).ln();
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "validation labels do not match the likelihood".into(),
                ))
            }
        }
    }
    Ok(total)
}

/// Grid search for the prior precision. Ties resolve to the smallest λ.
pub fn tune_prior_precision(
    model: &MlpModel,
    fit_data: &LabeledDataset,
    kind: CurvatureKind,
    grid: &[f64],
    likelihood: Likelihood,
    mode: &TuneMode,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("prior precision grid is empty".into()));
    }
    for &l in grid {
        check_prior(l)?;
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let (posterior, terms) = evidence_terms(model, fit_data, kind, likelihood)?;
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for &lam in &sorted {
        let score = match mode {
            TuneMode::MarginalLikelihood => terms.log_marginal_likelihood(lam)?,
            TuneMode::Validation {
                data,
                n_samples,
                seed,
            } => validation_log_predictive(
                model,
                &posterior.with_prior_precision(lam)?,
                data,
                *n_samples,
                *seed,
            )?,
        };
        if score > best.0 {
            best = (score, lam);
        }
    }
    Ok(best.1)
}
