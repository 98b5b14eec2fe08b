use serde::{Deserialize, Serialize};

use crate::attacks::hinge_score;
use crate::error::{Error, Result};
use crate::laplace::{Curvature, LastLayerPosterior};
use crate::nn::MlpModel;
use crate::numkit::{psd_clamp, psd_factor, sample_mvn, spd_inverse, Matrix, RngState};

/// Eigenvalues below this fraction of the largest are clamped to zero.
const PSD_CLAMP_TOL: f64 = 1e-12;

/// Gaussian over the outputs of the last layer at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl PredictiveGaussian {
    /// `n` output draws, one per row.
    pub fn sample(&self, n: usize, rng: &mut RngState) -> Result<Matrix> {
        let f = psd_factor(&self.cov)?;
        sample_mvn(&self.mean, &f, n, rng)
    }
}

/// How score samples are drawn from the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveMode {
    /// Sample last-layer weights, then evaluate the logits.
    WeightMc,
    /// Sample logits from the linearized predictive Gaussian.
    LinearizedLogit,
}

impl std::str::FromStr for PredictiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mc" | "weight_mc" => Ok(PredictiveMode::WeightMc),
            "lln" | "linearized" | "linearized_logit" => Ok(PredictiveMode::LinearizedLogit),
            other => Err(Error::Config(format!("unknown predictive mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Solved {
    Full { cov: Matrix, factor: Matrix },
    Diagonal { var: Vec<f64> },
    Kfac {
        a_inv: Matrix,
        b_inv: Matrix,
        a_factor: Matrix,
        b_factor: Matrix,
    },
}

/// A posterior with its covariance (or covariance factors) solved once, for
/// repeated per-query use.
#[derive(Debug, Clone)]
pub struct PreparedPosterior {
    posterior: LastLayerPosterior,
    solved: Solved,
}

impl PreparedPosterior {
    pub fn new(posterior: &LastLayerPosterior) -> Result<Self> {
        let lam = posterior.prior_precision;
        let solved = match &posterior.curvature {
            Curvature::Full(g) => {
                let mut p = g.clone();
                p.add_diag(lam);
                let cov = spd_inverse(&p)?;
                let factor = psd_factor(&cov)?;
                Solved::Full { cov, factor }
            }
            Curvature::Diagonal(g) => Solved::Diagonal {
                var: g
                    .iter()
                    .map(|&v| {
                        let p = v + lam;
                        if p > 0.0 {
                            Ok(1.0 / p)
                        } else {
                            Err(Error::NotPositiveDefinite { pivot: 0, value: p })
                        }
                    })
                    .collect::<Result<_>>()?,
            },
            Curvature::Kfac(f) => {
                let s = lam.sqrt();
                let mut a = f.a.clone();
                a.add_diag(s);
                let mut b = f.b.clone();
                b.add_diag(s);
                let a_inv = spd_inverse(&a)?;
                let b_inv = spd_inverse(&b)?;
                let a_factor = psd_factor(&a_inv)?;
                let b_factor = psd_factor(&b_inv)?;
                Solved::Kfac {
                    a_inv,
                    b_inv,
                    a_factor,
                    b_factor,
                }
            }
        };
        Ok(PreparedPosterior {
            posterior: posterior.clone(),
            solved,
        })
    }

    pub fn posterior(&self) -> &LastLayerPosterior {
        &self.posterior
    }

    fn check_features(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.posterior.feature_dim() {
            return Err(Error::Dimension(format!(
                "feature vector of length {} for a last layer with {} inputs",
                h.len(),
                self.posterior.feature_dim()
            )));
        }
        Ok(())
    }

    /// Linearized predictive `N(W_map·h, J·Σ·Jᵀ)` with `J = hᵀ ⊗ I`.
    pub fn predictive(&self, h: &[f64]) -> Result<PredictiveGaussian> {
        self.check_features(h)?;
        let o = self.posterior.n_outputs();
        let hd = h.len();
        let mean = self.posterior.w_map.matvec(h)?;
        let mut cov = Matrix::zeros(o, o);
        match &self.solved {
            Solved::Full { cov: sigma, .. } => {
                let d = o * hd;
                // rows a of (J·Σ): Σ_j h_j Σ[j·O + a, :]
                let mut js = Matrix::zeros(o, d);
                for (j, &hj) in h.iter().enumerate() {
                    if hj == 0.0 {
                        continue;
                    }
                    for a in 0..o {
                        let src = sigma.row(j * o + a);
                        for (t, s) in js.row_mut(a).iter_mut().zip(src) {
                            *t += hj * s;
                        }
                    }
                }
                for a in 0..o {
                    let row = js.row(a);
                    for b in 0..o {
                        cov[(a, b)] = h.iter().enumerate().map(|(j, hj)| hj * row[j * o + b]).sum();
                    }
                }
            }
            Solved::Diagonal { var } => {
                for a in 0..o {
                    cov[(a, a)] = h
                        .iter()
                        .enumerate()
                        .map(|(j, hj)| hj * hj * var[j * o + a])
                        .sum();
                }
            }
            Solved::Kfac { a_inv, b_inv, .. } => {
                let c = a_inv.quad_form(h);
                cov = b_inv.scale(c);
            }
        }
        let cov = psd_clamp(&cov, PSD_CLAMP_TOL)?;
        Ok(PredictiveGaussian { mean, cov })
    }

    /// `n` logit vectors computed from `n` last-layer weight draws.
    pub fn sample_weight_logits(&self, h: &[f64], n: usize, rng: &mut RngState) -> Result<Matrix> {
        self.check_features(h)?;
        let o = self.posterior.n_outputs();
        let hd = h.len();
        let d = o * hd;
        let f_map = self.posterior.w_map.matvec(h)?;
        let mut out = Matrix::zeros(n, o);
        match &self.solved {
            Solved::Full { factor, .. } => {
                // logits of w = w_map + F·z are f_map + (J·F)·z
                let mut jf = Matrix::zeros(o, d);
                for (j, &hj) in h.iter().enumerate() {
                    for a in 0..o {
                        let src = factor.row(j * o + a);
                        for (t, s) in jf.row_mut(a).iter_mut().zip(src) {
                            *t += hj * s;
                        }
                    }
                }
                let mut z = vec![0.0; d];
                for s in 0..n {
                    rng.fill_standard_normal(&mut z);
                    let row = out.row_mut(s);
                    for a in 0..o {
                        row[a] = f_map[a] + jf.row(a).iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            Solved::Diagonal { var } => {
                let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
                let mut z = vec![0.0; d];
                for s in 0..n {
                    rng.fill_standard_normal(&mut z);
                    let row = out.row_mut(s);
                    row.copy_from_slice(&f_map);
                    for (j, &hj) in h.iter().enumerate() {
                        for a in 0..o {
                            let p = j * o + a;
                            row[a] += hj * sd[p] * z[p];
                        }
                    }
                }
            }
            Solved::Kfac {
                a_factor, b_factor, ..
            } => {
                // W = W_map + F_B·Z·F_Aᵀ, so W·h = f_map + F_B·Z·(F_Aᵀ·h)
                let g = a_factor.transpose().matvec(h)?;
                let mut z = Matrix::zeros(o, hd);
                for s in 0..n {
                    rng.fill_standard_normal(z.as_mut_slice());
                    let zg = z.matvec(&g)?;
                    let delta = b_factor.matvec(&zg)?;
                    let row = out.row_mut(s);
                    for a in 0..o {
                        row[a] = f_map[a] + delta[a];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `n` hinge scores of `(x, y)` under posterior draws.
    pub fn sample_scores(
        &self,
        model: &MlpModel,
        x: &[f64],
        y: usize,
        n: usize,
        mode: PredictiveMode,
        rng: &mut RngState,
    ) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 score samples".into()));
        }
        let h = model.last_layer_features(x)?;
        let logits = match mode {
            PredictiveMode::WeightMc => self.sample_weight_logits(&h, n, rng)?,
            PredictiveMode::LinearizedLogit => self.predictive(&h)?.sample(n, rng)?,
        };
        (0..n).map(|s| hinge_score(logits.row(s), y)).collect()
    }
}

/// One-off predictive for a single feature vector.
pub fn predictive_gaussian(posterior: &LastLayerPosterior, h: &[f64]) -> Result<PredictiveGaussian> {
    PreparedPosterior::new(posterior)?.predictive(h)
}

/// One-off score sampling; prefer [`PreparedPosterior::sample_scores`] in loops.
pub fn sample_scores(
    posterior: &LastLayerPosterior,
    model: &MlpModel,
    x: &[f64],
    y: usize,
    n: usize,
    mode: PredictiveMode,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    PreparedPosterior::new(posterior)?.sample_scores(model, x, y, n, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{Curvature, Likelihood};

    fn posterior(curv: Curvature, o: usize, hd: usize, lam: f64) -> LastLayerPosterior {
        let mut rng = RngState::new(1);
        let mut w = Matrix::zeros(o, hd);
        rng.fill_standard_normal(w.as_mut_slice());
        LastLayerPosterior {
            w_map: w,
            curvature: curv,
            prior_precision: lam,
            n_data: 0,
            likelihood: Likelihood::Categorical,
        }
    }

    #[test]
    fn isotropic_prior_gives_scaled_identity() {
        let (o, hd, lam) = (3, 4, 2.5);
        let h = [0.5, -1.0, 2.0, 1.0];
        let h2: f64 = h.iter().map(|x| x * x).sum();
        for curv in [
            Curvature::Full(Matrix::zeros(o * hd, o * hd)),
            Curvature::Diagonal(vec![0.0; o * hd]),
        ] {
            let pg = predictive_gaussian(&posterior(curv, o, hd, lam), &h).unwrap();
            let expect = Matrix::identity(o).scale(h2 / lam);
            assert!(pg.cov.sub(&expect).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn bias_only_features_select_bias_block() {
        let (o, hd) = (2, 3);
        let mut rng = RngState::new(3);
        let mut m = Matrix::zeros(o * hd, o * hd);
        rng.fill_standard_normal(m.as_mut_slice());
        let mut g = m.matmul_t(&m).unwrap();
        g.add_diag(0.1);
        let p = posterior(Curvature::Full(g.clone()), o, hd, 1.0);
        let pg = predictive_gaussian(&p, &[0.0, 0.0, 1.0]).unwrap();
        let mut prec = g;
        prec.add_diag(1.0);
        let sigma = spd_inverse(&prec).unwrap();
        for a in 0..o {
            for b in 0..o {
                let want = sigma[(2 * o + a, 2 * o + b)];
                assert!((pg.cov[(a, b)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_feature_length_is_rejected() {
        let p = posterior(Curvature::Diagonal(vec![0.0; 6]), 2, 3, 1.0);
        assert!(predictive_gaussian(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("lln".parse::<PredictiveMode>().unwrap(), PredictiveMode::LinearizedLogit);
        assert_eq!("weight-mc".parse::<PredictiveMode>().unwrap(), PredictiveMode::WeightMc);
    }
}
