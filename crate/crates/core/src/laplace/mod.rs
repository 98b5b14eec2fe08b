//! Last-layer Laplace approximation.
//!
//! The last layer maps augmented features `h` (length `H + 1`) to outputs
//! `f = W·h`, with `W` of shape `O × (H + 1)`. Its parameters are flattened
//! column-major, `p = j·O + o` for `W[o][j]`, so that the Jacobian of the
//! outputs is `J = hᵀ ⊗ I_O` and one example contributes `(h·hᵀ) ⊗ Λ` to the
//! generalized Gauss–Newton matrix, `Λ` being the Hessian of the negative
//! log-likelihood with respect to the outputs.
//!
//! Because `f` is linear in `W`, this GGN is the exact Hessian of the data
//! term, and the linearized predictive is exact as well.

mod checkpoint;
mod evidence;
mod predictive;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::nn::{softmax, MlpModel};
use crate::numkit::{gemm, GemmOperand, Matrix};

pub use checkpoint::{
    load_posterior, posterior_from_text, posterior_to_text, save_posterior, POSTERIOR_FORMAT_VERSION,
};
pub use evidence::{
    default_prior_grid, log_marginal_likelihood, tune_prior_precision, EvidenceTerms, TuneMode,
};
pub use predictive::{
    predictive_gaussian, sample_scores, PredictiveGaussian, PredictiveMode, PreparedPosterior,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    FullGgn,
    Diagonal,
    Kfac,
}

impl std::str::FromStr for CurvatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "full_ggn" | "fullggn" => Ok(CurvatureKind::FullGgn),
            "diag" | "diagonal" => Ok(CurvatureKind::Diagonal),
            "kfac" => Ok(CurvatureKind::Kfac),
            other => Err(Error::Config(format!("unknown curvature kind {other:?}"))),
        }
    }
}

/// Observation model whose output-Hessian builds the curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Softmax over logits.
    Categorical,
    /// Independent Gaussian noise on every output.
    Gaussian { noise_var: f64 },
}

/// Kronecker factors: `A = Σ h·hᵀ`, `B = mean Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfacFactors {
    pub a: Matrix,
    pub b: Matrix,
}

/// Data curvature without the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Full(Matrix),
    Diagonal(Vec<f64>),
    Kfac(KfacFactors),
}

impl Curvature {
    pub fn kind(&self) -> CurvatureKind {
        match self {
            Curvature::Full(_) => CurvatureKind::FullGgn,
            Curvature::Diagonal(_) => CurvatureKind::Diagonal,
            Curvature::Kfac(_) => CurvatureKind::Kfac,
        }
    }
}

/// Gaussian posterior `N(w_map, P⁻¹)` over the augmented last layer, with
/// `P = curvature + prior` (full/diagonal: `+ λI`; KFAC: `+ √λ` on each factor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastLayerPosterior {
    pub w_map: Matrix,
    pub curvature: Curvature,
    pub prior_precision: f64,
    pub n_data: usize,
    pub likelihood: Likelihood,
}

impl LastLayerPosterior {
    pub fn kind(&self) -> CurvatureKind {
        self.curvature.kind()
    }

    pub fn n_outputs(&self) -> usize {
        self.w_map.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_map.cols()
    }

    /// Number of last-layer parameters `O·(H + 1)`.
    pub fn n_params(&self) -> usize {
        self.w_map.rows() * self.w_map.cols()
    }

    /// MAP weights flattened as `p = j·O + o`.
    pub fn w_map_vec(&self) -> Vec<f64> {
        flatten_last_layer(&self.w_map)
    }

    pub fn with_prior_precision(&self, prior_precision: f64) -> Result<Self> {
        check_prior(prior_precision)?;
        let mut p = self.clone();
        p.prior_precision = prior_precision;
        Ok(p)
    }

    /// Full precision matrix including the prior, `d × d`.
    pub fn precision_matrix(&self) -> Matrix {
        let d = self.n_params();
        let lam = self.prior_precision;
        match &self.curvature {
            Curvature::Full(g) => {
                let mut p = g.clone();
                p.add_diag(lam);
                p
            }
            Curvature::Diagonal(g) => {
                Matrix::from_diag(&g.iter().map(|v| v + lam).collect::<Vec<_>>())
            }
            Curvature::Kfac(f) => {
                let s = lam.sqrt();
                let mut a = f.a.clone();
                a.add_diag(s);
                let mut b = f.b.clone();
                b.add_diag(s);
                let p = a.kron(&b);
                debug_assert_eq!(p.rows(), d);
                p
            }
        }
    }
}

pub(crate) fn flatten_last_layer(w: &Matrix) -> Vec<f64> {
    let (o, h) = w.shape();
    let mut v = vec![0.0; o * h];
    for j in 0..h {
        for k in 0..o {
            v[j * o + k] = w[(k, j)];
        }
    }
    v
}

#[cfg(test)]
pub(crate) fn unflatten_last_layer(v: &[f64], outputs: usize) -> Matrix {
    let h = v.len() / outputs;
    let mut w = Matrix::zeros(outputs, h);
    for j in 0..h {
        for k in 0..outputs {
            w[(k, j)] = v[j * outputs + k];
        }
    }
    w
}

fn check_prior(lam: f64) -> Result<()> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prior precision must be positive and finite, got {lam}"
        )));
    }
    Ok(())
}

/// `diag(p) − p·pᵀ`, the Hessian of `−log softmax(f)_y` with respect to `f`.
pub fn logit_hessian(p: &[f64]) -> Result<Matrix> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 || p.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "logit Hessian needs a probability vector (sum {s})"
        )));
    }
    let k = p.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = -p[i] * p[j];
        }
        m[(i, i)] += p[i];
    }
    Ok(m)
}

/// Output-space Hessian of the negative log-likelihood at outputs `f`.
pub(crate) fn output_hessian(likelihood: Likelihood, f: &[f64]) -> Result<Matrix> {
    match likelihood {
        Likelihood::Categorical => logit_hessian(&softmax(f)),
        Likelihood::Gaussian { noise_var } => {
            Ok(Matrix::identity(f.len()).scale(1.0 / noise_var))
        }
    }
}

/// Sum over the data of the negative log-likelihood at the MAP last layer.
pub(crate) fn data_nll(
    likelihood: Likelihood,
    outputs: &Matrix,
    labels: &Labels,
) -> Result<f64> {
    let mut total = 0.0;
    match (likelihood, labels) {
        (Likelihood::Categorical, Labels::Classes { values, .. }) => {
            for (i, &y) in values.iter().enumerate() {
                let z = outputs.row(i);
                if y >= z.len() {
                    return Err(Error::LabelOutOfRange {
                        label: y,
                        classes: z.len(),
                    });
                }
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - z[y];
            }
        }
        (Likelihood::Gaussian { noise_var }, Labels::Real(ys)) => {
            let norm = 0.5 * (2.0 * std::f64::consts::PI * noise_var).ln();
            for (i, &y) in ys.iter().enumerate() {
                let r = outputs[(i, 0)] - y;
                total += 0.5 * r * r / noise_var + norm;
            }
        }
        _ => {
            return Err(Error::InvalidArgument(
                "likelihood does not match the dataset labels".into(),
            ))
        }
    }
    Ok(total)
}

/// Data curvature of the last layer from augmented features (`N × (H+1)`)
/// and MAP weights.
pub fn last_layer_curvature(
    features: &Matrix,
    w_map: &Matrix,
    likelihood: Likelihood,
    kind: CurvatureKind,
) -> Result<Curvature> {
    let n = features.rows();
    let hd = features.cols();
    let o = w_map.rows();
    if w_map.cols() != hd {
        return Err(Error::Dimension(format!(
            "features have {hd} columns but the last layer expects {}",
            w_map.cols()
        )));
    }
    let d = o * hd;
    let hessians = (0..n)
        .map(|i| {
            let f = w_map.matvec(features.row(i))?;
            output_hessian(likelihood, &f)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(match kind {
        CurvatureKind::FullGgn => {
            let mut g = Matrix::zeros(d, d);
            for (i, lam) in hessians.iter().enumerate() {
                let h = features.row(i);
                for j1 in 0..hd {
                    if h[j1] == 0.0 {
                        continue;
                    }
                    for j2 in 0..=j1 {
                        let hh = h[j1] * h[j2];
                        if hh == 0.0 {
                            continue;
                        }
                        for a in 0..o {
                            let row = g.row_mut(j1 * o + a);
                            let lrow = lam.row(a);
                            for b in 0..o {
                                row[j2 * o + b] += hh * lrow[b];
                            }
                        }
                    }
                }
            }
            // mirror the lower block triangle
            for j1 in 0..hd {
                for j2 in 0..j1 {
                    for a in 0..o {
                        for b in 0..o {
                            g[(j2 * o + b, j1 * o + a)] = g[(j1 * o + a, j2 * o + b)];
                        }
                    }
                }
            }
            Curvature::Full(g)
        }
        CurvatureKind::Diagonal => {
            let mut g = vec![0.0; d];
            for (i, lam) in hessians.iter().enumerate() {
                let h = features.row(i);
                for j in 0..hd {
                    let h2 = h[j] * h[j];
                    for a in 0..o {
                        g[j * o + a] += h2 * lam[(a, a)];
                    }
                }
            }
            Curvature::Diagonal(g)
        }
        CurvatureKind::Kfac => {
            let mut a = Matrix::zeros(hd, hd);
            gemm(
                1.0,
                GemmOperand::transposed(features),
                GemmOperand::plain(features),
                0.0,
                &mut a,
            );
            let a = a.symmetrized();
            let mut b = Matrix::zeros(o, o);
            for lam in &hessians {
                for (x, y) in b.as_mut_slice().iter_mut().zip(lam.as_slice()) {
                    *x += y;
                }
            }
            let b = if n > 0 { b.scale(1.0 / n as f64) } else { b };
            Curvature::Kfac(KfacFactors { a, b })
        }
    })
}

/// Fits the last-layer posterior of `model` on its own training data.
pub fn fit_last_layer_posterior(
    model: &MlpModel,
    fit_data: &LabeledDataset,
    kind: CurvatureKind,
    prior_precision: f64,
    likelihood: Likelihood,
) -> Result<LastLayerPosterior> {
    if fit_data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a posterior on an empty dataset".into(),
        ));
    }
    check_prior(prior_precision)?;
    let features = model.last_layer_features_batch(&fit_data.features)?;
    let w_map = model.last_layer_augmented();
    let curvature = last_layer_curvature(&features, &w_map, likelihood, kind)?;
    Ok(LastLayerPosterior {
        w_map,
        curvature,
        prior_precision,
        n_data: fit_data.len(),
        likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{weight_init, Activation, MlpArchitecture, Task};
    use crate::numkit::RngState;

    #[test]
    fn logit_hessian_examples() {
        let z = logit_hessian(&[1.0, 0.0]).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let h = logit_hessian(&[0.5, 0.5]).unwrap();
        assert_eq!(h.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
        assert!(logit_hessian(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn logit_hessian_rows_sum_to_zero() {
        let mut rng = RngState::new(2);
        for _ in 0..50 {
            let z: Vec<f64> = (0..6).map(|_| rng.normal(0.0, 3.0)).collect();
            let h = logit_hessian(&softmax(&z)).unwrap();
            for i in 0..6 {
                assert!(h.row(i).iter().sum::<f64>().abs() < 1e-12);
            }
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn logit_hessian_matches_finite_differences() {
        let mut rng = RngState::new(8);
        let nll = |f: &[f64], y: usize| {
            let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - f[y]
        };
        for _ in 0..10 {
            let f: Vec<f64> = (0..4).map(|_| rng.normal(0.0, 1.5)).collect();
            let h = logit_hessian(&softmax(&f)).unwrap();
            let e = 1e-4;
            for i in 0..4 {
                for j in 0..4 {
                    let at = |di: f64, dj: f64| {
                        let mut g = f.clone();
                        g[i] += di;
                        g[j] += dj;
                        nll(&g, 1)
                    };
                    let fd = (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e);
                    assert!((fd - h[(i, j)]).abs() < 1e-5, "({i},{j}) fd {fd} vs {}", h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn flattening_round_trips() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let v = flatten_last_layer(&w);
        assert_eq!(v, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unflatten_last_layer(&v, 2), w);
    }

    #[test]
    fn diagonal_is_diag_of_full() {
        let arch = MlpArchitecture::new(vec![3, 4, 3], Activation::Tanh, Task::Classification)
            .unwrap();
        let model = weight_init(&arch, 1).unwrap();
        let mut rng = RngState::new(5);
        let mut x = Matrix::zeros(6, 3);
        rng.fill_standard_normal(x.as_mut_slice());
        let feats = model.last_layer_features_batch(&x).unwrap();
        let w = model.last_layer_augmented();
        let Curvature::Full(g) =
            last_layer_curvature(&feats, &w, Likelihood::Categorical, CurvatureKind::FullGgn)
                .unwrap()
        else {
            unreachable!()
        };
        let Curvature::Diagonal(dg) =
            last_layer_curvature(&feats, &w, Likelihood::Categorical, CurvatureKind::Diagonal)
                .unwrap()
        else {
            unreachable!()
        };
        for (a, b) in g.diag().iter().zip(&dg) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn empty_fit_data_is_an_error() {
        let arch = MlpArchitecture::new(vec![2, 3], Activation::Relu, Task::Classification)
            .unwrap();
        let m = weight_init(&arch, 0).unwrap();
        let d = LabeledDataset::new(
            Matrix::zeros(0, 2),
            Labels::Classes {
                values: vec![],
                n_classes: 3,
            },
        )
        .unwrap();
        assert!(fit_last_layer_posterior(&m, &d, CurvatureKind::Kfac, 1.0, Likelihood::Categorical)
            .is_err());
    }

    #[test]
    fn curvature_kind_parses() {
        assert_eq!("kfac".parse::<CurvatureKind>().unwrap(), CurvatureKind::Kfac);
        assert_eq!("full-ggn".parse::<CurvatureKind>().unwrap(), CurvatureKind::FullGgn);
        assert_eq!("diag".parse::<CurvatureKind>().unwrap(), CurvatureKind::Diagonal);
        assert!("nope".parse::<CurvatureKind>().is_err());
    }
}
