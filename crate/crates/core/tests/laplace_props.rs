use bmia_core::data::{LabeledDataset, Labels};
use bmia_core::laplace::{
    fit_last_layer_posterior, last_layer_curvature, Curvature, CurvatureKind, Likelihood,
    PreparedPosterior,
};
use bmia_core::nn::{weight_init, Activation, MlpArchitecture, MlpModel, Task};
use bmia_core::numkit::{symmetric_eigen, Matrix, RngState};
use proptest::prelude::*;

fn setup(seed: u64) -> (MlpModel, LabeledDataset) {
    let mut rng = RngState::new(seed);
    let d = 2 + rng.below(3);
    let h = 3 + rng.below(5);
    let o = 2 + rng.below(4);
    let arch = MlpArchitecture::new(vec![d, h, o], Activation::Tanh, Task::Classification).unwrap();
    let model = weight_init(&arch, rng.next_u64()).unwrap();
    let n = 40;
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
    let y = (0..n).map(|_| rng.below(o)).collect();
    let data = LabeledDataset::new(x, Labels::Classes { values: y, n_classes: o }).unwrap();
    (model, data)
}

#[test]
fn predictive_covariance_is_symmetric_psd() {
    let kinds = [CurvatureKind::FullGgn, CurvatureKind::Diagonal, CurvatureKind::Kfac];
    let mut rng = RngState::new(17);
    let mut checked = 0;
    for (k, &kind) in kinds.iter().enumerate() {
        let (model, data) = setup(100 + k as u64);
        let post = fit_last_layer_posterior(&model, &data, kind, 0.3, Likelihood::Categorical).unwrap();
        let prep = PreparedPosterior::new(&post).unwrap();
        for _ in 0..334 {
            let x: Vec<f64> = (0..data.dims()).map(|_| rng.normal(0.0, 3.0)).collect();
            let h = model.last_layer_features(&x).unwrap();
            let cov = prep.predictive(&h).unwrap().cov;
            for i in 0..cov.rows() {
                for j in 0..cov.cols() {
                    assert_eq!(cov[(i, j)], cov[(j, i)]);
                }
            }
            let (vals, _) = symmetric_eigen(&cov).unwrap();
            assert!(vals[0] >= -1e-12 * cov.max_abs().max(1e-300), "{kind:?}: {vals:?}");
            checked += 1;
        }
    }
    assert!(checked >= 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn larger_prior_never_widens_the_predictive(seed in any::<u64>(), lam in 0.01f64..10.0, factor in 1.0f64..100.0) {
        let (model, data) = setup(seed);
        let post = fit_last_layer_posterior(&model, &data, CurvatureKind::FullGgn, lam, Likelihood::Categorical).unwrap();
        let tighter = post.with_prior_precision(lam * factor).unwrap();
        let a = PreparedPosterior::new(&post).unwrap();
        let b = PreparedPosterior::new(&tighter).unwrap();
        let mut rng = RngState::new(seed ^ 1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..data.dims()).map(|_| rng.normal(0.0, 2.0)).collect();
            let h = model.last_layer_features(&x).unwrap();
            let ca = a.predictive(&h).unwrap().cov;
            let cb = b.predictive(&h).unwrap().cov;
            for i in 0..ca.rows() {
                prop_assert!(cb[(i, i)] <= ca[(i, i)] * (1.0 + 1e-10) + 1e-15, "{} > {}", cb[(i, i)], ca[(i, i)]);
            }
        }
    }

    #[test]
    fn kfac_is_exact_for_one_example(seed in any::<u64>(), gaussian in any::<bool>()) {
        let mut rng = RngState::new(seed);
        let o = 1 + rng.below(6);
        let hd = 1 + rng.below(9);
        let w = Matrix::from_vec(o, hd, (0..o * hd).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let h = Matrix::from_vec(1, hd, (0..hd).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let lik = if gaussian || o == 1 { Likelihood::Gaussian { noise_var: 0.3 } } else { Likelihood::Categorical };
        let Curvature::Full(full) = last_layer_curvature(&h, &w, lik, CurvatureKind::FullGgn).unwrap() else { unreachable!() };
        let Curvature::Kfac(f) = last_layer_curvature(&h, &w, lik, CurvatureKind::Kfac).unwrap() else { unreachable!() };
        let diff = full.sub(&f.a.kron(&f.b)).unwrap().max_abs();
        prop_assert!(diff <= 1e-12 * full.max_abs().max(1.0));
    }

    #[test]
    fn diagonal_curvature_is_the_full_diagonal(seed in any::<u64>()) {
        let (model, data) = setup(seed);
        let feats = model.last_layer_features_batch(&data.features).unwrap();
        let w = model.last_layer_augmented();
        let Curvature::Full(full) = last_layer_curvature(&feats, &w, Likelihood::Categorical, CurvatureKind::FullGgn).unwrap() else { unreachable!() };
        let Curvature::Diagonal(d) = last_layer_curvature(&feats, &w, Likelihood::Categorical, CurvatureKind::Diagonal).unwrap() else { unreachable!() };
        for (i, v) in d.iter().enumerate() {
            prop_assert!((v - full[(i, i)]).abs() <= 1e-10 * full.max_abs().max(1.0));
        }
    }
}
