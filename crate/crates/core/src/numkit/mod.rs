//! Dense matrices, seeded random streams, factorizations and the
//! distribution functions the rest of the crate is built on.

mod linalg;
mod matrix;
mod rng;
mod special;

pub use linalg::{
    cholesky, psd_clamp, psd_factor, sample_mvn, solve_lower, solve_upper_t, spd_inverse, spd_log_det,
    symmetric_eigen,
};
pub(crate) use matrix::{gemm, GemmOperand};
pub use matrix::{dot, Matrix};
pub use rng::{derive_seed, RngState};
pub use special::{
    regularized_incomplete_beta, std_normal_cdf, std_normal_pdf, std_normal_quantile,
    std_normal_sf, student_t_cdf, student_t_sf,
};

/// Sample mean and sample standard deviation (n − 1 denominator).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
