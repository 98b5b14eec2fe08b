use bmia_core::numkit::{
    cholesky, psd_clamp, sample_mvn, std_normal_cdf, std_normal_quantile, student_t_cdf, Matrix,
    RngState,
};
use proptest::prelude::*;

fn spd_from(entries: &[f64], n: usize) -> Matrix {
    let m = Matrix::from_vec(n, n, entries[..n * n].to_vec()).unwrap();
    let mut a = m.t_matmul(&m).unwrap();
    a.add_diag(1.0);
    a
}

proptest! {
    #[test]
    fn normal_quantile_inverts_cdf(x in -6.0f64..6.0) {
        let back = std_normal_quantile(std_normal_cdf(x)).unwrap();
        prop_assert!((back - x).abs() < 1e-8, "x {} back {}", x, back);
    }

    #[test]
    fn cholesky_round_trip(n in 1usize..9, entries in prop::collection::vec(-2.0f64..2.0, 64)) {
        let a = spd_from(&entries, n);
        let l = cholesky(&a).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
        let back = l.matmul_t(&l).unwrap();
        let rel = back.sub(&a).unwrap().max_abs() / a.max_abs();
        prop_assert!(rel < 1e-9, "relative error {}", rel);
    }

    #[test]
    fn psd_clamp_leaves_no_negative_eigenvalue(n in 1usize..7, entries in prop::collection::vec(-2.0f64..2.0, 49)) {
        let m = Matrix::from_vec(n, n, entries[..n * n].to_vec()).unwrap().symmetrized();
        let c = psd_clamp(&m, 1e-12).unwrap();
        let (vals, _) = bmia_core::numkit::symmetric_eigen(&c).unwrap();
        prop_assert!(vals.iter().all(|&v| v >= -1e-10 * m.max_abs().max(1.0)));
    }

    #[test]
    fn rng_streams_replay(seed in any::<u64>(), label in "[a-z]{1,8}", idx in any::<u64>()) {
        let mut a = RngState::new(seed).substream(&label, &[idx]);
        let mut b = RngState::new(seed).substream(&label, &[idx]);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        prop_assert_eq!(a.normal(0.0, 1.0).to_bits(), b.normal(0.0, 1.0).to_bits());
    }
}

#[test]
fn student_t_cdf_is_monotone_on_a_fine_grid() {
    for dof in [1, 2, 3, 5, 10, 30, 100, 1023] {
        let mut prev = 0.0;
        for k in 0..=20_000 {
            let t = -10.0 + k as f64 * 1e-3;
            let c = student_t_cdf(t, dof).unwrap();
            assert!(c >= prev, "dof {dof}: cdf({t}) = {c} < {prev}");
            assert!((0.0..=1.0).contains(&c));
            prev = c;
        }
    }
}

#[test]
fn mvn_samples_match_the_covariance() {
    let mut rng = RngState::new(8);
    let entries: Vec<f64> = (0..9).map(|_| rng.normal(0.0, 0.7)).collect();
    let cov = spd_from(&entries, 3);
    let l = cholesky(&cov).unwrap();
    let mean = [1.0, -2.0, 0.5];
    let n = 200_000;
    let s = sample_mvn(&mean, &l, n, &mut rng).unwrap();
    for i in 0..3 {
        let m: f64 = (0..n).map(|r| s[(r, i)]).sum::<f64>() / n as f64;
        assert!((m - mean[i]).abs() < 5.0 * (cov[(i, i)] / n as f64).sqrt());
        for j in 0..3 {
            let c: f64 = (0..n)
                .map(|r| (s[(r, i)] - mean[i]) * (s[(r, j)] - mean[j]))
                .sum::<f64>()
                / n as f64;
            assert!((c - cov[(i, j)]).abs() < 0.03 * cov.max_abs(), "cov[{i},{j}] {c} vs {}", cov[(i, j)]);
        }
    }
}
