use crate::error::{Error, Result};
use crate::numkit::matrix::Matrix;
use crate::numkit::rng::RngState;

/// Lower-triangular `L` with `L·Lᵀ = m`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "cholesky of non-square {:?} matrix",
            m.shape()
        )));
    }
    let n = m.rows();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidArgument(format!(
                    "cholesky input not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let pivot = m[(j, j)] - lj.iter().map(|x| x * x).sum::<f64>();
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let s: f64 = l.row(i)[..j].iter().zip(&lj).map(|(a, b)| a * b).sum();
            l[(i, j)] = (m[(i, j)] - s) / d;
        }
    }
    Ok(l)
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let s: f64 = l.row(i)[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
        x[i] = (x[i] - s) / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ·x = b` for lower-triangular `L`.
pub fn solve_upper_t(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = 0.0;
        for k in (i + 1)..n {
            s += l[(k, i)] * x[k];
        }
        x[i] = (x[i] - s) / l[(i, i)];
    }
    x
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    let n = m.rows();
    // L⁻¹ column by column, then (L⁻¹)ᵀ L⁻¹
    let mut linv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = solve_lower(&l, &e);
        for i in 0..n {
            linv[(i, j)] = col[i];
        }
    }
    Ok(linv.t_matmul(&linv)?.symmetrized())
}

/// `ln det m` for SPD `m`.
pub fn spd_log_det(m: &Matrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>())
}

/// Eigen-decomposition of a symmetric matrix: ascending eigenvalues and
/// eigenvectors as the columns of the returned matrix.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() {
        return Err(Error::Dimension("eigen-decomposition of non-square matrix".into()));
    }
    let n = m.rows();
    let dm = nalgebra::DMatrix::from_row_slice(n, n, m.as_slice());
    let eig = nalgebra::SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, c)] = eig.eigenvectors[(r, k)];
        }
    }
    Ok((values, vectors))
}

/// Symmetrizes `m` and clamps eigenvalues below `rel_tol · λ_max` to zero.
pub fn psd_clamp(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let s = m.symmetrized();
    let (vals, vecs) = symmetric_eigen(&s)?;
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vals.iter().all(|&v| v >= rel_tol * top) {
        return Ok(s);
    }
    let n = s.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        if v < rel_tol * top || v <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = vecs[(i, k)] * v;
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    Ok(out.symmetrized())
}

/// Factor `F` with `F·Fᵀ = m` for a symmetric PSD `m`: the Cholesky factor
/// when it exists, otherwise `V·√D` from the eigen-decomposition.
pub fn psd_factor(m: &Matrix) -> Result<Matrix> {
    if let Ok(l) = cholesky(m) {
        return Ok(l);
    }
    let (vals, vecs) = symmetric_eigen(m)?;
    let n = m.rows();
    let mut f = Matrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..n {
            f[(i, k)] = vecs[(i, k)] * s;
        }
    }
    Ok(f)
}

/// `n` draws from `N(mean, L·Lᵀ)`, one per row. `chol_cov` is normally the
/// lower Cholesky factor, but any square factor of the covariance works.
pub fn sample_mvn(mean: &[f64], chol_cov: &Matrix, n: usize, rng: &mut RngState) -> Result<Matrix> {
    let d = mean.len();
    if chol_cov.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "mean has length {d} but Cholesky factor is {:?}",
            chol_cov.shape()
        )));
    }
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for r in 0..n {
        rng.fill_standard_normal(&mut z);
        let row = out.row_mut(r);
        for i in 0..d {
            let li = chol_cov.row(i);
            row[i] = mean[i] + li.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}
