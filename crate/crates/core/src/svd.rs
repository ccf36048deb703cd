//! Singular values by one-sided Jacobi rotations and a symmetric Jacobi
//! eigensolver. Both are plain cyclic sweeps; the matrices handled here are
//! small (encoder Jacobians, patch covariances), so simplicity and accuracy
//! win over asymptotics.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Relative off-diagonal tolerance for both solvers.
pub const JACOBI_TOL: f64 = 1e-12;
/// Sweep cap; cyclic Jacobi on the sizes used here converges in well under
/// this.
pub const JACOBI_MAX_SWEEPS: usize = 60;

/// Singular values of `m`, descending. Length is `min(rows, cols)`.
pub fn svd_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::Dimension(format!(
            "svd_values: empty matrix {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.all_finite() {
        return Err(Error::NonFinite("svd_values: matrix has non-finite entries".into()));
    }

    // One-sided Jacobi orthogonalizes columns; run on whichever orientation
    // has no more columns than rows.
    let work = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (rows, cols) = (work.rows(), work.cols());
    let mut col: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..rows).map(|r| work.get(r, c)).collect())
        .collect();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    alpha += col[p][r] * col[p][r];
                    beta += col[q][r] * col[q][r];
                    gamma += col[p][r] * col[q][r];
                }
                if libm::fabs(gamma) <= JACOBI_TOL * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = {
                    let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for r in 0..rows {
                    let vp = col[p][r];
                    let vq = col[q][r];
                    col[p][r] = c * vp - s * vq;
                    col[q][r] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut values: Vec<f64> = col
        .iter()
        .map(|v| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()))
        .collect();
    values.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(values)
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues descending with the
/// matching eigenvectors as columns. The input is symmetrized as
/// `(A + Aᵀ)/2` first, so covariance matrices accumulated in floating point
/// are accepted as-is.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.is_empty() {
        return Err(Error::Dimension("symmetric_eigen: empty matrix".into()));
    }
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!(
            "symmetric_eigen: matrix is {}x{}, need square",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("symmetric_eigen: non-finite entries".into()));
    }

    let n = a.rows();
    let mut m = Matrix::from_fn(n, n, |r, c| 0.5 * (a.get(r, c) + a.get(c, r)));
    let mut v = Matrix::identity(n);
    let scale = libm::sqrt(m.frobenius_sq()).max(f64::MIN_POSITIVE);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if libm::sqrt(2.0 * off) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if libm::fabs(apq) <= JACOBI_TOL * scale * 1e-3 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(-1.0, 1.0))
    }

    /// Test-local eigenvalue oracle for symmetric PSD matrices: orthogonal
    /// iteration (repeated multiply + Gram-Schmidt), independent of the Jacobi
    /// code paths above.
    fn orthogonal_iteration_eigenvalues(b: &Matrix) -> Vec<f64> {
        let n = b.rows();
        let mut q = Matrix::identity(n);
        let mut last = vec![f64::MAX; n];
        for _ in 0..20_000 {
            let z = b.matmul(&q).unwrap();
            // Gram-Schmidt on columns of z.
            let mut cols: Vec<Vec<f64>> = (0..n)
                .map(|c| (0..n).map(|r| z.get(r, c)).collect())
                .collect();
            for c in 0..n {
                for prev in 0..c {
                    let proj: f64 = (0..n).map(|r| cols[c][r] * cols[prev][r]).sum();
                    for r in 0..n {
                        cols[c][r] -= proj * cols[prev][r];
                    }
                }
                let nrm = (cols[c].iter().map(|x| x * x).sum::<f64>()).sqrt();
                for r in 0..n {
                    cols[c][r] /= nrm;
                }
            }
            q = Matrix::from_fn(n, n, |r, c| cols[c][r]);
            let bq = b.matmul(&q).unwrap();
            let diag: Vec<f64> = (0..n)
                .map(|c| (0..n).map(|r| q.get(r, c) * bq.get(r, c)).sum())
                .collect();
            let moved = diag
                .iter()
                .zip(&last)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            last = diag;
            if moved < 1e-14 {
                break;
            }
        }
        last
    }

    #[test]
    fn identity_singular_values() {
        let vals = svd_values(&Matrix::identity(3)).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_singular_values() {
        let m = Matrix::from_fn(3, 3, |r, c| if r == c { (3 - r) as f64 } else { 0.0 });
        let vals = svd_values(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 2.0).abs() < 1e-14);
        assert!((vals[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(svd_values(&Matrix::zeros(0, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn random_6x4_matches_gram_eigenvalue_oracle() {
        let mut rng = Rng::from_seed(61);
        let m = random_matrix(6, 4, &mut rng);
        let gram = m.transpose().matmul(&m).unwrap();
        let mut eig = orthogonal_iteration_eigenvalues(&gram);
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let vals = svd_values(&m).unwrap();
        assert_eq!(vals.len(), 4);
        for (s, l) in vals.iter().zip(&eig) {
            assert!((s - l.max(0.0).sqrt()).abs() < 1e-9, "{s} vs sqrt({l})");
        }
    }

    #[test]
    fn transpose_invariance() {
        let mut rng = Rng::from_seed(7);
        for _ in 0..20 {
            let r = rng.range_inclusive(1, 8);
            let c = rng.range_inclusive(1, 8);
            let m = random_matrix(r, c, &mut rng);
            let a = svd_values(&m).unwrap();
            let b = svd_values(&m.transpose()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frobenius_energy_is_preserved() {
        let mut rng = Rng::from_seed(99);
        for _ in 0..10 {
            let r = rng.range_inclusive(1, 50);
            let c = rng.range_inclusive(1, 50);
            let m = random_matrix(r, c, &mut rng);
            let vals = svd_values(&m).unwrap();
            let energy: f64 = vals.iter().map(|v| v * v).sum();
            let frob = m.frobenius_sq();
            assert!((energy - frob).abs() <= 1e-10 * frob.max(1e-300), "{energy} vs {frob}");
        }
    }

    #[test]
    fn values_are_descending_and_nonnegative() {
        let mut rng = Rng::from_seed(4);
        let m = random_matrix(9, 5, &mut rng);
        let vals = svd_values(&m).unwrap();
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(vals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let mut rng = Rng::from_seed(17);
        let m = random_matrix(5, 5, &mut rng);
        let sym = Matrix::from_fn(5, 5, |r, c| 0.5 * (m.get(r, c) + m.get(c, r)));
        let (vals, vecs) = symmetric_eigen(&sym).unwrap();
        // A v_i == lambda_i v_i
        for i in 0..5 {
            let v: Vec<f64> = (0..5).map(|r| vecs.get(r, i)).collect();
            let av = sym.matvec(&v).unwrap();
            for r in 0..5 {
                assert!((av[r] - vals[i] * v[r]).abs() < 1e-10);
            }
        }
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }
}
