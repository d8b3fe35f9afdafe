//! Small dense f64 helpers: Cholesky solves for ridge least squares and a
//! Jacobi eigensolver for the PCA dictionary variant.

use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` (row-major n*n)
/// by Cholesky decomposition. `rhs` holds one or more right-hand sides of
/// length n laid end to end; they are solved in place.
pub(crate) fn cholesky_solve(a: &[f64], n: usize, rhs: &mut [f64]) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(rhs.len() % n, 0);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Degenerate(
                        "matrix is not positive definite".into(),
                    ));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    for col in rhs.chunks_exact_mut(n) {
        // forward: L y = b
        for i in 0..n {
            let mut sum = col[i];
            for k in 0..i {
                sum -= l[i * n + k] * col[k];
            }
            col[i] = sum / l[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut sum = col[i];
            for k in i + 1..n {
                sum -= l[k * n + i] * col[k];
            }
            col[i] = sum / l[i * n + i];
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix (row-major n*n) by cyclic
/// Jacobi rotations. Returns (eigenvalues, eigenvectors) sorted by
/// descending eigenvalue; eigenvector i occupies `vecs[i*n..(i+1)*n]`.
pub(crate) fn jacobi_eigh(mat: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(mat.len(), n * n);
    let mut a = mat.to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = Vec::with_capacity(n);
    let mut vecs = vec![0.0f64; n * n];
    for (rank, &idx) in order.iter().enumerate() {
        vals.push(a[idx * n + idx]);
        for k in 0..n {
            vecs[rank * n + k] = v[k * n + idx];
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_known_system() {
        // A = [[4,2],[2,3]], b = (2, 5) -> x = (-0.5, 2)
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![2.0, 5.0];
        cholesky_solve(&a, 2, &mut b).unwrap();
        assert!((b[0] + 0.5).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1.0, 2.0, 2.0, 1.0];
        let mut b = vec![1.0, 1.0];
        assert!(cholesky_solve(&a, 2, &mut b).is_err());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1 with vectors
        // (1,1)/sqrt2 and (1,-1)/sqrt2.
        let m = vec![2.0, 1.0, 1.0, 2.0];
        let (vals, vecs) = jacobi_eigh(&m, 2);
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-10);
        assert!((vecs[0].abs() - (0.5f64).sqrt()).abs() < 1e-10);
        assert!((vecs[0] - vecs[1]).abs() < 1e-10);
    }
}
