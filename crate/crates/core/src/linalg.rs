//! Dense symmetric linear algebra: cyclic-Jacobi eigendecomposition,
//! Cholesky factorisation, and thin-QR orthonormalisation.
//!
//! Matrices here are small (channel covariances, d ≤ 61 in the reference
//! montage; feature-space Gram matrices up to a few hundred), so the
//! quadratically convergent Jacobi sweep is both fast enough and more
//! accurate on SPD input than tridiagonalisation-based solvers.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix: `a = V diag(λ) Vᵀ`.
///
/// Eigenvalues are returned in ascending order with matching eigenvector
/// columns. Convergence is to machine precision on the off-diagonal norm.
pub struct SymEig {
    pub eigenvalues: Array1<f64>,
    /// Columns are eigenvectors, same order as `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

/// Maximum allowed relative asymmetry before a matrix is rejected.
pub const SYM_TOL: f64 = 1e-9;

/// Check symmetry within `tol` relative to the largest absolute entry.
pub fn is_symmetric(a: &Array2<f64>, tol: f64) -> bool {
    let (r, c) = a.dim();
    if r != c {
        return false;
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for i in 0..r {
        for j in (i + 1)..r {
            if (a[[i, j]] - a[[j, i]]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Cyclic Jacobi eigendecomposition for a symmetric matrix.
pub fn sym_eig(a: &Array2<f64>) -> Result<SymEig> {
    if !is_symmetric(a, SYM_TOL) {
        return Err(Error::Invalid("sym_eig: matrix is not symmetric".into()));
    }
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: Array1::zeros(0),
            eigenvectors: v,
        });
    }

    let max_sweeps = 64;
    for _sweep in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let diag_scale: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * diag_scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                // Skip rotations that no longer change the matrix.
                if apq.abs() <= f64::EPSILON * (app.abs() + aqq.abs()) * 0.5 {
                    m[[p, q]] = 0.0;
                    m[[q, p]] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    // Sort ascending by eigenvalue.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[[i, i]].partial_cmp(&m[[j, j]]).unwrap());
    let eigenvalues = Array1::from_iter(idx.iter().map(|&i| m[[i, i]]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (new, &old) in idx.iter().enumerate() {
        for k in 0..n {
            eigenvectors[[k, new]] = v[[k, old]];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

impl SymEig {
    /// Rebuild `V f(diag) Vᵀ` with eigenvalues mapped through `f`.
    pub fn map_rebuild(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let fj = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[[i, j]] *= fj;
            }
        }
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Cholesky factorisation `a = L Lᵀ` of an SPD matrix (lower triangular L).
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape("cholesky: matrix not square".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "cholesky: non-positive pivot {sum:.3e} at {i}"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `a x = b` for SPD `a` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    let n = l.nrows();
    // Forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // Back: Lᵀ x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

/// Orthonormalise the columns of `a` in place via modified Gram-Schmidt
/// with one re-orthogonalisation pass.
pub fn orthonormalize_columns(a: &mut Array2<f64>) {
    let (_n, k) = a.dim();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let dot = a.column(i).dot(&a.column(j));
                let ci = a.column(i).to_owned();
                a.column_mut(j).zip_mut_with(&ci, |x, &y| *x -= dot * y);
            }
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm > 1e-300 {
            a.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
}
