use ndarray::{Array1, Array2, ArrayView1};

use super::MvnError;

/// Relative symmetry tolerance accepted for covariance inputs.
const SYMMETRY_TOL: f64 = 1e-12;
/// A pivot below this fraction of its diagonal entry counts as a failure.
const PIVOT_FLOOR: f64 = 1e-14;
/// Jitter added once, scaled by the mean diagonal.
pub const JITTER_SCALE: f64 = 1e-8;

/// Lower-triangular Cholesky factor plus the matrix it actually factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub factor: Array2<f64>,
    /// `cov`, or `cov + jitter·I` when the first attempt failed.
    pub effective: Array2<f64>,
    pub jittered: bool,
}

/// Factors a symmetric matrix as `L·Lᵀ`.
///
/// On failure, `1e-8 · mean(diag) · I` is added once and the factorization is
/// retried; `jittered` reports whether that happened.
pub fn cholesky(cov: &Array2<f64>) -> Result<Cholesky, MvnError> {
    check_symmetric(cov)?;
    match factorize(cov) {
        Ok(factor) => Ok(Cholesky {
            factor,
            effective: cov.clone(),
            jittered: false,
        }),
        Err(_) => {
            let n = cov.nrows();
            let mean_diag = cov.diag().sum() / n as f64;
            let jitter = JITTER_SCALE * mean_diag.abs().max(f64::MIN_POSITIVE);
            let mut effective = cov.clone();
            for i in 0..n {
                effective[[i, i]] += jitter;
            }
            let factor = factorize(&effective)?;
            Ok(Cholesky {
                factor,
                effective,
                jittered: true,
            })
        }
    }
}

fn check_symmetric(cov: &Array2<f64>) -> Result<(), MvnError> {
    let (rows, cols) = cov.dim();
    if rows != cols {
        return Err(MvnError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(MvnError::Empty);
    }
    for i in 0..rows {
        for j in 0..i {
            let (a, b) = (cov[[i, j]], cov[[j, i]]);
            let scale = a.abs().max(b.abs()).max(1.0);
            if !a.is_finite() || !b.is_finite() || (a - b).abs() > SYMMETRY_TOL * scale {
                return Err(MvnError::NotSymmetric { row: i, col: j });
            }
        }
        if !cov[[i, i]].is_finite() {
            return Err(MvnError::NotSymmetric { row: i, col: i });
        }
    }
    Ok(())
}

fn factorize(a: &Array2<f64>) -> Result<Array2<f64>, MvnError> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > PIVOT_FLOOR * a[[j, j]].abs()) || !d.is_finite() {
            return Err(MvnError::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L·y = b` for lower-triangular `L`.
pub fn forward_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves `Lᵀ·x = y` for lower-triangular `L`.
pub fn backward_solve(l: &Array2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// `(L·Lᵀ)⁻¹` from its Cholesky factor, symmetrized.
pub fn inverse_from_factor(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut e = Array1::<f64>::zeros(n);
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        let y = forward_solve(l, e.view());
        let x = backward_solve(l, y.view());
        inv.column_mut(j).assign(&x);
    }
    let t = inv.t().to_owned();
    (inv + t) * 0.5
}
