use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use super::cholesky::{cholesky, forward_solve, inverse_from_factor};
use super::normal::LN_2PI;
use super::MvnError;

/// A factorized covariance: the effective (possibly jittered) matrix, its
/// Cholesky factor and precision. Built once and shared between problems that
/// differ only in their mean.
#[derive(Debug, Clone)]
pub struct CovFactor {
    cov: Array2<f64>,
    chol: Array2<f64>,
    precision: Array2<f64>,
    log_det: f64,
    jittered: bool,
}

impl CovFactor {
    pub fn new(cov: &Array2<f64>) -> Result<Self, MvnError> {
        let c = cholesky(cov)?;
        let precision = inverse_from_factor(&c.factor);
        if precision.iter().any(|v| !v.is_finite()) || precision.diag().iter().any(|&q| q <= 0.0) {
            return Err(MvnError::SingularCovariance);
        }
        let log_det = 2.0 * c.factor.diag().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            cov: c.effective,
            chol: c.factor,
            precision,
            log_det,
            jittered: c.jittered,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// The covariance actually factored (includes jitter if it was applied).
    pub fn cov(&self) -> &Array2<f64> {
        &self.cov
    }

    pub fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    /// Σ⁻¹
    pub fn precision(&self) -> &Array2<f64> {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }
}

/// N(μ, Σ) with a cached factorization of Σ.
#[derive(Debug, Clone)]
pub struct MvnProblem {
    mean: Array1<f64>,
    factor: Arc<CovFactor>,
}

impl MvnProblem {
    pub fn new(mean: Array1<f64>, cov: &Array2<f64>) -> Result<Self, MvnError> {
        let factor = Arc::new(CovFactor::new(cov)?);
        Self::with_factor(mean, factor)
    }

    pub fn with_factor(mean: Array1<f64>, factor: Arc<CovFactor>) -> Result<Self, MvnError> {
        if mean.len() != factor.dim() {
            return Err(MvnError::DimMismatch {
                expected: factor.dim(),
                got: mean.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(MvnError::NonFiniteMean);
        }
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn factor(&self) -> &Arc<CovFactor> {
        &self.factor
    }

    pub fn cov(&self) -> &Array2<f64> {
        self.factor.cov()
    }

    /// Marginal standard deviation of coordinate `j`.
    pub fn marginal_sd(&self, j: usize) -> f64 {
        self.factor.cov()[[j, j]].sqrt()
    }

    pub fn log_pdf(&self, x: ArrayView1<f64>) -> Result<f64, MvnError> {
        let n = self.dim();
        if x.len() != n {
            return Err(MvnError::DimMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let centered = &x - &self.mean;
        let z = forward_solve(self.factor.chol(), centered.view());
        let quad = z.dot(&z);
        Ok(-0.5 * (n as f64 * LN_2PI + self.factor.log_det() + quad))
    }

    pub fn pdf(&self, x: ArrayView1<f64>) -> Result<f64, MvnError> {
        self.log_pdf(x).map(f64::exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standard_normal_density_at_origin() {
        let p = MvnProblem::new(array![0.0], &array![[1.0]]).unwrap();
        let v = p.pdf(array![0.0].view()).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn bivariate_identity_density_at_origin() {
        let p = MvnProblem::new(array![0.0, 0.0], &Array2::eye(2)).unwrap();
        let v = p.pdf(array![0.0, 0.0].view()).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn density_peaks_at_mean() {
        let cov = array![[1.0, 0.6, 0.2], [0.6, 2.0, 0.1], [0.2, 0.1, 0.5]];
        let mean = array![0.3, -1.0, 2.0];
        let p = MvnProblem::new(mean.clone(), &cov).unwrap();
        let peak = p.log_pdf(mean.view()).unwrap();
        for d in [
            array![0.1, 0.0, 0.0],
            array![0.0, -0.2, 0.05],
            array![-0.3, 0.3, 0.3],
        ] {
            let x = &mean + &d;
            assert!(p.log_pdf(x.view()).unwrap() < peak);
        }
    }

    #[test]
    fn density_matches_closed_form_with_correlation() {
        // direct 2x2 formula
        let rho: f64 = 0.5;
        let p = MvnProblem::new(array![0.0, 0.0], &array![[1.0, rho], [rho, 1.0]]).unwrap();
        let (x, y) = (0.7, -0.4);
        let det = 1.0 - rho * rho;
        let q = (x * x - 2.0 * rho * x * y + y * y) / det;
        let expected = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        assert!((p.pdf(array![x, y].view()).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn mean_length_checked() {
        let f = Arc::new(CovFactor::new(&Array2::eye(2)).unwrap());
        assert!(matches!(
            MvnProblem::with_factor(array![0.0], f),
            Err(MvnError::DimMismatch {
                expected: 2,
                got: 1
            })
        ));
    }
}
