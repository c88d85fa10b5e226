use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normal::sample_truncated_std;
use super::{MvnError, MvnProblem, Rectangle};

/// Settings for the truncated-MVN Gibbs sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Draws kept (M).
    pub n_samples: usize,
    pub burn_in_sweeps: usize,
    /// Keep one draw every `thinning` sweeps.
    pub thinning: usize,
    /// Clipping half-width in marginal standard deviations.
    pub cutoff_k: f64,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 256,
            burn_in_sweeps: 50,
            thinning: 2,
            cutoff_k: 5.0,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), MvnError> {
        if self.n_samples < 1 {
            return Err(MvnError::InvalidSamplerConfig(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.thinning < 1 {
            return Err(MvnError::InvalidSamplerConfig(
                "thinning must be at least 1".into(),
            ));
        }
        if !(self.cutoff_k >= 3.0) || !self.cutoff_k.is_finite() {
            return Err(MvnError::InvalidSamplerConfig(format!(
                "cutoff_k must be a finite value >= 3, got {}",
                self.cutoff_k
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Systematic-scan Gibbs draws from N(μ, Σ) restricted to `rect`.
///
/// Coordinate `j` is redrawn from its full conditional, a univariate normal
/// with variance `1/Q_jj` (Q = Σ⁻¹) truncated to `[lower_j, upper_j]`. The chain
/// starts at the mean projected into the rectangle. Returns an `M × n` array.
pub fn sample_truncated(
    problem: &MvnProblem,
    rect: &Rectangle,
    cfg: &SamplerConfig,
) -> Result<Array2<f64>, MvnError> {
    cfg.validate()?;
    let n = problem.dim();
    if rect.dim() != n {
        return Err(MvnError::DimMismatch {
            expected: n,
            got: rect.dim(),
        });
    }
    let q = problem.factor().precision();
    let mu = problem.mean();
    let (lower, upper) = (rect.lower(), rect.upper());
    let cond_sd: Vec<f64> = (0..n).map(|j| q[[j, j]].sqrt().recip()).collect();
    if cond_sd.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(MvnError::SingularCovariance);
    }

    let mut x: Vec<f64> = (0..n).map(|j| mu[j].clamp(lower[j], upper[j])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Array2::<f64>::zeros((cfg.n_samples, n));

    let sweep = |x: &mut [f64], rng: &mut ChaCha8Rng| {
        for j in 0..n {
            let row = q.row(j);
            let mut acc = 0.0;
            for t in 0..n {
                if t != j {
                    acc += row[t] * (x[t] - mu[t]);
                }
            }
            let cond_mean = mu[j] - acc / row[j];
            let sd = cond_sd[j];
            let a = (lower[j] - cond_mean) / sd;
            let b = (upper[j] - cond_mean) / sd;
            let z = sample_truncated_std(a, b, rng);
            let v = cond_mean + sd * z;
            // Rounding in the rescale can land on a bound.
            x[j] = if v > lower[j] && v < upper[j] {
                v
            } else {
                nudge_inside(lower[j], upper[j], v)
            };
        }
    };

    for _ in 0..cfg.burn_in_sweeps {
        sweep(&mut x, &mut rng);
    }
    for m in 0..cfg.n_samples {
        for _ in 0..cfg.thinning {
            sweep(&mut x, &mut rng);
        }
        out.row_mut(m).iter_mut().zip(&x).for_each(|(o, v)| *o = *v);
    }
    Ok(out)
}

fn nudge_inside(lo: f64, hi: f64, v: f64) -> f64 {
    let candidate = if v <= lo { next_up(lo) } else { next_down(hi) };
    if candidate > lo && candidate < hi {
        candidate
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        v
    }
}

fn next_up(v: f64) -> f64 {
    if v == 0.0 {
        f64::from_bits(1)
    } else if v > 0.0 {
        f64::from_bits(v.to_bits() + 1)
    } else {
        f64::from_bits(v.to_bits() - 1)
    }
}

fn next_down(v: f64) -> f64 {
    -next_up(-v)
}
