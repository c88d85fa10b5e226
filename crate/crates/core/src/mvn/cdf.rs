//! Rectangle probabilities of the multivariate normal.
//!
//! Sequential conditioning maps the rectangle integral onto the unit cube
//! (`n − 1` dimensions once the first variable is integrated in closed form).
//! The cube integral is estimated with randomly shifted rank-1 lattice rules
//! behind a periodizing transform, and the spread across independent
//! shifts gives the error estimate. Variables are reordered so the most
//! constraining one comes first.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lattice;
use super::normal::{std_interval_mass, truncated_mean, truncated_quantile};
use super::{MvnError, MvnProblem, Rectangle};

/// Independent randomizations used for the error estimate.
pub const RANDOMIZATIONS: usize = 12;
/// Default relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default cap on integrand evaluations (summed over randomizations).
pub const DEFAULT_MAX_SAMPLES: usize = 1 << 21;

const MIN_POINTS: usize = 64;
/// Conditional variance, relative to the marginal, below which a coordinate
/// is treated as a deterministic function of the ones before it. Sits above
/// the factorization jitter so jittered singular matrices are recognized.
const SINGULAR_VAR: f64 = 1e-7;
/// Relative size below which a constraint coefficient counts as zero.
const COEFF_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate {
    pub value: f64,
    /// Three standard errors of the randomization mean.
    pub error_estimate: f64,
    pub samples_used: usize,
    /// False when `max_samples` ran out before the tolerance was met.
    pub converged: bool,
}

impl CdfEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            error_estimate: 0.0,
            samples_used: 0,
            converged: true,
        }
    }

    /// The value, or `ToleranceNotReached` if the estimate did not converge.
    pub fn require_converged(&self) -> Result<f64, MvnError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(MvnError::ToleranceNotReached {
                value: self.value,
                error_estimate: self.error_estimate,
            })
        }
    }
}

/// Estimates `Pr(x ∈ rect)` for `x ~ N(μ, Σ)`.
///
/// Sampling doubles until `error_estimate ≤ tol · max(value, 1e-300)` or
/// `max_samples` integrand evaluations have been spent; in the latter case the
/// estimate comes back with `converged = false`.
pub fn cdf_rectangle(
    problem: &MvnProblem,
    rect: &Rectangle,
    tol: f64,
    max_samples: usize,
    seed: u64,
) -> Result<CdfEstimate, MvnError> {
    let n = problem.dim();
    if rect.dim() != n {
        return Err(MvnError::DimMismatch {
            expected: n,
            got: rect.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(MvnError::InvalidTolerance(tol));
    }

    // Unbounded coordinates integrate to one; drop them.
    let active: Vec<usize> = (0..n)
        .filter(|&j| rect.lower()[j].is_finite() || rect.upper()[j].is_finite())
        .collect();
    if active.is_empty() {
        return Ok(CdfEstimate::exact(1.0));
    }
    let cov = problem.cov();
    let lower: Vec<f64> = active
        .iter()
        .map(|&j| rect.lower()[j] - problem.mean()[j])
        .collect();
    let upper: Vec<f64> = active
        .iter()
        .map(|&j| rect.upper()[j] - problem.mean()[j])
        .collect();
    let sub_cov = Array2::from_shape_fn((active.len(), active.len()), |(i, k)| {
        cov[[active[i], active[k]]]
    });

    let plan = ConditioningPlan::new(sub_cov, lower, upper);
    if plan.cube_dims() == 0 {
        return Ok(CdfEstimate::exact(plan.eval(&[], &mut [])));
    }
    if let Some(p) = plan.independent_mass() {
        return Ok(CdfEstimate::exact(p));
    }
    Ok(plan.integrate(tol, max_samples, seed))
}

/// Reordered Cholesky factor and standardized bounds for sequential
/// conditioning.
///
/// A coordinate whose conditional variance is negligible given the ones
/// before it carries no integration dimension of its own: it is a linear
/// constraint on the earlier draws and is folded into the bounds of the last
/// free variable it depends on. This handles singular Σ (d2 < n) and the
/// tiny jitter added when factoring one.
struct ConditioningPlan {
    /// Free rows are divided by their pivot; constraint rows are raw.
    chol: Array2<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Rows with their own integration variable, in order.
    free: Vec<usize>,
    /// Constraint rows folded into each free position.
    attached: Vec<Vec<usize>>,
    /// False when a constraint with no free dependence is violated.
    feasible: bool,
}

impl ConditioningPlan {
    /// Builds the factor column by column, at each step picking the remaining
    /// variable with the smallest conditional acceptance probability given
    /// the truncated conditional means of the variables already placed.
    /// Variables with variance left come before degenerate ones.
    fn new(mut cov: Array2<f64>, mut lower: Vec<f64>, mut upper: Vec<f64>) -> Self {
        let n = cov.nrows();
        let mut chol = Array2::<f64>::zeros((n, n));
        let mut y = vec![0.0; n];
        let mut free = Vec::new();
        for i in 0..n {
            let mut best = i;
            let mut best_key = (true, f64::INFINITY);
            for j in i..n {
                let mut shift = 0.0;
                let mut var = cov[[j, j]];
                for k in 0..i {
                    shift += chol[[j, k]] * y[k];
                    var -= chol[[j, k]] * chol[[j, k]];
                }
                let degenerate = var <= SINGULAR_VAR * cov[[j, j]];
                let mass = if degenerate {
                    f64::INFINITY
                } else {
                    let sd = var.sqrt();
                    std_interval_mass((lower[j] - shift) / sd, (upper[j] - shift) / sd)
                };
                if (degenerate, mass) < best_key {
                    best_key = (degenerate, mass);
                    best = j;
                }
            }
            if best != i {
                swap_sym(&mut cov, i, best);
                lower.swap(i, best);
                upper.swap(i, best);
                for k in 0..i {
                    chol.swap([i, k], [best, k]);
                }
            }
            let mut var = cov[[i, i]];
            for k in 0..i {
                var -= chol[[i, k]] * chol[[i, k]];
            }
            if var <= SINGULAR_VAR * cov[[i, i]] {
                // column stays zero below the diagonal; y[i] is never read
                continue;
            }
            let pivot = var.sqrt();
            chol[[i, i]] = pivot;
            for l in (i + 1)..n {
                let mut s = cov[[l, i]];
                for k in 0..i {
                    s -= chol[[l, k]] * chol[[i, k]];
                }
                chol[[l, i]] = s / pivot;
            }
            let mut shift = 0.0;
            for k in 0..i {
                shift += chol[[i, k]] * y[k];
            }
            y[i] = truncated_mean((lower[i] - shift) / pivot, (upper[i] - shift) / pivot);
            free.push(i);
        }
        // Standardize free rows by their pivot.
        for &i in &free {
            let pivot = chol[[i, i]];
            lower[i] /= pivot;
            upper[i] /= pivot;
            for k in 0..i {
                chol[[i, k]] /= pivot;
            }
        }
        let mut attached = vec![Vec::new(); free.len()];
        let mut feasible = true;
        for r in (0..n).filter(|r| !free.contains(r)) {
            let scale = (0..r).map(|k| chol[[r, k]].abs()).fold(0.0, f64::max);
            match free
                .iter()
                .rposition(|&k| k < r && chol[[r, k]].abs() > COEFF_FLOOR * scale)
            {
                Some(p) => attached[p].push(r),
                None => feasible &= lower[r] <= 0.0 && 0.0 <= upper[r],
            }
        }
        Self {
            chol,
            lower,
            upper,
            free,
            attached,
            feasible,
        }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Integration dimensions after the first free variable.
    fn cube_dims(&self) -> usize {
        self.free.len().saturating_sub(1)
    }

    /// Product of the coordinate masses when the factor is diagonal.
    fn independent_mass(&self) -> Option<f64> {
        let n = self.dim();
        if self.free.len() != n {
            return None;
        }
        let coupled = (1..n).any(|i| (0..i).any(|k| self.chol[[i, k]] != 0.0));
        if coupled {
            return None;
        }
        Some(
            (0..n)
                .map(|i| std_interval_mass(self.lower[i], self.upper[i]))
                .product(),
        )
    }

    /// Integrand on `[0,1]^{d}`, `d = cube_dims()`; `y` is scratch space of
    /// length `d`.
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        if !self.feasible {
            return 0.0;
        }
        let last = self.free.len() - 1;
        let mut f = 1.0;
        for (p, &i) in self.free.iter().enumerate() {
            let row = self.chol.row(i);
            let mut shift = 0.0;
            for q in 0..p {
                shift += row[self.free[q]] * y[q];
            }
            let (mut a, mut b) = (self.lower[i] - shift, self.upper[i] - shift);
            for &r in &self.attached[p] {
                let row = self.chol.row(r);
                let mut rest = 0.0;
                for q in 0..p {
                    rest += row[self.free[q]] * y[q];
                }
                let c = row[i];
                let (lo, hi) = ((self.lower[r] - rest) / c, (self.upper[r] - rest) / c);
                let (lo, hi) = if c > 0.0 { (lo, hi) } else { (hi, lo) };
                a = a.max(lo);
                b = b.min(hi);
            }
            if !(a < b) {
                return 0.0;
            }
            f *= std_interval_mass(a, b);
            if f <= 0.0 {
                return 0.0;
            }
            if p < last {
                y[p] = truncated_quantile(a, b, w[p]);
            }
        }
        f
    }

    fn integrate(&self, tol: f64, max_samples: usize, seed: u64) -> CdfEstimate {
        let dims = self.cube_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<Vec<f64>> = (0..RANDOMIZATIONS)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();

        let mut w = vec![0.0; dims];
        let mut y = vec![0.0; dims];
        let mut spent = 0usize;
        let budget = max_samples.max(RANDOMIZATIONS * MIN_POINTS);
        let mut level = 0usize;
        loop {
            let rule = lattice::rule(level, dims);
            let points = rule.points();
            let mut sums = [0.0f64; RANDOMIZATIONS];
            for k in 0..points {
                for (r, shift) in shifts.iter().enumerate() {
                    let weight = rule.point(k, shift, &mut w);
                    sums[r] += weight * self.eval(&w, &mut y);
                }
            }
            spent += points * RANDOMIZATIONS;
            let (value, error) = mean_and_error(&sums, points);
            let converged = error <= tol * value.max(1e-300);
            let next_cost = lattice::rule_size(level + 1) * RANDOMIZATIONS;
            if converged || spent + next_cost > budget || level + 1 >= lattice::LEVELS {
                let value = value.clamp(0.0, 1.0);
                let error = error.min(value).min(1.0 - value).max(0.0);
                return CdfEstimate {
                    value,
                    error_estimate: error,
                    samples_used: spent,
                    converged,
                };
            }
            level += 1;
        }
    }
}

fn mean_and_error(sums: &[f64; RANDOMIZATIONS], points: usize) -> (f64, f64) {
    let r = RANDOMIZATIONS as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / points as f64).collect();
    let mean = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (r - 1.0);
    (mean, 3.0 * (var / r).sqrt())
}

fn swap_sym(m: &mut Array2<f64>, i: usize, j: usize) {
    let n = m.nrows();
    for k in 0..n {
        m.swap([i, k], [j, k]);
    }
    for k in 0..n {
        m.swap([k, i], [k, j]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use std::f64::consts::PI;

    fn orthant(rho: f64) -> f64 {
        0.25 + rho.asin() / (2.0 * PI)
    }

    fn bivariate(rho: f64) -> MvnProblem {
        MvnProblem::new(Array1::zeros(2), &array![[1.0, rho], [rho, 1.0]]).unwrap()
    }

    #[test]
    fn univariate_half_line() {
        let p = MvnProblem::new(array![0.0], &array![[1.0]]).unwrap();
        let e = cdf_rectangle(&p, &Rectangle::from_presence(&[true]), 1e-6, 1000, 1).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.error_estimate, 0.0);
    }

    #[test]
    fn rank_one_covariance_is_a_half_line() {
        // x = z·(1, 2, -1) + (0, 0.5, 0): every orthant event is a condition on z
        let v = array![1.0, 2.0, -1.0];
        let cov = Array2::from_shape_fn((3, 3), |(i, j)| v[i] * v[j]);
        let p = MvnProblem::new(array![0.0, 0.5, 0.0], &cov).unwrap();
        let cases = [
            ([true, true, false], 0.5),
            ([true, false, false], 0.0),
            ([false, true, true], 0.5 - 0.4012936743170763),
        ];
        for (pattern, want) in cases {
            let e = cdf_rectangle(
                &p,
                &Rectangle::from_presence(&pattern),
                1e-8,
                DEFAULT_MAX_SAMPLES,
                5,
            )
            .unwrap();
            assert!(
                (e.value - want).abs() < 1e-7,
                "{pattern:?}: {} vs {want}",
                e.value
            );
        }
    }

    #[test]
    fn rank_deficient_patterns_sum_to_one() {
        let a = array![
            [0.9, -0.4, 0.3, 1.1],
            [0.2, 0.8, -0.7, 0.5],
            [-0.6, 0.1, 0.9, 0.4]
        ];
        let cov = a.t().dot(&a);
        let p = MvnProblem::new(array![0.2, -0.3, 0.1, 0.4], &cov).unwrap();
        let tol = 1e-6;
        let mut total = 0.0;
        for bits in 0..16u32 {
            let pattern: Vec<bool> = (0..4).map(|i| bits >> i & 1 == 1).collect();
            let e = cdf_rectangle(
                &p,
                &Rectangle::from_presence(&pattern),
                tol,
                DEFAULT_MAX_SAMPLES,
                11,
            )
            .unwrap();
            assert!(e.error_estimate <= tol, "{pattern:?}: {e:?}");
            total += e.value;
        }
        assert!((total - 1.0).abs() < 16.0 * tol, "total {total}");
    }

    #[test]
    fn independent_orthant_is_quarter() {
        let e = cdf_rectangle(
            &bivariate(0.0),
            &Rectangle::from_presence(&[true, true]),
            1e-6,
            DEFAULT_MAX_SAMPLES,
            3,
        )
        .unwrap();
        assert_eq!(e.value, 0.25);
        assert_eq!(e.error_estimate, 0.0);
    }

    #[test]
    fn orthant_closed_form() {
        for &rho in &[-0.9, -0.5, 0.0, 0.5, 0.9] {
            let e = cdf_rectangle(
                &bivariate(rho),
                &Rectangle::from_presence(&[true, true]),
                1e-6,
                DEFAULT_MAX_SAMPLES,
                5,
            )
            .unwrap();
            assert!(e.converged);
            assert!((e.value - orthant(rho)).abs() <= 1e-6, "rho {rho}: {e:?}");
        }
    }

    #[test]
    fn full_space_is_one() {
        for n in 1..=10 {
            let cov = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.3 });
            let p = MvnProblem::new(Array1::linspace(-1.0, 1.0, n), &cov).unwrap();
            let e = cdf_rectangle(&p, &Rectangle::full(n), 1e-6, DEFAULT_MAX_SAMPLES, 0).unwrap();
            assert!((e.value - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn invariant_error_bracket_within_unit_interval() {
        let cov = array![[1.0, 0.4, 0.2], [0.4, 1.0, -0.3], [0.2, -0.3, 1.0]];
        let p = MvnProblem::new(array![0.5, -0.2, 3.0], &cov).unwrap();
        let rect = Rectangle::from_presence(&[false, true, false]);
        let e = cdf_rectangle(&p, &rect, 1e-9, 12 * 256, 2).unwrap();
        assert!(e.value - e.error_estimate >= -1e-12);
        assert!(e.value + e.error_estimate <= 1.0 + 1e-12);
        assert!(!e.converged);
        assert!(matches!(
            e.require_converged(),
            Err(MvnError::ToleranceNotReached { .. })
        ));
    }

    #[test]
    fn same_seed_same_estimate() {
        let cov = array![[1.0, 0.4, 0.2], [0.4, 1.0, -0.3], [0.2, -0.3, 1.0]];
        let p = MvnProblem::new(array![0.5, -0.2, 0.1], &cov).unwrap();
        let rect = Rectangle::from_presence(&[true, true, false]);
        let a = cdf_rectangle(&p, &rect, 1e-7, DEFAULT_MAX_SAMPLES, 99).unwrap();
        let b = cdf_rectangle(&p, &rect, 1e-7, DEFAULT_MAX_SAMPLES, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let r = Rectangle::from_presence(&[true]);
        assert!(matches!(
            cdf_rectangle(&bivariate(0.1), &r, 1e-6, 100, 0),
            Err(MvnError::DimMismatch { .. })
        ));
    }
}
