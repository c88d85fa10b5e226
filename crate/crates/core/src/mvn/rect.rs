use serde::{Deserialize, Serialize};

use super::normal::INV_SQRT_2PI;
use super::{MvnError, MvnProblem};

/// Axis-aligned integration region with extended-real bounds.
///
/// Infinite bounds are IEEE infinities in memory and the strings `"-inf"` /
/// `"inf"` when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    #[serde(with = "ext_real_vec")]
    lower: Vec<f64>,
    #[serde(with = "ext_real_vec")]
    upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MvnError> {
        if lower.len() != upper.len() {
            return Err(MvnError::DimMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(MvnError::Empty);
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
                || lo >= hi
            {
                return Err(MvnError::InvalidRectangle {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Present species map to `(0, +∞)`, absent ones to `(−∞, 0)`.
    pub fn from_presence(bits: &[bool]) -> Self {
        let (lower, upper) = bits
            .iter()
            .map(|&b| {
                if b {
                    (0.0, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            })
            .unzip();
        Self { lower, upper }
    }

    /// The whole of ℝⁿ.
    pub fn full(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v > lo && v < hi)
    }

    /// Keeps only the listed coordinates, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            lower: idx.iter().map(|&i| self.lower[i]).collect(),
            upper: idx.iter().map(|&i| self.upper[i]).collect(),
        }
    }
}

/// Upper bound `e^{−k²/2} / (k·√(2π))` on the per-coordinate normal mass lying
/// more than `k` standard deviations beyond the mean on one side.
pub fn truncation_bound(k: f64) -> f64 {
    assert!(k > 0.0, "truncation_bound needs k > 0, got {k}");
    (-0.5 * k * k).exp() * INV_SQRT_2PI / k
}

/// Result of [`clip_rectangle`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedRectangle {
    pub rect: Rectangle,
    /// Coordinates whose window had to be moved past `μ ± kσ` to stay nonempty.
    pub widened: Vec<usize>,
}

/// Intersects each coordinate interval with `[μ_j − kσ_j, μ_j + kσ_j]`.
///
/// If a coordinate's interval lies entirely outside that window, the window is
/// slid to start at the near edge of the interval and keeps width `kσ_j`.
pub fn clip_rectangle(
    rect: &Rectangle,
    problem: &MvnProblem,
    k: f64,
) -> Result<ClippedRectangle, MvnError> {
    let n = rect.dim();
    if problem.dim() != n {
        return Err(MvnError::DimMismatch {
            expected: n,
            got: problem.dim(),
        });
    }
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut widened = Vec::new();
    for j in 0..n {
        let mu = problem.mean()[j];
        let sd = problem.marginal_sd(j);
        let (lo, hi) = (rect.lower[j], rect.upper[j]);
        let mut new_lo = lo.max(mu - k * sd);
        let mut new_hi = hi.min(mu + k * sd);
        if new_lo >= new_hi {
            widened.push(j);
            if lo >= mu + k * sd {
                new_lo = lo;
                new_hi = hi.min(lo + k * sd);
            } else {
                new_hi = hi;
                new_lo = lo.max(hi - k * sd);
            }
        }
        lower.push(new_lo);
        upper.push(new_hi);
    }
    Ok(ClippedRectangle {
        rect: Rectangle { lower, upper },
        widened,
    })
}

mod ext_real_vec {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn format(v: f64) -> String {
        if v == f64::INFINITY {
            "inf".to_owned()
        } else if v == f64::NEG_INFINITY {
            "-inf".to_owned()
        } else {
            format!("{v}")
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|&x| format(x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| D::Error::custom(format!("bad bound {other:?}"))),
            })
            .collect()
    }
}
