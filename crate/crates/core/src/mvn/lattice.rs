//! Rank-1 Korobov lattice rules with a prime number of points.
//!
//! Level `ℓ` uses the largest prime below `2^(ℓ+6)`. The Korobov multiplier for
//! each (level, dimension) pair is picked from a fixed candidate set by
//! minimizing the weighted P₂ criterion, and cached for the process lifetime.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Number of available rule sizes.
pub const LEVELS: usize = 19;
const FIRST_EXPONENT: u32 = 6;
/// Dimensions that enter the multiplier search.
const SEARCH_DIMS: usize = 10;
const SEARCH_CANDIDATES: usize = 32;

pub struct Rule {
    points: usize,
    generator: Arc<Vec<u64>>,
    periodization: Periodization,
}

impl Rule {
    pub fn points(&self) -> usize {
        self.points
    }

    /// Writes the shifted, periodized `k`-th lattice point into `out` and
    /// returns its Jacobian weight.
    #[inline]
    pub fn point(&self, k: usize, shift: &[f64], out: &mut [f64]) -> f64 {
        let n = self.points as u64;
        let inv = 1.0 / self.points as f64;
        let mut weight = 1.0;
        for ((o, &z), &s) in out.iter_mut().zip(self.generator.iter()).zip(shift) {
            let base = ((k as u64 * z) % n) as f64 * inv;
            let u = (base + s).fract();
            match self.periodization {
                Periodization::Tent => *o = (2.0 * u - 1.0).abs(),
                Periodization::Quintic => {
                    let v = 1.0 - u;
                    *o = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
                    weight *= 30.0 * u * u * v * v;
                }
            }
        }
        weight
    }
}

/// Map from the shifted lattice point to the integration variable.
///
/// The quintic map `u³(10 − 15u + 6u²)` has a Jacobian vanishing to second
/// order at both ends, which tames the endpoint singularities of the
/// conditioned integrand; its product weight grows noisy with dimension, so
/// beyond [`QUINTIC_MAX_DIMS`] the tent map `|2u − 1|` is used instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Periodization {
    Tent,
    Quintic,
}

pub const QUINTIC_MAX_DIMS: usize = 5;

/// Point count at `level`.
pub fn rule_size(level: usize) -> usize {
    static SIZES: OnceLock<Vec<usize>> = OnceLock::new();
    let sizes = SIZES.get_or_init(|| {
        (0..LEVELS as u32)
            .map(|l| largest_prime_below(1usize << (l + FIRST_EXPONENT)))
            .collect()
    });
    sizes[level.min(LEVELS - 1)]
}

pub fn rule(level: usize, dims: usize) -> Rule {
    let points = rule_size(level);
    Rule {
        points,
        generator: generator(points, dims),
        periodization: if dims <= QUINTIC_MAX_DIMS {
            Periodization::Quintic
        } else {
            Periodization::Tent
        },
    }
}

fn generator(n: usize, dims: usize) -> Arc<Vec<u64>> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<Vec<u64>>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache
        .lock()
        .expect("lattice cache poisoned")
        .get(&(n, dims))
    {
        return Arc::clone(g);
    }
    let multiplier = if dims <= 1 {
        1
    } else {
        best_multiplier(n, dims.min(SEARCH_DIMS))
    };
    let mut z = Vec::with_capacity(dims);
    let mut power = 1u64;
    for _ in 0..dims {
        z.push(power);
        power = power * multiplier % n as u64;
    }
    let g = Arc::new(z);
    cache
        .lock()
        .expect("lattice cache poisoned")
        .entry((n, dims))
        .or_insert_with(|| Arc::clone(&g));
    g
}

fn best_multiplier(n: usize, dims: usize) -> u64 {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let candidates = if n > 1 << 16 {
        SEARCH_CANDIDATES / 4
    } else {
        SEARCH_CANDIDATES
    };
    let mut best = (f64::INFINITY, 2u64);
    for i in 1..=candidates {
        let a = ((n as f64 * (i as f64 * golden).fract()) as u64).clamp(2, n as u64 - 2);
        let score = p2_criterion(n, a, dims);
        if score < best.0 {
            best = (score, a);
        }
    }
    best.1
}

/// Weighted P₂ worst-case error of the Korobov lattice `(1, a, a², …)`,
/// with weights `γ_j = 1/(j+1)` favouring leading coordinates.
fn p2_criterion(n: usize, a: u64, dims: usize) -> f64 {
    let nn = n as u64;
    let mut z = Vec::with_capacity(dims);
    let mut power = 1u64;
    for _ in 0..dims {
        z.push(power);
        power = power * a % nn;
    }
    let weights: Vec<f64> = (0..dims).map(|j| 2.0 * PI * PI / (j + 1) as f64).collect();
    let inv = 1.0 / n as f64;
    let mut residues = vec![0u64; dims];
    let mut total = 0.0;
    for _ in 0..n {
        let mut prod = 1.0;
        for j in 0..dims {
            let x = residues[j] as f64 * inv;
            prod *= 1.0 + weights[j] * (x * x - x + 1.0 / 6.0);
            residues[j] += z[j];
            if residues[j] >= nn {
                residues[j] -= nn;
            }
        }
        total += prod;
    }
    total * inv - 1.0
}

fn largest_prime_below(limit: usize) -> usize {
    (2..limit)
        .rev()
        .find(|&c| is_prime(c))
        .expect("limit above 2")
}

fn is_prime(c: usize) -> bool {
    c >= 2 && (2..).take_while(|d| d * d <= c).all(|d| c % d != 0)
}
