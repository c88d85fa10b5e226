//! Synthetic presence–absence data drawn forward from the probit model.
//!
//! Features are uniform on `[−1, 1]ᵐ`, the latent vector is `N(μ(l), Σ)` and
//! species `j` is present when its latent coordinate is positive.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Observation};
use crate::mlp::{Layer, MlpParams};
use crate::mvn::cholesky;
use crate::mvn::normal::std_quantile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Family of the generating mean map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuMapKind {
    /// `μ_j = w_jᵀl + c_j`.
    Linear,
    /// A random one-hidden-layer tanh network.
    MlpRandom,
    /// Even species follow the product `l₀l₁`, odd species the radius of
    /// `(l₀, l₁)`; neither is recoverable by a linear score.
    XorRadial,
}

impl std::str::FromStr for MuMapKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp-random" => Ok(Self::MlpRandom),
            "xor-radial" => Ok(Self::XorRadial),
            other => Err(SynthError::InvalidSpec(format!(
                "unknown mu_map {other:?} (expected linear, mlp-random or xor-radial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_species: usize,
    pub m_features: usize,
    pub n_obs: usize,
    pub mu_map: MuMapKind,
    pub true_sigma: Array2<f64>,
    /// Overall scale of the mean map.
    pub signal: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Equicorrelated Σ with off-diagonal `rho`.
    pub fn equicorrelated(n: usize, rho: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { rho })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_species == 0 || self.m_features == 0 {
            return bad("n_species and m_features must be positive".into());
        }
        if self.mu_map == MuMapKind::XorRadial && self.m_features < 2 {
            return bad("xor-radial needs at least 2 features".into());
        }
        if !self.signal.is_finite() {
            return bad("signal must be finite".into());
        }
        let n = self.n_species;
        if self.true_sigma.dim() != (n, n) {
            return bad(format!("true_sigma must be {n}x{n}"));
        }
        for i in 0..n {
            if (self.true_sigma[[i, i]] - 1.0).abs() > 1e-12 {
                return bad(format!("true_sigma diagonal entry {i} is not 1"));
            }
        }
        cholesky(&self.true_sigma)
            .map_err(|e| SynthError::InvalidSpec(format!("true_sigma: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `out × in`.
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Concrete generating mean map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MuMap {
    Linear {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    MlpRandom {
        layers: Vec<DenseLayer>,
        signal: f64,
    },
    XorRadial {
        n_species: usize,
        signal: f64,
    },
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}

impl MuMap {
    pub fn eval(&self, l: ArrayView1<f64>) -> Array1<f64> {
        match self {
            MuMap::Linear { weights, bias } => weights
                .iter()
                .zip(bias)
                .map(|(w, c)| w.iter().zip(l).map(|(a, b)| a * b).sum::<f64>() + c)
                .collect(),
            MuMap::MlpRandom { layers, signal } => {
                let layers = layers
                    .iter()
                    .map(|d| Layer {
                        weight: from_rows(&d.weight),
                        bias: Array1::from(d.bias.clone()),
                    })
                    .collect::<Vec<_>>();
                let mut dims = vec![l.len()];
                dims.extend(layers.iter().map(|x| x.bias.len()));
                let mlp =
                    MlpParams::from_layers(dims, layers).expect("stored layers are consistent");
                mlp.forward(l).expect("feature count matches").0 * *signal
            }
            MuMap::XorRadial { n_species, signal } => {
                let r2 = l[0] * l[0] + l[1] * l[1];
                (0..*n_species)
                    .map(|j| {
                        if j % 2 == 0 {
                            3.0 * signal * l[0] * l[1]
                        } else {
                            signal * (1.5 - 2.25 * r2)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Generating parameters, written next to a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub mu_map: MuMap,
    pub sigma: Vec<Vec<f64>>,
    pub seed: u64,
    pub n_obs: usize,
    pub species_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl SynthTruth {
    pub fn sigma_array(&self) -> Array2<f64> {
        from_rows(&self.sigma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    std_quantile(rng.random_range(f64::MIN_POSITIVE..1.0))
}

/// Draws a dataset and returns it with its generating parameters.
pub fn synth_generate(spec: &SynthSpec) -> Result<(Dataset, SynthTruth), SynthError> {
    spec.validate()?;
    let (n, m) = (spec.n_species, spec.m_features);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mu_map = match spec.mu_map {
        MuMapKind::Linear => MuMap::Linear {
            weights: (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| spec.signal * rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect(),
            bias: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        },
        MuMapKind::MlpRandom => {
            let mlp = MlpParams::init_with(&[m, 16, n], &mut rng).expect("positive dims");
            MuMap::MlpRandom {
                layers: mlp
                    .layers()
                    .iter()
                    .map(|x| DenseLayer {
                        weight: rows(&x.weight),
                        bias: x.bias.to_vec(),
                    })
                    .collect(),
                signal: spec.signal,
            }
        }
        MuMapKind::XorRadial => MuMap::XorRadial {
            n_species: n,
            signal: spec.signal,
        },
    };
    let chol = cholesky(&spec.true_sigma).expect("validated").factor;
    let observations = (0..spec.n_obs)
        .map(|_| {
            let l: Array1<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z: Array1<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let r = mu_map.eval(l.view()) + chol.dot(&z);
            Observation {
                b: r.iter().map(|&v| v > 0.0).collect(),
                l,
            }
        })
        .collect();
    let species_names: Vec<String> = (0..n).map(|j| format!("species{j}")).collect();
    let feature_names: Vec<String> = (0..m).map(|k| format!("x{k}")).collect();
    let dataset = Dataset::new(observations, species_names.clone(), feature_names.clone())
        .expect("generated names are unique");
    Ok((
        dataset,
        SynthTruth {
            mu_map,
            sigma: rows(&spec.true_sigma),
            seed: spec.seed,
            n_obs: spec.n_obs,
            species_names,
            feature_names,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(n: usize, rho: f64, kind: MuMapKind, signal: f64, n_obs: usize) -> SynthSpec {
        SynthSpec {
            n_species: n,
            m_features: 2,
            n_obs,
            mu_map: kind,
            true_sigma: SynthSpec::equicorrelated(n, rho),
            signal,
            seed: 42,
        }
    }

    #[test]
    fn fair_coins() {
        let (d, truth) = synth_generate(&spec(3, 0.0, MuMapKind::XorRadial, 0.0, 20_000)).unwrap();
        assert!(matches!(truth.mu_map, MuMap::XorRadial { .. }));
        let n = d.len() as f64;
        for c in d.presence_counts() {
            assert!((c as f64 / n - 0.5).abs() < 3.0 / n.sqrt());
        }
    }

    #[test]
    fn orthant_frequency() {
        let n_obs = 50_000;
        let (d, _) = synth_generate(&spec(2, 0.9, MuMapKind::XorRadial, 0.0, n_obs)).unwrap();
        let both =
            d.observations().iter().filter(|o| o.b[0] && o.b[1]).count() as f64 / n_obs as f64;
        let p = 0.25 + 0.9f64.asin() / (2.0 * PI);
        assert!((p - 0.4282).abs() < 1e-4);
        let se = (p * (1.0 - p) / n_obs as f64).sqrt();
        assert!((both - p).abs() < 3.0 * se, "{both} vs {p}");
    }

    #[test]
    fn deterministic_and_truth_round_trips() {
        for kind in [
            MuMapKind::Linear,
            MuMapKind::MlpRandom,
            MuMapKind::XorRadial,
        ] {
            let s = spec(2, 0.3, kind, 1.5, 50);
            let (a, ta) = synth_generate(&s).unwrap();
            let (b, tb) = synth_generate(&s).unwrap();
            assert_eq!(a, b);
            assert_eq!(ta, tb);
            let back = SynthTruth::from_json(&ta.to_json()).unwrap();
            assert_eq!(back, ta);
            let l = a.observations()[0].l.view();
            assert_eq!(back.mu_map.eval(l), ta.mu_map.eval(l));
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        let mut s = spec(2, 0.3, MuMapKind::Linear, 1.0, 5);
        s.true_sigma[[1, 1]] = 2.0;
        assert!(synth_generate(&s).is_err());
        let s = spec(2, 1.5, MuMapKind::Linear, 1.0, 5);
        assert!(synth_generate(&s).is_err());
        assert_eq!(
            "xor-radial".parse::<MuMapKind>().unwrap(),
            MuMapKind::XorRadial
        );
        assert!("cubic".parse::<MuMapKind>().is_err());
    }
}
