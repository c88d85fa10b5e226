//! The embedding model: μ = Sᵀ(W·DNN(l)) and Σ = Λ̂ᵀΛ̂.
//!
//! Feature vectors passed to [`ModelParams::mu_forward`] are already
//! standardized. The user-facing entry points ([`ModelParams::predict_marginal`],
//! the likelihood functions) take raw features and apply the stored
//! [`FeatureScale`] themselves.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, FeatureStats, Observation};
use crate::mlp::{glorot_uniform, MlpError, MlpParams, MlpTape, DEFAULT_HIDDEN};
use crate::mvn::normal::{ln_std_cdf, std_cdf};
use crate::mvn::{cdf_rectangle, CovFactor, MvnError, MvnProblem, Rectangle, DEFAULT_MAX_SAMPLES};
use crate::seed;

/// Off-diagonal correlations are clamped to this magnitude.
pub const MAX_CORRELATION: f64 = 1.0 - 1e-12;
/// Raw interaction columns shorter than this are re-seeded.
pub const MIN_LAMBDA_NORM: f64 = 1e-10;
const REPAIR_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {got}")]
    DimMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("interaction column {0} is zero")]
    ZeroColumn(usize),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("species {0:?} missing from data")]
    MissingSpecies(String),
    #[error("feature {0:?} missing from data")]
    MissingFeature(String),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Mvn(#[from] MvnError),
}

fn mismatch(what: &str, expected: usize, got: usize) -> ModelError {
    ModelError::DimMismatch {
        what: what.to_string(),
        expected,
        got,
    }
}

/// Embedding and network sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d1: usize,
    pub d2: usize,
    /// Hidden layer widths; empty makes DNN the identity (a linear embedding).
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d1: 100,
            d2: 100,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

/// Per-feature affine standardization `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScale {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureScale {
    pub fn identity(m: usize) -> Self {
        Self {
            mean: Array1::zeros(m),
            std: Array1::ones(m),
        }
    }

    pub fn from_stats(stats: &[FeatureStats]) -> Self {
        Self {
            mean: stats.iter().map(|s| s.mean).collect(),
            std: stats.iter().map(|s| s.std).collect(),
        }
    }

    pub fn apply(&self, raw: ArrayView1<f64>) -> Array1<f64> {
        (&raw - &self.mean) / &self.std
    }
}

/// Unit-diagonal correlation matrix Σ = Λ̂ᵀΛ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    sigma: Array2<f64>,
}

impl CorrelationMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn into_array(self) -> Array2<f64> {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.sigma[[j, t]]
    }
}

/// Columns of `lambda` scaled to unit length, with the original norms.
pub fn normalize_columns(lambda: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>), ModelError> {
    let mut hat = lambda.clone();
    let mut norms = Array1::zeros(lambda.ncols());
    for (j, mut col) in hat.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(ModelError::ZeroColumn(j));
        }
        col /= norm;
        norms[j] = norm;
    }
    Ok((hat, norms))
}

/// Σ_jt = λ̂_jᵀλ̂_t with the diagonal set to exactly one.
pub fn sigma_from_lambda(lambda_raw: &Array2<f64>) -> Result<CorrelationMatrix, ModelError> {
    let (hat, _) = normalize_columns(lambda_raw)?;
    let mut sigma = hat.t().dot(&hat);
    let n = sigma.nrows();
    for j in 0..n {
        sigma[[j, j]] = 1.0;
        for t in 0..j {
            let v = 0.5 * (sigma[[j, t]] + sigma[[t, j]]);
            let v = v.clamp(-MAX_CORRELATION, MAX_CORRELATION);
            sigma[[j, t]] = v;
            sigma[[t, j]] = v;
        }
    }
    Ok(CorrelationMatrix { sigma })
}

/// Intermediates of the mean map for one observation.
#[derive(Debug, Clone)]
pub struct MuForward {
    pub mu: Array1<f64>,
    /// Environment embedding `h = W·DNN(l)`.
    pub h: Array1<f64>,
    pub tape: MlpTape,
}

impl MuForward {
    /// `DNN(l)`.
    pub fn dnn_output(&self) -> ArrayView1<'_, f64> {
        self.tape.output().row(0)
    }
}

/// Log-likelihood of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsLogLik {
    pub value: f64,
    /// Absolute error bound on the probability, from the integrator.
    pub prob_error: f64,
    pub converged: bool,
}

/// Summed log-likelihood over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLogLik {
    pub total: f64,
    /// Per-observation values in dataset order.
    pub per_obs: Vec<f64>,
    /// Observations whose integral missed the tolerance.
    pub unconverged: usize,
}

impl DatasetLogLik {
    pub fn mean(&self) -> f64 {
        if self.per_obs.is_empty() {
            0.0
        } else {
            self.total / self.per_obs.len() as f64
        }
    }
}

/// Full trainable state plus the metadata needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub species_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// `d1 × n` habitat embeddings.
    pub s: Array2<f64>,
    /// `d2 × n` raw interaction embeddings.
    pub lambda_raw: Array2<f64>,
    /// `d1 × n_output` projection.
    pub w: Array2<f64>,
    pub mlp: MlpParams,
    pub scale: FeatureScale,
}

impl ModelParams {
    /// Seeded initialization: the network first, then S, Λ and W, all from
    /// one generator.
    pub fn init(
        species_names: Vec<String>,
        feature_names: Vec<String>,
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let n = species_names.len();
        let m = feature_names.len();
        if n == 0 || m == 0 {
            return Err(ModelError::InvalidConfig(
                "need at least one species and one feature".into(),
            ));
        }
        if cfg.d1 == 0 || cfg.d2 == 0 {
            return Err(ModelError::InvalidConfig(
                "d1 and d2 must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = std::iter::once(m)
            .chain(cfg.hidden.iter().copied())
            .collect();
        let mlp = MlpParams::init_with(&dims, &mut rng)?;
        let n_out = mlp.n_output();
        let s = glorot_uniform(cfg.d1, n, cfg.d1, n, &mut rng);
        let lambda_raw = glorot_uniform(cfg.d2, n, cfg.d2, n, &mut rng);
        let w = glorot_uniform(cfg.d1, n_out, n_out, cfg.d1, &mut rng);
        let mut params = Self {
            species_names,
            feature_names,
            s,
            lambda_raw,
            w,
            mlp,
            scale: FeatureScale::identity(m),
        };
        params.repair_lambda();
        params.validate()?;
        Ok(params)
    }

    /// Checks that every tensor agrees with the name tables and each other.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_species();
        let m = self.n_features();
        if self.s.ncols() != n {
            return Err(mismatch("S columns", n, self.s.ncols()));
        }
        if self.lambda_raw.ncols() != n {
            return Err(mismatch("Lambda columns", n, self.lambda_raw.ncols()));
        }
        if self.w.nrows() != self.s.nrows() {
            return Err(mismatch("W rows", self.s.nrows(), self.w.nrows()));
        }
        if self.w.ncols() != self.mlp.n_output() {
            return Err(mismatch("W columns", self.mlp.n_output(), self.w.ncols()));
        }
        if self.mlp.n_input() != m {
            return Err(mismatch("network inputs", m, self.mlp.n_input()));
        }
        if self.scale.mean.len() != m || self.scale.std.len() != m {
            return Err(mismatch(
                "standardization entries",
                m,
                self.scale.mean.len(),
            ));
        }
        if self.s.nrows() == 0 || self.lambda_raw.nrows() == 0 || n == 0 {
            return Err(ModelError::InvalidConfig("empty embedding".into()));
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn d1(&self) -> usize {
        self.s.nrows()
    }

    pub fn d2(&self) -> usize {
        self.lambda_raw.nrows()
    }

    pub fn config(&self) -> ModelConfig {
        let dims = self.mlp.layer_dims();
        ModelConfig {
            d1: self.d1(),
            d2: self.d2(),
            hidden: dims[1..].to_vec(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.s.len() + self.lambda_raw.len() + self.w.len() + self.mlp.n_params()
    }

    /// Parameter tensors as flat slices: S, Λ, W, then the network.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.s.as_slice().expect("standard layout"),
            self.lambda_raw.as_slice().expect("standard layout"),
            self.w.as_slice().expect("standard layout"),
        ];
        out.extend(self.mlp.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.s.as_slice_mut().expect("standard layout"),
            self.lambda_raw.as_slice_mut().expect("standard layout"),
            self.w.as_slice_mut().expect("standard layout"),
        ];
        out.extend(self.mlp.tensors_mut());
        out
    }

    /// Re-seeds raw interaction columns whose norm fell below
    /// [`MIN_LAMBDA_NORM`]. Returns the repaired column indices.
    pub fn repair_lambda(&mut self) -> Vec<usize> {
        let d2 = self.d2();
        let mut repaired = Vec::new();
        for (j, mut col) in self.lambda_raw.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if !(norm >= MIN_LAMBDA_NORM) {
                col.fill(0.0);
                col[j % d2] = REPAIR_SCALE;
                repaired.push(j);
            }
        }
        repaired
    }

    pub fn sigma(&self) -> Result<CorrelationMatrix, ModelError> {
        sigma_from_lambda(&self.lambda_raw)
    }

    /// Factorized Σ, shared by every observation.
    pub fn cov_factor(&self) -> Result<Arc<CovFactor>, ModelError> {
        Ok(Arc::new(CovFactor::new(self.sigma()?.as_array())?))
    }

    /// Mean of the latent vector for standardized features `l`.
    pub fn mu_forward(&self, l: ArrayView1<f64>) -> Result<MuForward, ModelError> {
        if l.len() != self.n_features() {
            return Err(mismatch("features", self.n_features(), l.len()));
        }
        let (out, tape) = self.mlp.forward(l)?;
        let h = self.w.dot(&out);
        let mu = self.s.t().dot(&h);
        Ok(MuForward { mu, h, tape })
    }

    /// Latent mean for raw features.
    pub fn mu_raw(&self, raw: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        if raw.len() != self.n_features() {
            return Err(mismatch("features", self.n_features(), raw.len()));
        }
        Ok(self.mu_forward(self.scale.apply(raw).view())?.mu)
    }

    /// Presence probabilities `Φ(μ_j)` for raw features.
    pub fn predict_marginal(&self, raw: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        Ok(self.mu_raw(raw)?.mapv(std_cdf))
    }

    /// `log Pr(b | l)` for an observation with raw features.
    pub fn log_likelihood_obs(
        &self,
        obs: &Observation,
        tol: f64,
        seed: u64,
    ) -> Result<ObsLogLik, ModelError> {
        let factor = self.cov_factor()?;
        joint_log_likelihood(self, &factor, obs, tol, DEFAULT_MAX_SAMPLES, seed)
    }

    /// Sum of per-observation log-likelihoods; observation `i` integrates with
    /// seed `seed ^ i`.
    pub fn log_likelihood_dataset(
        &self,
        dataset: &Dataset,
        tol: f64,
        seed: u64,
    ) -> Result<DatasetLogLik, ModelError> {
        self.log_likelihood_dataset_with(dataset, tol, DEFAULT_MAX_SAMPLES, seed)
    }

    pub fn log_likelihood_dataset_with(
        &self,
        dataset: &Dataset,
        tol: f64,
        max_samples: usize,
        seed: u64,
    ) -> Result<DatasetLogLik, ModelError> {
        self.check_dataset(dataset)?;
        let factor = self.cov_factor()?;
        let results: Result<Vec<ObsLogLik>, ModelError> = dataset
            .observations()
            .par_iter()
            .enumerate()
            .map(|(i, obs)| {
                joint_log_likelihood(self, &factor, obs, tol, max_samples, seed ^ i as u64)
            })
            .collect();
        let results = results?;
        Ok(DatasetLogLik {
            total: results.iter().map(|r| r.value).sum(),
            unconverged: results.iter().filter(|r| !r.converged).count(),
            per_obs: results.into_iter().map(|r| r.value).collect(),
        })
    }

    /// Log-likelihood with Σ replaced by the identity: `Σ_j ln Φ((2b_j − 1)μ_j)`.
    pub fn independent_log_likelihood_obs(&self, obs: &Observation) -> Result<f64, ModelError> {
        let mu = self.mu_raw(obs.l.view())?;
        check_bits(self, &obs.b)?;
        Ok(mu
            .iter()
            .zip(&obs.b)
            .map(|(&m, &bit)| ln_std_cdf(if bit { m } else { -m }))
            .sum())
    }

    pub fn independent_log_likelihood_dataset(
        &self,
        dataset: &Dataset,
    ) -> Result<DatasetLogLik, ModelError> {
        self.check_dataset(dataset)?;
        let per_obs: Result<Vec<f64>, ModelError> = dataset
            .observations()
            .par_iter()
            .map(|obs| self.independent_log_likelihood_obs(obs))
            .collect();
        let per_obs = per_obs?;
        Ok(DatasetLogLik {
            total: per_obs.iter().sum(),
            per_obs,
            unconverged: 0,
        })
    }

    /// Checks that `dataset` has this model's species and features in order.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<(), ModelError> {
        check_names(
            &self.species_names,
            dataset.species_names(),
            ModelError::MissingSpecies,
        )?;
        check_names(
            &self.feature_names,
            dataset.feature_names(),
            ModelError::MissingFeature,
        )?;
        if dataset.species_names() != self.species_names.as_slice() {
            return Err(ModelError::InvalidConfig(
                "species columns are not in model order".into(),
            ));
        }
        if dataset.feature_names() != self.feature_names.as_slice() {
            return Err(ModelError::InvalidConfig(
                "feature columns are not in model order".into(),
            ));
        }
        Ok(())
    }

    /// Rearranges `dataset` columns into model order, dropping extras.
    pub fn align_dataset(&self, dataset: &Dataset) -> Result<Dataset, ModelError> {
        let sp = index_of(
            &self.species_names,
            dataset.species_names(),
            ModelError::MissingSpecies,
        )?;
        let ft = index_of(
            &self.feature_names,
            dataset.feature_names(),
            ModelError::MissingFeature,
        )?;
        let observations = dataset
            .observations()
            .iter()
            .map(|o| Observation {
                b: sp.iter().map(|&j| o.b[j]).collect(),
                l: ft.iter().map(|&k| o.l[k]).collect(),
            })
            .collect();
        Dataset::new(
            observations,
            self.species_names.clone(),
            self.feature_names.clone(),
        )
        .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }
}

fn check_names(
    want: &[String],
    have: &[String],
    missing: impl Fn(String) -> ModelError,
) -> Result<(), ModelError> {
    for name in want {
        if !have.contains(name) {
            return Err(missing(name.clone()));
        }
    }
    if want.len() != have.len() {
        return Err(mismatch("columns", want.len(), have.len()));
    }
    Ok(())
}

fn index_of(
    want: &[String],
    have: &[String],
    missing: impl Fn(String) -> ModelError,
) -> Result<Vec<usize>, ModelError> {
    want.iter()
        .map(|name| {
            have.iter()
                .position(|h| h == name)
                .ok_or_else(|| missing(name.clone()))
        })
        .collect()
}

fn check_bits(params: &ModelParams, b: &[bool]) -> Result<(), ModelError> {
    if b.len() != params.n_species() {
        return Err(mismatch("presence bits", params.n_species(), b.len()));
    }
    Ok(())
}

/// `log Pr(b | l)` with a precomputed factor of Σ.
pub fn joint_log_likelihood(
    params: &ModelParams,
    factor: &Arc<CovFactor>,
    obs: &Observation,
    tol: f64,
    max_samples: usize,
    seed: u64,
) -> Result<ObsLogLik, ModelError> {
    check_bits(params, &obs.b)?;
    let mu = params.mu_raw(obs.l.view())?;
    let problem = MvnProblem::with_factor(mu, factor.clone())?;
    let est = cdf_rectangle(
        &problem,
        &Rectangle::from_presence(&obs.b),
        tol,
        max_samples,
        seed,
    )?;
    Ok(ObsLogLik {
        value: est.value.ln(),
        prob_error: est.error_estimate,
        converged: est.converged,
    })
}

/// Convenience seed for evaluation passes derived from a user seed.
pub fn eval_seed(base: u64) -> u64 {
    seed::derive(base, seed::stream::EVAL)
}
