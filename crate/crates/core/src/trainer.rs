//! Stochastic-gradient maximum likelihood with AdaGrad.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{apply_stats, feature_stats, Dataset};
use crate::gradients::{grad_mu_sigma, lambda_backward, mean_part, GradientBundle};
use crate::model::{FeatureScale, ModelConfig, ModelError, ModelParams};
use crate::mvn::{MvnProblem, Rectangle, SamplerConfig, DEFAULT_MAX_SAMPLES, DEFAULT_TOL};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("update at step {step} made the parameters unusable")]
    Diverged { step: usize },
    #[error("gradient failed at step {step}: {source}")]
    GradientFailed { step: usize, source: ModelError },
    #[error("training aborted in epoch {epoch}: {skipped} of {steps} steps were skipped as numerically unusable")]
    Aborted {
        epoch: usize,
        skipped: usize,
        steps: usize,
    },
    #[error("k must satisfy 2 <= k <= {n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub sampler: SamplerConfig,
    pub cdf_tol: f64,
    /// Integrand evaluations allowed per likelihood integral.
    pub cdf_max_samples: usize,
    pub seed: u64,
    /// Steps between likelihood evaluations.
    pub eval_every: usize,
    /// Stop after this many evaluations without validation improvement.
    pub patience: Option<usize>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            adagrad_epsilon: 1e-8,
            minibatch_size: 32,
            epochs: 30,
            sampler: SamplerConfig::default(),
            cdf_tol: DEFAULT_TOL,
            cdf_max_samples: DEFAULT_MAX_SAMPLES,
            seed: 0,
            eval_every: 100,
            patience: None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.adagrad_epsilon > 0.0) || !self.adagrad_epsilon.is_finite() {
            return bad("adagrad_epsilon must be positive");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be positive");
        }
        if !(self.cdf_tol > 0.0) || !self.cdf_tol.is_finite() {
            return bad("cdf_tol must be positive");
        }
        if self.cdf_max_samples == 0 {
            return bad("cdf_max_samples must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.patience == Some(0) {
            return bad("patience must be positive");
        }
        if self.model.d1 == 0 || self.model.d2 == 0 || self.model.hidden.contains(&0) {
            return bad("model dims must be positive");
        }
        self.sampler
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

/// Squared-gradient accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub accum: Vec<Vec<f64>>,
}

impl AdagradState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            accum: params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect(),
        }
    }
}

/// One ascent step `θ += lr · g / (√G + ε)` with `G += g²`.
///
/// `bundle` must already be averaged over its minibatch. A non-finite
/// gradient, or an update that would leave a parameter non-finite or Σ
/// undefined, leaves both the parameters and the state untouched.
pub fn adagrad_step(
    params: &mut ModelParams,
    state: &mut AdagradState,
    bundle: &GradientBundle,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(), TrainError> {
    if !bundle.is_finite() {
        return Err(TrainError::NonFiniteGradient { step });
    }
    let mut next = params.clone();
    let mut next_state = state.clone();
    let grads = bundle.tensors();
    for ((p, acc), g) in next
        .tensors_mut()
        .into_iter()
        .zip(next_state.accum.iter_mut())
        .zip(grads)
    {
        for ((p, a), &g) in p.iter_mut().zip(acc.iter_mut()).zip(g) {
            *a += g * g;
            *p += cfg.learning_rate * g / (a.sqrt() + cfg.adagrad_epsilon);
        }
    }
    next.repair_lambda();
    let finite = next
        .tensors()
        .iter()
        .all(|t| t.iter().all(|v| v.is_finite()));
    if !finite || next.sigma().is_err() {
        return Err(TrainError::Diverged { step });
    }
    *params = next;
    *state = next_state;
    Ok(())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean log-likelihood of the step's minibatch, on evaluation steps.
    pub minibatch_loglik: Option<f64>,
    /// Mean validation log-likelihood, on evaluation steps.
    pub validation_loglik: Option<f64>,
    /// RMS over species of the standard error of the averaged μ-gradient.
    pub grad_se: f64,
    pub skipped: bool,
    pub wall_secs: f64,
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| r.to_json_line() + "\n")
            .collect()
    }

    pub fn evaluations(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| r.minibatch_loglik.is_some())
    }
}

/// Averaged minibatch gradient and the RMS standard error of its μ part.
///
/// `data` holds standardized features. Observation `i` samples with seed
/// `item(step_seed, i)`.
pub fn minibatch_gradient(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    sampler: &SamplerConfig,
    step_seed: u64,
) -> Result<(GradientBundle, f64), ModelError> {
    let factor = params.cov_factor()?;
    let n = params.n_species();
    let parts: Vec<_> = indices
        .par_iter()
        .map(|&i| {
            let obs = &data.observations()[i];
            let fwd = params.mu_forward(obs.l.view())?;
            let problem = MvnProblem::with_factor(fwd.mu.clone(), factor.clone())?;
            let cfg = sampler.with_seed(seed::item(step_seed, i as u64));
            let g = grad_mu_sigma(&problem, &Rectangle::from_presence(&obs.b), &cfg)?;
            let part = mean_part(params, &fwd, g.d_mu.view())?;
            Ok((part, g.d_sigma, g.d_mu_se))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut total = GradientBundle::zeros_like(params);
    let mut d_sigma = Array2::<f64>::zeros((n, n));
    let mut var = vec![0.0; n];
    for (part, ds, se) in &parts {
        total.add(part);
        d_sigma += ds;
        for (v, s) in var.iter_mut().zip(se) {
            *v += s * s;
        }
    }
    let count = indices.len() as f64;
    total.d_lambda_raw = lambda_backward(&params.lambda_raw, &d_sigma)?;
    total.scale(1.0 / count);
    let grad_se = (var.iter().sum::<f64>() / n as f64).sqrt() / count;
    Ok((total, grad_se))
}

/// Trains on `dataset` from a fresh initialization seeded by `init_seed`.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<(ModelParams, TrainingLog), TrainError> {
    train_with(dataset, None, cfg, init_seed, &mut |_| {})
}

/// Like [`train`], also scoring `validation` at every evaluation step and
/// passing each log record to `sink` as it is produced.
pub fn train_with(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
    init_seed: u64,
    sink: &mut dyn FnMut(&LogRecord),
) -> Result<(ModelParams, TrainingLog), TrainError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.minibatch_size > dataset.len() {
        return Err(TrainError::InvalidConfig(format!(
            "minibatch_size {} exceeds dataset size {}",
            cfg.minibatch_size,
            dataset.len()
        )));
    }
    let stats = feature_stats(dataset);
    let mut params = ModelParams::init(
        dataset.species_names().to_vec(),
        dataset.feature_names().to_vec(),
        &cfg.model,
        init_seed,
    )?;
    params.scale = FeatureScale::from_stats(&stats);
    if let Some(v) = validation {
        params.check_dataset(v)?;
    }
    let standardized = apply_stats(dataset, &stats);
    let mut state = AdagradState::new(&params);
    let mut log = TrainingLog::default();

    let shuffle_seed = seed::derive(cfg.seed, seed::stream::SHUFFLE);
    let sampler_seed = seed::derive(cfg.seed, seed::stream::SAMPLER) ^ cfg.sampler.rng_seed;
    let eval_seed = seed::derive(cfg.seed, seed::stream::EVAL);
    let n_obs = dataset.len();
    let steps_per_epoch = n_obs.div_ceil(cfg.minibatch_size);
    let start = Instant::now();
    let mut step = 0;
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_obs).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::item(
            shuffle_seed,
            epoch as u64,
        )));
        let mut skipped = 0;
        for batch in order.chunks(cfg.minibatch_size) {
            step += 1;
            // Inputs were validated up front, so a failure here is numerical
            // breakdown and counts as a skipped step.
            let gradient = minibatch_gradient(
                &params,
                &standardized,
                batch,
                &cfg.sampler,
                seed::item(sampler_seed, step as u64),
            )
            .map_err(|source| TrainError::GradientFailed { step, source });
            let grad_se = gradient.as_ref().map_or(f64::NAN, |g| g.1);
            let evaluating = gradient.is_ok() && step % cfg.eval_every == 0;
            let (minibatch_loglik, validation_loglik) = if evaluating {
                let mb = params.log_likelihood_dataset_with(
                    &dataset.subset(batch),
                    cfg.cdf_tol,
                    cfg.cdf_max_samples,
                    seed::item(eval_seed, step as u64),
                )?;
                let val = match validation {
                    Some(v) => Some(
                        params
                            .log_likelihood_dataset_with(
                                v,
                                cfg.cdf_tol,
                                cfg.cdf_max_samples,
                                eval_seed,
                            )?
                            .mean(),
                    ),
                    None => None,
                };
                (Some(mb.mean()), val)
            } else {
                (None, None)
            };
            let outcome = gradient
                .and_then(|(bundle, _)| adagrad_step(&mut params, &mut state, &bundle, cfg, step));
            if outcome.is_err() {
                skipped += 1;
            }
            let record = LogRecord {
                step,
                epoch,
                minibatch_loglik,
                validation_loglik,
                grad_se,
                skipped: outcome.is_err(),
                wall_secs: start.elapsed().as_secs_f64(),
            };
            sink(&record);
            log.records.push(record);

            if let (Some(patience), Some(v)) = (cfg.patience, validation_loglik) {
                if v > best {
                    best = v;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        log.stopped_early = true;
                        break 'epochs;
                    }
                }
            }
        }
        if 2 * skipped > steps_per_epoch {
            return Err(TrainError::Aborted {
                epoch,
                skipped,
                steps: steps_per_epoch,
            });
        }
    }
    Ok((params, log))
}

/// Training and validation indices of one fold.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Seeded `k`-way partition of `0..n`; fold `i` validates on block `i` of a
/// random permutation and trains on the rest. Both index lists are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>, TrainError> {
    if k < 2 || k > n {
        return Err(TrainError::InvalidK { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|i| {
            let (lo, hi) = (i * n / k, (i + 1) * n / k);
            let mut val = perm[lo..hi].to_vec();
            let mut train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            val.sort_unstable();
            train.sort_unstable();
            (train, val)
        })
        .collect())
}
