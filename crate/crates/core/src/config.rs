//! Flat `key = value` configuration files.
//!
//! Blank lines and anything after `#` are ignored. Unknown and repeated keys
//! are errors.

use thiserror::Error;

use crate::synth::{MuMapKind, SynthSpec};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A parsed `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| ConfigError::InvalidValue {
            line: e.line,
            key: e.key.clone(),
            value: e.value.clone(),
            reason: err.to_string(),
        })
}

fn parse_list(e: &Entry) -> Result<Vec<usize>, ConfigError> {
    if e.value.is_empty() || e.value == "none" {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|err| ConfigError::InvalidValue {
                    line: e.line,
                    key: e.key.clone(),
                    value: e.value.clone(),
                    reason: err.to_string(),
                })
        })
        .collect()
}

/// Keys accepted by [`apply_train_entry`].
pub const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "adagrad_epsilon",
    "minibatch_size",
    "epochs",
    "cdf_tol",
    "cdf_max_samples",
    "seed",
    "eval_every",
    "patience",
    "d1",
    "d2",
    "hidden",
    "n_samples",
    "burn_in_sweeps",
    "thinning",
    "cutoff_k",
    "rng_seed",
];

/// Sets one field of `cfg`. `patience = none` turns early stopping off;
/// `hidden = none` gives the linear embedding.
pub fn apply_train_entry(cfg: &mut TrainConfig, e: &Entry) -> Result<(), ConfigError> {
    match e.key.as_str() {
        "learning_rate" => cfg.learning_rate = parse(e)?,
        "adagrad_epsilon" => cfg.adagrad_epsilon = parse(e)?,
        "minibatch_size" => cfg.minibatch_size = parse(e)?,
        "epochs" => cfg.epochs = parse(e)?,
        "cdf_tol" => cfg.cdf_tol = parse(e)?,
        "cdf_max_samples" => cfg.cdf_max_samples = parse(e)?,
        "seed" => cfg.seed = parse(e)?,
        "eval_every" => cfg.eval_every = parse(e)?,
        "patience" => {
            cfg.patience = if e.value == "none" {
                None
            } else {
                Some(parse(e)?)
            }
        }
        "d1" => cfg.model.d1 = parse(e)?,
        "d2" => cfg.model.d2 = parse(e)?,
        "hidden" => cfg.model.hidden = parse_list(e)?,
        "n_samples" => cfg.sampler.n_samples = parse(e)?,
        "burn_in_sweeps" => cfg.sampler.burn_in_sweeps = parse(e)?,
        "thinning" => cfg.sampler.thinning = parse(e)?,
        "cutoff_k" => cfg.sampler.cutoff_k = parse(e)?,
        "rng_seed" => cfg.sampler.rng_seed = parse(e)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            })
        }
    }
    Ok(())
}

/// Parses a training config on top of the defaults and validates it.
pub fn parse_train_config(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut cfg = TrainConfig::default();
    for e in parse_entries(text)? {
        apply_train_entry(&mut cfg, &e)?;
    }
    cfg.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

/// Parses a synthetic-data spec.
///
/// Keys: `n_species`, `m_features`, `n_obs`, `mu_map`, `signal`, `seed`, and
/// either `rho` (equicorrelation) or `sigma` (rows separated by `;`, entries
/// by `,`).
pub fn parse_synth_spec(text: &str) -> Result<SynthSpec, ConfigError> {
    let mut n_species = 2;
    let mut m_features = 2;
    let mut n_obs = 1000;
    let mut mu_map = MuMapKind::Linear;
    let mut signal = 1.0;
    let mut seed = 0;
    let mut rho: Option<f64> = None;
    let mut sigma: Option<(Entry, Vec<Vec<f64>>)> = None;
    for e in parse_entries(text)? {
        match e.key.as_str() {
            "n_species" => n_species = parse(&e)?,
            "m_features" => m_features = parse(&e)?,
            "n_obs" => n_obs = parse(&e)?,
            "mu_map" => mu_map = parse(&e)?,
            "signal" => signal = parse(&e)?,
            "seed" => seed = parse(&e)?,
            "rho" => rho = Some(parse(&e)?),
            "sigma" => {
                let rows = e
                    .value
                    .split(';')
                    .map(|row| {
                        row.split(',')
                            .map(|v| v.trim().parse::<f64>())
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| ConfigError::InvalidValue {
                        line: e.line,
                        key: e.key.clone(),
                        value: e.value.clone(),
                        reason: err.to_string(),
                    })?;
                sigma = Some((e, rows));
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    key: e.key.clone(),
                })
            }
        }
    }
    let true_sigma = match (rho, sigma) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(
                "set either rho or sigma, not both".into(),
            ))
        }
        (Some(r), None) => SynthSpec::equicorrelated(n_species, r),
        (None, None) => SynthSpec::equicorrelated(n_species, 0.0),
        (None, Some((e, rows))) => {
            if rows.len() != n_species || rows.iter().any(|r| r.len() != n_species) {
                return Err(ConfigError::InvalidValue {
                    line: e.line,
                    key: e.key,
                    value: e.value,
                    reason: format!("expected {n_species}x{n_species} entries"),
                });
            }
            ndarray::Array2::from_shape_fn((n_species, n_species), |(i, j)| rows[i][j])
        }
    };
    let spec = SynthSpec {
        n_species,
        m_features,
        n_obs,
        mu_map,
        true_sigma,
        signal,
        seed,
    };
    spec.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let text = "
            # training
            learning_rate = 0.01
            adagrad_epsilon = 1e-6   # trailing comment
            minibatch_size = 16
            epochs = 3
            cdf_tol = 1e-5
            cdf_max_samples = 5000
            seed = 9
            eval_every = 10
            patience = 4
            d1 = 8
            d2 = 6
            hidden = 5, 4
            n_samples = 64
            burn_in_sweeps = 10
            thinning = 3
            cutoff_k = 4.5
            rng_seed = 2
        ";
        let cfg = parse_train_config(text).unwrap();
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.adagrad_epsilon, 1e-6);
        assert_eq!(cfg.minibatch_size, 16);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.cdf_tol, 1e-5);
        assert_eq!(cfg.cdf_max_samples, 5000);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.eval_every, 10);
        assert_eq!(cfg.patience, Some(4));
        assert_eq!((cfg.model.d1, cfg.model.d2), (8, 6));
        assert_eq!(cfg.model.hidden, vec![5, 4]);
        assert_eq!(cfg.sampler.n_samples, 64);
        assert_eq!(cfg.sampler.burn_in_sweeps, 10);
        assert_eq!(cfg.sampler.thinning, 3);
        assert_eq!(cfg.sampler.cutoff_k, 4.5);
        assert_eq!(cfg.sampler.rng_seed, 2);
        assert_eq!(TRAIN_KEYS.len(), 17);
        assert_eq!(
            parse_train_config("hidden = none").unwrap().model.hidden,
            Vec::<usize>::new()
        );
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(
            parse_train_config("epochs = 2\nlearnig_rate = 0.1"),
            Err(ConfigError::UnknownKey {
                line: 2,
                key: "learnig_rate".into()
            })
        );
        assert_eq!(
            parse_train_config("epochs 2"),
            Err(ConfigError::Syntax { line: 1 })
        );
        assert!(matches!(
            parse_train_config("epochs = two"),
            Err(ConfigError::InvalidValue { line: 1, .. })
        ));
        assert!(matches!(
            parse_train_config("epochs = 1\nepochs = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            parse_train_config("cutoff_k = 1"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn synth_spec() {
        let s =
            parse_synth_spec("n_species = 3\nmu_map = xor-radial\nrho = 0.2\nn_obs = 10").unwrap();
        assert_eq!(s.true_sigma[[0, 2]], 0.2);
        assert_eq!(s.mu_map, MuMapKind::XorRadial);
        let s = parse_synth_spec("sigma = 1, 0.5; 0.5, 1").unwrap();
        assert_eq!(s.true_sigma[[1, 0]], 0.5);
        assert!(parse_synth_spec("sigma = 1, 0.5; 0.5").is_err());
        assert!(parse_synth_spec("rho = 0.1\nsigma = 1,0;0,1").is_err());
        assert!(parse_synth_spec("mu_map = cubic").is_err());
    }
}
