//! Deterministic fixtures shared by the benchmarks.

use ndarray::{Array1, Array2};

use dmse::{Dataset, ModelConfig, ModelParams, MvnProblem, Observation};

/// Cheap reproducible values in `(-1, 1)`.
fn wave(i: usize) -> f64 {
    ((i as f64 + 1.0) * 12.9898).sin()
}

/// Equicorrelated-plus-structure covariance with unit diagonal.
pub fn correlated_problem(n: usize) -> MvnProblem {
    let d = 3.min(n);
    let lambda = Array2::from_shape_fn((d, n), |(k, j)| wave(k * n + j));
    let mut cov = lambda.t().dot(&lambda) * 0.5 + Array2::<f64>::eye(n);
    let diag: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    for ((j, t), v) in cov.indexed_iter_mut() {
        *v /= diag[j] * diag[t];
    }
    let mean = Array1::from_shape_fn(n, |j| 0.3 * wave(100 + j));
    MvnProblem::new(mean, &cov).unwrap()
}

/// Alternating presence pattern.
pub fn pattern(n: usize) -> Vec<bool> {
    (0..n).map(|j| j % 2 == 0).collect()
}

pub fn dataset(n_obs: usize, n_species: usize, n_features: usize) -> Dataset {
    let obs = (0..n_obs)
        .map(|i| {
            let l = Array1::from_shape_fn(n_features, |k| wave(i * n_features + k));
            let b = (0..n_species)
                .map(|j| l[j % n_features] + 0.5 * wave(7 * i + j) > 0.0)
                .collect();
            Observation { b, l }
        })
        .collect();
    let species = (0..n_species).map(|j| format!("sp{j}")).collect();
    let features = (0..n_features).map(|k| format!("f{k}")).collect();
    Dataset::new(obs, species, features).unwrap()
}

pub fn model(data: &Dataset, cfg: &ModelConfig) -> ModelParams {
    ModelParams::init(
        data.species_names().to_vec(),
        data.feature_names().to_vec(),
        cfg,
        1,
    )
    .unwrap()
}
