//! Per-species AUC and joint versus independent log-likelihood.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::model::{ModelError, ModelParams};
use crate::mvn::DEFAULT_MAX_SAMPLES;

/// Mann–Whitney AUC with half credit for ties; `None` unless both classes
/// are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        labels.len(),
        "scores and labels differ in length"
    );
    let n_pos = labels.iter().filter(|&&b| b).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Paired comparison of per-observation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub std_error: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for a positive mean difference.
    pub p_greater: f64,
    pub p_two_sided: f64,
}

/// Paired t-test of `a − b`. `None` for fewer than two pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTest> {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    let t = mean / se;
    let (p_greater, p_two_sided) = if se > 0.0 {
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        (dist.sf(t), 2.0 * dist.sf(t.abs()))
    } else if mean > 0.0 {
        (0.0, 0.0)
    } else if mean < 0.0 {
        (1.0, 0.0)
    } else {
        (0.5, 1.0)
    };
    Some(PairedTest {
        mean_diff: mean,
        std_error: se,
        t,
        df,
        p_greater,
        p_two_sided,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub species: Vec<String>,
    /// AUC per species; absent when a species has a single class.
    pub per_species_auc: Vec<Option<f64>>,
    /// Mean over species with an AUC.
    pub mean_auc: Option<f64>,
    /// Mean joint log-likelihood per observation.
    pub joint_loglik: f64,
    /// Mean log-likelihood per observation with Σ replaced by I.
    pub independent_loglik: f64,
    pub joint_loglik_total: f64,
    pub independent_loglik_total: f64,
    /// Joint minus independent, per observation.
    pub paired: Option<PairedTest>,
    pub n_obs: usize,
    /// Observations whose integral missed the tolerance.
    pub unconverged: usize,
}

/// Scores `dataset` (raw features, model column order).
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    cdf_tol: f64,
    seed: u64,
) -> Result<EvalReport, ModelError> {
    evaluate_with(params, dataset, cdf_tol, DEFAULT_MAX_SAMPLES, seed)
}

pub fn evaluate_with(
    params: &ModelParams,
    dataset: &Dataset,
    cdf_tol: f64,
    max_samples: usize,
    seed: u64,
) -> Result<EvalReport, ModelError> {
    params.check_dataset(dataset)?;
    let n = params.n_species();
    let marginals: Vec<_> = dataset
        .observations()
        .par_iter()
        .map(|o| params.predict_marginal(o.l.view()))
        .collect::<Result<_, _>>()?;
    let per_species_auc: Vec<Option<f64>> = (0..n)
        .map(|j| {
            let scores: Vec<f64> = marginals.iter().map(|p| p[j]).collect();
            let labels: Vec<bool> = dataset.observations().iter().map(|o| o.b[j]).collect();
            auc(&scores, &labels)
        })
        .collect();
    let present: Vec<f64> = per_species_auc.iter().flatten().copied().collect();
    let mean_auc = if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    };
    let joint = params.log_likelihood_dataset_with(dataset, cdf_tol, max_samples, seed)?;
    let indep = params.independent_log_likelihood_dataset(dataset)?;
    Ok(EvalReport {
        species: params.species_names.clone(),
        per_species_auc,
        mean_auc,
        joint_loglik: joint.mean(),
        independent_loglik: indep.mean(),
        joint_loglik_total: joint.total,
        independent_loglik_total: indep.total,
        paired: paired_t_test(&joint.per_obs, &indep.per_obs),
        n_obs: dataset.len(),
        unconverged: joint.unconverged,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

impl EvalReport {
    /// Key–value pairs in report order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("n_obs".to_string(), self.n_obs.to_string()),
            ("mean_auc".to_string(), opt(self.mean_auc)),
            (
                "joint_loglik_per_obs".to_string(),
                format!("{}", self.joint_loglik),
            ),
            (
                "independent_loglik_per_obs".to_string(),
                format!("{}", self.independent_loglik),
            ),
            (
                "loglik_gap_per_obs".to_string(),
                format!("{}", self.joint_loglik - self.independent_loglik),
            ),
            (
                "joint_loglik_total".to_string(),
                format!("{}", self.joint_loglik_total),
            ),
            (
                "independent_loglik_total".to_string(),
                format!("{}", self.independent_loglik_total),
            ),
            ("paired_t".to_string(), opt(self.paired.map(|p| p.t))),
            (
                "paired_p_greater".to_string(),
                opt(self.paired.map(|p| p.p_greater)),
            ),
            ("unconverged".to_string(), self.unconverged.to_string()),
        ];
        for (name, a) in self.species.iter().zip(&self.per_species_auc) {
            out.push((format!("auc:{name}"), opt(*a)));
        }
        out
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").expect("write to string");
        }
        s
    }

    /// Two-column CSV with a `key,value` header.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["key", "value"]).expect("in-memory write");
        for (k, v) in self.entries() {
            wtr.write_record([k, v]).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
