//! Checklist datasets: CSV ingestion, standardization and species filtering.
//!
//! Presence columns are named `sp:<name>` and hold `0`/`1`; feature columns
//! are named `env:<name>` and hold finite reals. Other columns are ignored.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array1;
use thiserror::Error;

pub const SPECIES_PREFIX: &str = "sp:";
pub const FEATURE_PREFIX: &str = "env:";

/// Below this a feature is treated as constant.
pub const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-binary presence value {value:?} at line {row}, column {col}")]
    NonBinaryPresence {
        row: usize,
        col: String,
        value: String,
    },
    #[error("non-finite feature value {value:?} at line {row}, column {col}")]
    NonFiniteFeature {
        row: usize,
        col: String,
        value: String,
    },
    #[error("line {row} has {got} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("top_k must be between 1 and {n}, got {k}")]
    InvalidTopK { k: usize, n: usize },
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// One checklist: presence bits and environmental features.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub b: Vec<bool>,
    pub l: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    species_names: Vec<String>,
    feature_names: Vec<String>,
}

fn check_unique(names: &[String], what: &str) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(DataError::Inconsistent(format!("empty {what} name")));
        }
        if !seen.insert(name.as_str()) {
            return Err(DataError::Inconsistent(format!(
                "duplicate {what} name {name:?}"
            )));
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        species_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        check_unique(&species_names, "species")?;
        check_unique(&feature_names, "feature")?;
        for (i, obs) in observations.iter().enumerate() {
            if obs.b.len() != species_names.len() || obs.l.len() != feature_names.len() {
                return Err(DataError::Inconsistent(format!(
                    "observation {i} has {} species and {} features, expected {} and {}",
                    obs.b.len(),
                    obs.l.len(),
                    species_names.len(),
                    feature_names.len()
                )));
            }
        }
        Ok(Self {
            observations,
            species_names,
            feature_names,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            observations: indices
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            species_names: self.species_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn presence_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_species()];
        for obs in &self.observations {
            for (c, &bit) in counts.iter_mut().zip(&obs.b) {
                *c += bit as usize;
            }
        }
        counts
    }

    /// Replaces every feature vector by `f(l)`.
    pub fn map_features(&self, f: impl Fn(&Array1<f64>) -> Array1<f64>) -> Self {
        Self {
            observations: self
                .observations
                .iter()
                .map(|o| Observation {
                    b: o.b.clone(),
                    l: f(&o.l),
                })
                .collect(),
            species_names: self.species_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

enum Column {
    Species,
    Feature,
    Ignored,
}

/// Reads a dataset from a CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    species_prefix: &str,
    feature_prefix: &str,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, species_prefix, feature_prefix)
}

/// Reads a dataset from any CSV source. Line numbers in errors count the
/// header as line 1.
pub fn read_csv<R: Read>(
    reader: R,
    species_prefix: &str,
    feature_prefix: &str,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| DataError::Csv(e.to_string()))?,
        None => return Err(DataError::MalformedHeader("file is empty".into())),
    };
    let mut kinds = Vec::with_capacity(header.len());
    let mut species_names = Vec::new();
    let mut feature_names = Vec::new();
    for field in header.iter() {
        let field = field.trim();
        if let Some(name) = field.strip_prefix(species_prefix) {
            if name.is_empty() {
                return Err(DataError::MalformedHeader(format!(
                    "column {field:?} has an empty species name"
                )));
            }
            species_names.push(name.to_string());
            kinds.push(Column::Species);
        } else if let Some(name) = field.strip_prefix(feature_prefix) {
            if name.is_empty() {
                return Err(DataError::MalformedHeader(format!(
                    "column {field:?} has an empty feature name"
                )));
            }
            feature_names.push(name.to_string());
            kinds.push(Column::Feature);
        } else {
            kinds.push(Column::Ignored);
        }
    }
    if species_names.is_empty() {
        return Err(DataError::MalformedHeader(format!(
            "no {species_prefix}<name> columns"
        )));
    }
    if feature_names.is_empty() {
        return Err(DataError::MalformedHeader(format!(
            "no {feature_prefix}<name> columns"
        )));
    }
    check_unique(&species_names, "species")
        .map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    check_unique(&feature_names, "feature")
        .map_err(|e| DataError::MalformedHeader(e.to_string()))?;

    let mut observations = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        let mut b = Vec::with_capacity(species_names.len());
        let mut l = Vec::with_capacity(feature_names.len());
        for ((value, kind), col) in record.iter().zip(&kinds).zip(header.iter()) {
            let value = value.trim();
            match kind {
                Column::Species => match value {
                    "0" => b.push(false),
                    "1" => b.push(true),
                    _ => {
                        return Err(DataError::NonBinaryPresence {
                            row,
                            col: col.trim().to_string(),
                            value: value.to_string(),
                        })
                    }
                },
                Column::Feature => match value.parse::<f64>() {
                    Ok(x) if x.is_finite() => l.push(x),
                    _ => {
                        return Err(DataError::NonFiniteFeature {
                            row,
                            col: col.trim().to_string(),
                            value: value.to_string(),
                        })
                    }
                },
                Column::Ignored => {}
            }
        }
        observations.push(Observation {
            b,
            l: Array1::from(l),
        });
    }
    Dataset::new(observations, species_names, feature_names)
}

/// Writes species columns then feature columns, with the standard prefixes.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<String> = dataset
        .species_names
        .iter()
        .map(|s| format!("{SPECIES_PREFIX}{s}"))
        .chain(
            dataset
                .feature_names
                .iter()
                .map(|f| format!("{FEATURE_PREFIX}{f}")),
        )
        .collect();
    wtr.write_record(&header)
        .map_err(|e| DataError::Csv(e.to_string()))?;
    for obs in &dataset.observations {
        let row: Vec<String> = obs
            .b
            .iter()
            .map(|&bit| {
                if bit {
                    "1".to_string()
                } else {
                    "0".to_string()
                }
            })
            .chain(obs.l.iter().map(|x| format!("{x:?}")))
            .collect();
        wtr.write_record(&row)
            .map_err(|e| DataError::Csv(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-feature location and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    /// Population standard deviation, or 1 for a constant feature.
    pub std: f64,
    pub constant: bool,
}

/// Population mean and standard deviation of each feature.
pub fn feature_stats(dataset: &Dataset) -> Vec<FeatureStats> {
    let m = dataset.n_features();
    let n = dataset.len() as f64;
    (0..m)
        .map(|k| {
            if dataset.is_empty() {
                return FeatureStats {
                    mean: 0.0,
                    std: 1.0,
                    constant: true,
                };
            }
            let mean = dataset.observations.iter().map(|o| o.l[k]).sum::<f64>() / n;
            let var = dataset
                .observations
                .iter()
                .map(|o| (o.l[k] - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            if std < CONSTANT_STD {
                FeatureStats {
                    mean,
                    std: 1.0,
                    constant: true,
                }
            } else {
                FeatureStats {
                    mean,
                    std,
                    constant: false,
                }
            }
        })
        .collect()
}

/// Applies `(x − mean) / std` per feature.
pub fn apply_stats(dataset: &Dataset, stats: &[FeatureStats]) -> Dataset {
    dataset
        .map_features(|l| Array1::from_shape_fn(l.len(), |k| (l[k] - stats[k].mean) / stats[k].std))
}

/// Z-scores every feature.
pub fn standardize(dataset: &Dataset) -> (Dataset, Vec<FeatureStats>) {
    let stats = feature_stats(dataset);
    (apply_stats(dataset, &stats), stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub dataset: Dataset,
    /// Indices of kept species in the input, in output order.
    pub kept: Vec<usize>,
    /// Fraction of presence records belonging to kept species.
    pub coverage: f64,
}

/// Keeps the `top_k` most frequently present species. Ties go to the
/// lexicographically smaller name; kept species retain their input order.
pub fn filter_top_species(dataset: &Dataset, top_k: usize) -> Result<FilterReport, DataError> {
    let n = dataset.n_species();
    if top_k == 0 || top_k > n {
        return Err(DataError::InvalidTopK { k: top_k, n });
    }
    let counts = dataset.presence_counts();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then_with(|| dataset.species_names[a].cmp(&dataset.species_names[b]))
    });
    let mut kept: Vec<usize> = order[..top_k].to_vec();
    kept.sort_unstable();

    let total: usize = counts.iter().sum();
    let retained: usize = kept.iter().map(|&j| counts[j]).sum();
    let coverage = if total == 0 {
        1.0
    } else {
        retained as f64 / total as f64
    };
    let observations = dataset
        .observations
        .iter()
        .map(|o| Observation {
            b: kept.iter().map(|&j| o.b[j]).collect(),
            l: o.l.clone(),
        })
        .collect();
    let species_names = kept
        .iter()
        .map(|&j| dataset.species_names[j].clone())
        .collect();
    Ok(FilterReport {
        dataset: Dataset::new(observations, species_names, dataset.feature_names.clone())?,
        kept,
        coverage,
    })
}
