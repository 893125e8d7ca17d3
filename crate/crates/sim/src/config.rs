//! Experiment configuration files (TOML or JSON) and their resolution into
//! a ready-to-run problem, shard set and seed list.

use std::fs;
use std::path::{Path, PathBuf};

use leasgd_core::problem::{gaussian_blobs, make_quadratic, quadratic_dataset, BlobSpec};
use leasgd_core::rng::{coordinator_stream, derive_run_seed};
use leasgd_core::{DataShard, Dataset, Mode, Problem, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub theory: TheorySpec,
    /// Default output directory for `run` when `--out` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    Logistic(ClassifierSpec),
    Mlp(ClassifierSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearTerm {
    #[default]
    Random,
    /// `b = 0`, placing the optimum at the origin.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub dimension: usize,
    pub mu: f64,
    pub lipschitz: f64,
    pub seed: u64,
    /// Seed of the per-worker samples; defaults to `seed + 1`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    pub samples_per_worker: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub linear_term: LinearTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(default)]
    pub reg_lambda: f64,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Blobs {
        seed: u64,
        spec: BlobSpec,
    },
    /// Header row, last column an integer label; the final `holdout` rows
    /// are held out for accuracy.
    Csv {
        path: PathBuf,
        #[serde(default)]
        holdout: usize,
    },
}

/// Either `runs` seeds derived from `master_seed`, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<u64>>,
}

fn one() -> usize {
    1
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self {
            master_seed: 0,
            runs: 1,
            list: None,
        }
    }
}

impl SeedSpec {
    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seeds: Vec<u64> = match &self.list {
            Some(list) => list.clone(),
            None => (0..self.runs).map(|i| derive_run_seed(self.master_seed, i)).collect(),
        };
        if seeds.is_empty() {
            return Err(SimError::Config("seeds: at least one run is required".into()));
        }
        Ok(seeds)
    }
}

/// Inputs for the bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySpec {
    /// Known gradient-noise variance; estimated when absent.
    #[serde(default)]
    pub sigma1_sq: Option<f64>,
    #[serde(default = "default_trials")]
    pub sigma1_trials: usize,
    #[serde(default)]
    pub sigma1_seed: u64,
    #[serde(default)]
    pub slack: Option<f64>,
}

fn default_trials() -> usize {
    200
}

impl Default for TheorySpec {
    fn default() -> Self {
        Self {
            sigma1_sq: None,
            sigma1_trials: default_trials(),
            sigma1_seed: 0,
            slack: None,
        }
    }
}

impl RunConfig {
    /// Parse by extension (`.toml` or `.json`); other extensions try JSON
    /// first, then TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let mut cfg = match ext {
            "toml" => Self::from_toml(&text)?,
            "json" => Self::from_json(&text)?,
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text))?,
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.sim.mode = mode;
        self
    }

    /// Replace the seed list with runs derived from `master_seed`.
    pub fn with_master_seed(mut self, master_seed: u64) -> Self {
        self.seeds.master_seed = master_seed;
        self.seeds.list = None;
        self
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// A validated configuration with its problem and data materialized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub problem: Problem,
    pub shards: Vec<DataShard>,
    /// Held-out split for classification accuracy.
    pub holdout: Option<Dataset>,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

/// Build the problem and shards and validate everything before any run.
pub fn prepare(config: RunConfig) -> Result<Prepared> {
    let seeds = config.seeds.seeds()?;
    let m = config.sim.workers;
    if m == 0 {
        return Err(SimError::Config("workers: must be at least 1".into()));
    }
    let (problem, train, holdout) = build_problem(&config)?;
    let shards = train.shard(m).map_err(SimError::Validation)?;
    let smallest = shards.iter().map(DataShard::sample_count).min().unwrap_or(0);
    if config.sim.batch_size > smallest {
        return Err(SimError::Config(format!(
            "batch_size: {} exceeds the smallest shard ({smallest} samples)",
            config.sim.batch_size
        )));
    }
    let warnings = config.sim.validate(&problem).map_err(SimError::Validation)?;
    Ok(Prepared {
        config,
        problem,
        shards,
        holdout,
        seeds,
        warnings,
    })
}

fn build_problem(config: &RunConfig) -> Result<(Problem, Dataset, Option<Dataset>)> {
    let m = config.sim.workers;
    match &config.problem {
        ProblemSpec::Quadratic(q) => {
            let mut problem = make_quadratic(q.dimension, q.mu, q.lipschitz, q.seed).map_err(SimError::Validation)?;
            if q.linear_term == LinearTerm::Zero {
                problem = problem
                    .with_linear_term(&vec![0.0; q.dimension])
                    .map_err(SimError::Validation)?;
            }
            let mut rng = coordinator_stream(q.data_seed.unwrap_or(q.seed.wrapping_add(1)));
            let data = quadratic_dataset(&problem, m, q.samples_per_worker, q.noise_std, &mut rng)
                .map_err(SimError::Validation)?;
            Ok((problem, data, None))
        }
        ProblemSpec::Logistic(c) => {
            let (train, holdout) = load_data(config, &c.data)?;
            let problem = Problem::logistic(&train, c.reg_lambda).map_err(SimError::Validation)?;
            Ok((problem, train, holdout))
        }
        ProblemSpec::Mlp(c) => {
            let (train, holdout) = load_data(config, &c.data)?;
            let classes = train.classes().max(holdout.as_ref().map_or(0, Dataset::classes)).max(2);
            let problem = Problem::mlp(train.features(), classes, c.reg_lambda).map_err(SimError::Validation)?;
            Ok((problem, train, holdout))
        }
    }
}

fn load_data(config: &RunConfig, spec: &DataSpec) -> Result<(Dataset, Option<Dataset>)> {
    match spec {
        DataSpec::Blobs { seed, spec } => {
            let data = gaussian_blobs(spec, &mut coordinator_stream(*seed)).map_err(SimError::Validation)?;
            let holdout = (!data.holdout.is_empty()).then_some(data.holdout);
            Ok((data.train, holdout))
        }
        DataSpec::Csv { path, holdout } => {
            let path = config.resolve(path);
            let full = read_dataset_csv(&path)?;
            split_holdout(full, *holdout)
        }
    }
}

/// Header row, then one sample per row: features, then an integer label.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let csv_err = |source| SimError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let width = reader.headers().map_err(csv_err)?.len();
    if width < 2 {
        return Err(SimError::Config(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |col: usize| {
            SimError::Config(format!(
                "{}: row {}, column {}: not a number",
                path.display(),
                line + 2,
                col + 1
            ))
        };
        for (col, field) in record.iter().take(width - 1).enumerate() {
            inputs.push(field.trim().parse::<f64>().map_err(|_| bad(col))?);
        }
        labels.push(record[width - 1].trim().parse::<usize>().map_err(|_| bad(width - 1))?);
    }
    Dataset::new(width - 1, inputs, labels).map_err(SimError::Validation)
}

fn split_holdout(full: Dataset, holdout: usize) -> Result<(Dataset, Option<Dataset>)> {
    if holdout == 0 {
        return Ok((full, None));
    }
    if holdout >= full.len() {
        return Err(SimError::Config(format!(
            "holdout: {holdout} rows leave no training data out of {}",
            full.len()
        )));
    }
    let cut = full.len() - holdout;
    let part = |range: std::ops::Range<usize>| {
        let inputs = range.clone().flat_map(|i| full.row(i).to_vec()).collect();
        let labels = range.map(|i| full.label(i)).collect();
        Dataset::new(full.features(), inputs, labels).map_err(SimError::Validation)
    };
    Ok((part(0..cut)?, Some(part(cut..full.len())?)))
}
