//! Datasets, contiguous sharding and seeded synthetic generators.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Model, Problem};
use crate::error::{invalid, Error, Result};

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features == 0 {
            return Err(invalid("features", "must be positive"));
        }
        if inputs.len() != features * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features * labels.len(),
                actual: inputs.len(),
            });
        }
        if !crate::math::all_finite(&inputs) {
            return Err(invalid("inputs", "contains non-finite values"));
        }
        Ok(Self {
            features,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of classes implied by the largest label.
    pub fn classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |l| l + 1)
    }

    /// Split into `m` contiguous blocks; block sizes differ by at most one,
    /// the first `len % m` blocks taking the extra sample.
    pub fn shard(&self, m: usize) -> Result<Vec<DataShard>> {
        if m == 0 {
            return Err(invalid("workers", "must be positive"));
        }
        if self.len() < m {
            return Err(invalid(
                "workers",
                alloc::format!("{} samples cannot fill {m} non-empty shards", self.len()),
            ));
        }
        let base = self.len() / m;
        let extra = self.len() % m;
        let mut start = 0;
        Ok((0..m)
            .map(|worker_id| {
                let count = base + usize::from(worker_id < extra);
                let range = start..start + count;
                start += count;
                DataShard {
                    worker_id,
                    start: range.start,
                    features: self.features,
                    inputs: self.inputs[range.start * self.features..range.end * self.features].to_vec(),
                    labels: self.labels[range].to_vec(),
                }
            })
            .collect())
    }

    pub fn as_shard(&self) -> DataShard {
        DataShard {
            worker_id: 0,
            start: 0,
            features: self.features,
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// One worker's private block of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub worker_id: usize,
    /// Dataset index of the first sample.
    pub start: usize,
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl DataShard {
    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Dataset indices covered by this shard.
    pub fn global_indices(&self) -> Range<usize> {
        self.start..self.start + self.sample_count()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.sample_count()).collect()
    }
}

/// Samples for a quadratic problem: each row is a linear-term sample
/// `b + e_s`, with the noise centred inside every worker block so that each
/// shard's full-batch gradient is exactly `A w - b`.
pub fn quadratic_dataset<R: Rng + ?Sized>(
    problem: &Problem,
    workers: usize,
    per_worker: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let Model::Quadratic(q) = &problem.model else {
        return Err(invalid("problem", "quadratic samples need a quadratic problem"));
    };
    if workers == 0 || per_worker == 0 {
        return Err(invalid("per_worker", "workers and samples per worker must be positive"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(invalid("noise_std", "must be finite and non-negative"));
    }
    let n = problem.dim();
    let mut inputs = Vec::with_capacity(workers * per_worker * n);
    let mut block = alloc::vec![0.0; per_worker * n];
    for _ in 0..workers {
        for v in block.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = noise_std * z;
        }
        for j in 0..n {
            let mean = (0..per_worker).map(|s| block[s * n + j]).sum::<f64>() / per_worker as f64;
            for s in 0..per_worker {
                block[s * n + j] -= mean;
            }
        }
        for s in 0..per_worker {
            for j in 0..n {
                inputs.push(q.b[j] + block[s * n + j]);
            }
        }
    }
    Dataset::new(n, inputs, alloc::vec![0; workers * per_worker])
}

/// Two-class Gaussian blobs, optionally made non-identically distributed
/// across contiguous groups of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub samples: usize,
    pub holdout: usize,
    pub features: usize,
    /// Distance between the two class centres.
    pub separation: f64,
    /// Per-coordinate standard deviation around each centre.
    pub noise: f64,
    /// Number of contiguous groups; each group gets its own feature shift.
    pub groups: usize,
    /// Standard deviation of the per-group shift (0 = identically distributed).
    pub group_shift: f64,
    /// Append a constant 1 feature.
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobData {
    pub train: Dataset,
    pub holdout: Dataset,
}

pub fn gaussian_blobs<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Result<BlobData> {
    if spec.features == 0 || spec.samples == 0 || spec.groups == 0 {
        return Err(invalid("blobs", "samples, features and groups must be positive"));
    }
    if spec.groups > spec.samples {
        return Err(invalid("groups", "more groups than samples"));
    }
    let d = spec.features;
    let mut direction: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let len = crate::math::norm(&direction);
    direction.iter_mut().for_each(|v| *v /= len);
    let shifts: Vec<Vec<f64>> = (0..spec.groups)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    spec.group_shift * z
                })
                .collect()
        })
        .collect();

    let draw = |group: usize, rng: &mut R, inputs: &mut Vec<f64>, labels: &mut Vec<usize>| {
        let label = usize::from(rng.random::<bool>());
        let sign = if label == 1 { 0.5 } else { -0.5 };
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            inputs.push(sign * spec.separation * direction[j] + shifts[group][j] + spec.noise * z);
        }
        if spec.bias {
            inputs.push(1.0);
        }
        labels.push(label);
    };

    let width = d + usize::from(spec.bias);
    let mut inputs = Vec::with_capacity(spec.samples * width);
    let mut labels = Vec::with_capacity(spec.samples);
    let base = spec.samples / spec.groups;
    let extra = spec.samples % spec.groups;
    for g in 0..spec.groups {
        for _ in 0..base + usize::from(g < extra) {
            draw(g, rng, &mut inputs, &mut labels);
        }
    }
    let train = Dataset::new(width, inputs, labels)?;

    let mut inputs = Vec::with_capacity(spec.holdout * width);
    let mut labels = Vec::with_capacity(spec.holdout);
    for _ in 0..spec.holdout {
        let g = rng.random_range(0..spec.groups);
        draw(g, rng, &mut inputs, &mut labels);
    }
    let holdout = if spec.holdout == 0 {
        Dataset {
            features: width,
            inputs,
            labels,
        }
    } else {
        Dataset::new(width, inputs, labels)?
    };
    Ok(BlobData { train, holdout })
}
