//! Optimization tasks and their stochastic gradient oracles.
//!
//! Three kinds are supported: a quadratic with a controlled spectrum (exact
//! `μ`, `L` and `w*`), L2-regularized logistic regression, and a fixed
//! one-hidden-layer MLP. Every per-sample loss is averaged over a minibatch
//! and the regularizer `(λ/2)‖w‖²` is added once.

mod data;
mod mlp;
mod quadratic;
mod sigma;

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use data::{gaussian_blobs, quadratic_dataset, BlobData, BlobSpec, DataShard, Dataset};
pub use mlp::HIDDEN as MLP_HIDDEN;
pub use sigma::{estimate_sigma1, SIGMA1_SAFETY_FACTOR};

use crate::error::{invalid, Error, Result};
use crate::math::{dot, norm_sq, softplus};
use mlp::MlpShape;
use quadratic::Quadratic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Model {
    Quadratic(Quadratic),
    Logistic {
        /// `¼ max_s ‖x_s‖²`, the curvature bound of the data term.
        curvature_bound: f64,
    },
    Mlp(MlpShape),
}

/// A loss family with its gradient oracle and, for convex kinds, the
/// strong-convexity constants `(μ, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    dim: usize,
    mu: Option<f64>,
    lipschitz: Option<f64>,
    reg_lambda: f64,
    optimum: Option<Vec<f64>>,
    pub(crate) model: Model,
}

/// One minibatch gradient draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub gradient: Vec<f64>,
    /// Shard-local sample indices, ascending.
    pub minibatch_indices: Vec<usize>,
    /// Unbiased within-batch estimate of `E‖g − ∇f‖²` (needs ≥ 2 samples).
    pub sigma1_estimate: Option<f64>,
}

/// Sum of per-sample losses and gradients over a batch.
struct BatchSums {
    loss: f64,
    grad: Vec<f64>,
    grad_sq: f64,
}

fn check_reg(reg_lambda: f64) -> Result<()> {
    if !(reg_lambda >= 0.0 && reg_lambda.is_finite()) {
        return Err(invalid("reg_lambda", "must be finite and non-negative"));
    }
    Ok(())
}

/// Quadratic with eigenvalues evenly spaced over `[mu, lipschitz]`, a random
/// rotation and a standard-normal linear term, all derived from `seed`.
pub fn make_quadratic(dimension: usize, mu: f64, lipschitz: f64, seed: u64) -> Result<Problem> {
    if dimension == 0 {
        return Err(invalid("dimension", "must be positive"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", "must be positive"));
    }
    if !(lipschitz >= mu && lipschitz.is_finite()) {
        return Err(invalid("lipschitz", "must be at least mu"));
    }
    if dimension == 1 && mu != lipschitz {
        return Err(invalid("lipschitz", "a one-dimensional spectrum needs mu == lipschitz"));
    }
    let eigenvalues: Vec<f64> = (0..dimension)
        .map(|i| match i {
            0 => mu,
            _ if i == dimension - 1 => lipschitz,
            _ => mu + (lipschitz - mu) * i as f64 / (dimension - 1) as f64,
        })
        .collect();
    let mut rng = crate::rng::coordinator_stream(seed);
    let q = quadratic::random_orthonormal(dimension, &mut rng)?;
    let b: Vec<f64> = (0..dimension)
        .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
        .collect();
    Ok(Problem::from_quadratic(Quadratic::rotated(eigenvalues, q, b), 0.0))
}

impl Problem {
    /// `½ wᵀ diag(d) w − bᵀ w`.
    pub fn quadratic_diagonal(diag: &[f64], b: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid("dimension", "must be positive"));
        }
        if diag.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                actual: b.len(),
            });
        }
        if diag.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(invalid("diag", "entries must be positive"));
        }
        Ok(Self::from_quadratic(Quadratic::diagonal(diag, b), 0.0))
    }

    fn from_quadratic(q: Quadratic, reg_lambda: f64) -> Self {
        let mu = q.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min) + reg_lambda;
        let lipschitz = q.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max) + reg_lambda;
        Self {
            kind: ProblemKind::Quadratic,
            dim: q.dim(),
            mu: Some(mu),
            lipschitz: Some(lipschitz),
            reg_lambda,
            optimum: Some(q.solve_shifted(reg_lambda)),
            model: Model::Quadratic(q),
        }
    }

    /// Logistic regression on 0/1 labels over the full dataset's features.
    pub fn logistic(dataset: &Dataset, reg_lambda: f64) -> Result<Self> {
        check_reg(reg_lambda)?;
        if dataset.is_empty() {
            return Err(invalid("dataset", "empty"));
        }
        if dataset.labels().iter().any(|&l| l > 1) {
            return Err(invalid("labels", "logistic regression needs labels in {0, 1}"));
        }
        let max_row = (0..dataset.len()).map(|i| norm_sq(dataset.row(i))).fold(0.0, f64::max);
        let curvature_bound = 0.25 * max_row;
        Ok(Self {
            kind: ProblemKind::Logistic,
            dim: dataset.features(),
            mu: Some(reg_lambda),
            lipschitz: Some(reg_lambda + curvature_bound),
            reg_lambda,
            optimum: None,
            model: Model::Logistic { curvature_bound },
        })
    }

    pub fn mlp(inputs: usize, classes: usize, reg_lambda: f64) -> Result<Self> {
        check_reg(reg_lambda)?;
        if inputs == 0 || classes < 2 {
            return Err(invalid("mlp", "needs at least one input and two classes"));
        }
        let shape = MlpShape { inputs, classes };
        Ok(Self {
            kind: ProblemKind::Mlp,
            dim: shape.param_count(),
            mu: None,
            lipschitz: None,
            reg_lambda,
            optimum: None,
            model: Model::Mlp(shape),
        })
    }

    /// Quadratic with its linear term replaced by `b`; `w*` is recomputed.
    pub fn with_linear_term(self, b: &[f64]) -> Result<Self> {
        let reg_lambda = self.reg_lambda;
        match self.model {
            Model::Quadratic(mut q) => {
                if b.len() != q.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: q.dim(),
                        actual: b.len(),
                    });
                }
                q.b = b.to_vec();
                Ok(Self::from_quadratic(q, reg_lambda))
            }
            _ => Err(invalid("problem", "only a quadratic has a linear term")),
        }
    }

    /// Same problem with a different L2 weight; constants are recomputed.
    pub fn with_reg_lambda(self, reg_lambda: f64) -> Result<Self> {
        check_reg(reg_lambda)?;
        Ok(match self.model {
            Model::Quadratic(q) => Self::from_quadratic(q, reg_lambda),
            Model::Logistic { curvature_bound } => Self {
                mu: Some(reg_lambda),
                lipschitz: Some(reg_lambda + curvature_bound),
                reg_lambda,
                ..self
            },
            Model::Mlp(_) => Self { reg_lambda, ..self },
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    /// Number of input features a shard must carry.
    pub fn input_features(&self) -> usize {
        match &self.model {
            Model::Quadratic(_) | Model::Logistic { .. } => self.dim,
            Model::Mlp(s) => s.inputs,
        }
    }

    /// `(μ, L)`; the MLP has none.
    pub fn strong_convexity(&self) -> Result<(f64, f64)> {
        match (self.mu, self.lipschitz) {
            (Some(mu), Some(l)) => Ok((mu, l)),
            _ => Err(Error::NotConvex(self.kind)),
        }
    }

    /// Quadratic matrix `A` (row-major), if this is a quadratic.
    pub fn quadratic_matrix(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Quadratic(q) => Some(&q.matrix),
            _ => None,
        }
    }

    fn check_inputs(&self, w: &[f64], shard: &DataShard, batch: &[usize]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: w.len(),
            });
        }
        if shard.features() != self.input_features() {
            return Err(Error::DimensionMismatch {
                expected: self.input_features(),
                actual: shard.features(),
            });
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&index) = batch.iter().find(|&&i| i >= shard.sample_count()) {
            return Err(Error::IndexOutOfRange {
                index,
                len: shard.sample_count(),
            });
        }
        if let Model::Mlp(s) = &self.model {
            if let Some(&i) = batch.iter().find(|&&i| shard.label(i) >= s.classes) {
                return Err(invalid(
                    "labels",
                    alloc::format!("label {} exceeds {} classes", shard.label(i), s.classes),
                ));
            }
        }
        Ok(())
    }

    fn batch_sums(&self, w: &[f64], shard: &DataShard, batch: &[usize], with_grad: bool) -> BatchSums {
        let n = self.dim;
        let mut sums = BatchSums {
            loss: 0.0,
            grad: if with_grad { alloc::vec![0.0; n] } else { Vec::new() },
            grad_sq: 0.0,
        };
        let mut sample_grad = alloc::vec![0.0; if with_grad { n } else { 0 }];
        match &self.model {
            Model::Quadratic(q) => {
                let mut aw = alloc::vec![0.0; n];
                q.apply(w, &mut aw);
                let quad = 0.5 * dot(w, &aw);
                for &i in batch {
                    let x = shard.row(i);
                    sums.loss += quad - dot(x, w);
                    if with_grad {
                        for ((g, a), xi) in sample_grad.iter_mut().zip(&aw).zip(x) {
                            *g = a - xi;
                        }
                        accumulate(&mut sums, &sample_grad);
                    }
                }
            }
            Model::Logistic { .. } => {
                for &i in batch {
                    let x = shard.row(i);
                    let y = shard.label(i) as f64;
                    let z = dot(x, w);
                    sums.loss += softplus(z) - y * z;
                    if with_grad {
                        let r = crate::math::sigmoid(z) - y;
                        for (g, xi) in sample_grad.iter_mut().zip(x) {
                            *g = r * xi;
                        }
                        accumulate(&mut sums, &sample_grad);
                    }
                }
            }
            Model::Mlp(shape) => {
                let mut scratch = alloc::vec![0.0; shape.classes];
                for &i in batch {
                    let x = shard.row(i);
                    if with_grad {
                        sample_grad.iter_mut().for_each(|g| *g = 0.0);
                        sums.loss += shape.sample(w, x, shard.label(i), &mut scratch, Some(&mut sample_grad));
                        accumulate(&mut sums, &sample_grad);
                    } else {
                        sums.loss += shape.sample(w, x, shard.label(i), &mut scratch, None);
                    }
                }
            }
        }
        sums
    }

    /// Mean per-sample loss over `batch` plus `(λ/2)‖w‖²`.
    pub fn loss(&self, w: &[f64], shard: &DataShard, batch: &[usize]) -> Result<f64> {
        self.check_inputs(w, shard, batch)?;
        let sums = self.batch_sums(w, shard, batch, false);
        Ok(sums.loss / batch.len() as f64 + 0.5 * self.reg_lambda * norm_sq(w))
    }

    /// Loss over the whole shard.
    pub fn full_loss(&self, w: &[f64], shard: &DataShard) -> Result<f64> {
        self.loss(w, shard, &shard.all_indices())
    }

    /// Loss and exact gradient over an explicit batch.
    pub fn loss_and_gradient(&self, w: &[f64], shard: &DataShard, batch: &[usize]) -> Result<(f64, GradientSample)> {
        self.check_inputs(w, shard, batch)?;
        let b = batch.len() as f64;
        let mut sums = self.batch_sums(w, shard, batch, true);
        let loss = sums.loss / b + 0.5 * self.reg_lambda * norm_sq(w);
        for g in sums.grad.iter_mut() {
            *g /= b;
        }
        // within-batch dispersion, corrected for sampling without replacement
        let sigma1_estimate = (batch.len() >= 2).then(|| {
            let spread = ((sums.grad_sq - b * norm_sq(&sums.grad)) / (b - 1.0)).max(0.0);
            let n = shard.sample_count() as f64;
            spread * ((n - b).max(0.0) / (n * b))
        });
        if self.reg_lambda != 0.0 {
            crate::math::axpy(&mut sums.grad, self.reg_lambda, w);
        }
        Ok((
            loss,
            GradientSample {
                gradient: sums.grad,
                minibatch_indices: batch.to_vec(),
                sigma1_estimate,
            },
        ))
    }

    /// Full-batch gradient over the shard.
    pub fn full_gradient(&self, w: &[f64], shard: &DataShard) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(w, shard, &shard.all_indices())?.1.gradient)
    }

    /// Minibatch gradient with indices drawn uniformly without replacement.
    /// A batch covering the whole shard uses every sample in order and
    /// consumes no randomness.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        shard: &DataShard,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<GradientSample> {
        let batch = sample_batch(shard, batch_size, rng)?;
        let (_, sample) = self.loss_and_gradient(w, shard, &batch)?;
        if !crate::math::all_finite(&sample.gradient) {
            return Err(Error::NonFinite {
                what: "gradient",
                iteration: 0,
                worker: shard.worker_id,
            });
        }
        Ok(sample)
    }

    /// Fraction of correctly classified samples; `None` for the quadratic.
    pub fn accuracy(&self, w: &[f64], data: &Dataset) -> Option<f64> {
        if data.is_empty() || w.len() != self.dim || data.features() != self.input_features() {
            return None;
        }
        let correct = match &self.model {
            Model::Quadratic(_) => return None,
            Model::Logistic { .. } => (0..data.len())
                .filter(|&i| usize::from(dot(data.row(i), w) > 0.0) == data.label(i))
                .count(),
            Model::Mlp(shape) => {
                let mut scratch = alloc::vec![0.0; shape.classes];
                (0..data.len())
                    .filter(|&i| shape.predict(w, data.row(i), &mut scratch) == data.label(i))
                    .count()
            }
        };
        Some(correct as f64 / data.len() as f64)
    }
}

fn accumulate(sums: &mut BatchSums, sample_grad: &[f64]) {
    sums.grad_sq += norm_sq(sample_grad);
    for (g, s) in sums.grad.iter_mut().zip(sample_grad) {
        *g += s;
    }
}

/// Draw `batch_size` distinct shard-local indices, sorted ascending.
pub fn sample_batch<R: Rng + ?Sized>(shard: &DataShard, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    let len = shard.sample_count();
    if batch_size == 0 {
        return Err(invalid("batch_size", "must be positive"));
    }
    if batch_size > len {
        return Err(invalid(
            "batch_size",
            alloc::format!("{batch_size} exceeds shard of {len} samples"),
        ));
    }
    if batch_size == len {
        return Ok(shard.all_indices());
    }
    let mut batch = rand::seq::index::sample(rng, len, batch_size).into_vec();
    batch.sort_unstable();
    Ok(batch)
}

/// Loss and backprop gradient of the fixed MLP on an explicit batch.
pub fn mlp_forward_backward(
    problem: &Problem,
    w: &[f64],
    shard: &DataShard,
    batch: &[usize],
) -> Result<(f64, GradientSample)> {
    if problem.kind != ProblemKind::Mlp {
        return Err(invalid("problem", "not an MLP"));
    }
    problem.loss_and_gradient(w, shard, batch)
}

#[cfg(test)]
mod tests;
