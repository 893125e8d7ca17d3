use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::math::{dot, norm};

/// `f(w) = ½ wᵀ A w − bᵀ w` with `A = Q diag(λ) Qᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Quadratic {
    /// Row-major `n × n`.
    pub matrix: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Column-major eigenvectors; `None` when `A` is diagonal.
    pub rotation: Option<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn diagonal(diag: &[f64], b: &[f64]) -> Self {
        let n = diag.len();
        let mut matrix = alloc::vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = diag[i];
        }
        Self {
            matrix,
            eigenvalues: diag.to_vec(),
            rotation: None,
            b: b.to_vec(),
        }
    }

    pub fn rotated(eigenvalues: Vec<f64>, q: Vec<f64>, b: Vec<f64>) -> Self {
        let n = eigenvalues.len();
        let mut matrix = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // d_k * (q_ik * q_jk) is symmetric in (i, j) bit for bit.
                matrix[i * n + j] = (0..n).map(|k| eigenvalues[k] * (q[k * n + i] * q[k * n + j])).sum();
            }
        }
        Self {
            matrix,
            eigenvalues,
            rotation: Some(q),
            b,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.matrix[i * n..(i + 1) * n], w);
        }
    }

    /// Solve `(A + shift·I) w = b` through the eigendecomposition.
    pub fn solve_shifted(&self, shift: f64) -> Vec<f64> {
        let n = self.dim();
        match &self.rotation {
            None => (0..n).map(|i| self.b[i] / (self.eigenvalues[i] + shift)).collect(),
            Some(q) => {
                let coeffs: Vec<f64> = (0..n)
                    .map(|k| dot(&q[k * n..(k + 1) * n], &self.b) / (self.eigenvalues[k] + shift))
                    .collect();
                (0..n).map(|i| (0..n).map(|k| coeffs[k] * q[k * n + i]).sum()).collect()
            }
        }
    }
}

/// Random orthonormal basis by modified Gram–Schmidt on a Gaussian matrix.
/// Returned column-major: vector `k` occupies `q[k*n..(k+1)*n]`.
pub(crate) fn random_orthonormal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut q: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    for k in 0..n {
        for j in 0..k {
            let (done, rest) = q.split_at_mut(k * n);
            let prev = &done[j * n..(j + 1) * n];
            let cur = &mut rest[..n];
            let proj = dot(prev, cur);
            for (c, p) in cur.iter_mut().zip(prev) {
                *c -= proj * p;
            }
        }
        let cur = &mut q[k * n..(k + 1) * n];
        let len = norm(cur);
        if len < 1e-8 {
            return Err(invalid("seed", "degenerate random basis"));
        }
        cur.iter_mut().for_each(|c| *c /= len);
    }
    Ok(q)
}
