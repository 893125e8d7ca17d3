//! One-hidden-layer perceptron: `inputs → tanh(16) → softmax(classes)`.

use crate::math::{exp, log_sum_exp, tanh};

pub const HIDDEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MlpShape {
    pub inputs: usize,
    pub classes: usize,
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        HIDDEN * self.inputs + HIDDEN + self.classes * HIDDEN + self.classes
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = HIDDEN * self.inputs;
        let w2 = b1 + HIDDEN;
        let b2 = w2 + self.classes * HIDDEN;
        (b1, w2, b2)
    }

    fn logits(&self, w: &[f64], x: &[f64], hidden: &mut [f64; HIDDEN], out: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for (h, hv) in hidden.iter_mut().enumerate() {
            let row = &w[h * self.inputs..(h + 1) * self.inputs];
            *hv = tanh(crate::math::dot(row, x) + w[b1 + h]);
        }
        for (c, o) in out.iter_mut().enumerate() {
            let row = &w[w2 + c * HIDDEN..w2 + (c + 1) * HIDDEN];
            *o = crate::math::dot(row, hidden) + w[b2 + c];
        }
    }

    pub fn predict(&self, w: &[f64], x: &[f64], scratch: &mut [f64]) -> usize {
        let mut hidden = [0.0; HIDDEN];
        self.logits(w, x, &mut hidden, scratch);
        argmax(scratch)
    }

    /// Cross-entropy of one sample; adds its gradient into `grad` if given.
    /// `scratch` must hold `classes` values.
    pub fn sample(&self, w: &[f64], x: &[f64], label: usize, scratch: &mut [f64], grad: Option<&mut [f64]>) -> f64 {
        let mut hidden = [0.0; HIDDEN];
        self.logits(w, x, &mut hidden, scratch);
        let lse = log_sum_exp(scratch);
        let loss = lse - scratch[label];
        let Some(grad) = grad else {
            return loss;
        };
        let (b1, w2, b2) = self.offsets();
        // scratch becomes dL/dlogits = softmax - onehot
        for (c, o) in scratch.iter_mut().enumerate() {
            *o = exp(*o - lse) - if c == label { 1.0 } else { 0.0 };
        }
        let mut dhidden = [0.0; HIDDEN];
        for (c, &dc) in scratch.iter().enumerate() {
            grad[b2 + c] += dc;
            let row = w2 + c * HIDDEN;
            for h in 0..HIDDEN {
                grad[row + h] += dc * hidden[h];
                dhidden[h] += dc * w[row + h];
            }
        }
        for h in 0..HIDDEN {
            let da = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
            grad[b1 + h] += da;
            let row = &mut grad[h * self.inputs..(h + 1) * self.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += da * xi;
            }
        }
        loss
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
