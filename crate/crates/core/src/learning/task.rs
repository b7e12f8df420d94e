//! Loss and gradient evaluators.
//!
//! Parameter layouts (row-major), followed by `padding` inert entries that
//! no loss term reads:
//!
//! - quadratic: `w[0..p]`, loss `½ mean (x·w − y)² + ½ l2 ‖w‖²`
//! - logistic: `W[classes × p]`, `b[classes]`, softmax cross-entropy
//! - tiny-mlp: `W1[hidden × p]`, `b1[hidden]`, `W2[classes × hidden]`,
//!   `b2[classes]`, tanh hidden layer, softmax cross-entropy

use serde::{Deserialize, Serialize};

use super::data::{ClientData, Labels};
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Quadratic,
    Logistic,
    TinyMlp,
}

pub const MAX_HIDDEN_UNITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub features: usize,
    pub classes: usize,
    pub hidden: usize,
    pub padding: usize,
    pub l2: f64,
}

impl Task {
    /// Number of parameters read by the loss.
    pub fn active_dim(&self) -> usize {
        let (p, c, h) = (self.features, self.classes, self.hidden);
        match self.kind {
            TaskKind::Quadratic => p,
            TaskKind::Logistic => c * p + c,
            TaskKind::TinyMlp => h * p + h + c * h + c,
        }
    }

    pub fn dim(&self) -> usize {
        self.active_dim() + self.padding
    }

    pub fn is_classification(&self) -> bool {
        self.kind != TaskKind::Quadratic
    }

    /// Mean loss and gradient over the rows in `batch` (all rows if `None`).
    pub fn loss_and_grad(&self, w: &ParamVector, data: &ClientData, batch: Option<&[usize]>) -> (f64, ParamVector) {
        let mut grad = vec![0.0; self.dim()];
        let rows: Vec<usize> = match batch {
            Some(b) => b.to_vec(),
            None => (0..data.len()).collect(),
        };
        let m = rows.len().max(1) as f64;
        let mut loss = 0.0;
        let w = w.as_slice();
        match self.kind {
            TaskKind::Quadratic => {
                let targets = data.targets();
                for &r in &rows {
                    let x = data.row(r);
                    let resid = dot(&w[..self.features], x) - targets[r];
                    loss += 0.5 * resid * resid;
                    for (g, xi) in grad.iter_mut().zip(x) {
                        *g += resid * xi;
                    }
                }
            }
            TaskKind::Logistic => {
                let (p, c) = (self.features, self.classes);
                let classes = data.classes();
                let mut logits = vec![0.0; c];
                for &r in &rows {
                    let x = data.row(r);
                    for (k, z) in logits.iter_mut().enumerate() {
                        *z = dot(&w[k * p..(k + 1) * p], x) + w[c * p + k];
                    }
                    let y = classes[r] as usize;
                    let probs = softmax(&logits);
                    loss -= probs[y].max(f64::MIN_POSITIVE).ln();
                    for k in 0..c {
                        let delta = probs[k] - if k == y { 1.0 } else { 0.0 };
                        for (g, xi) in grad[k * p..(k + 1) * p].iter_mut().zip(x) {
                            *g += delta * xi;
                        }
                        grad[c * p + k] += delta;
                    }
                }
            }
            TaskKind::TinyMlp => {
                let (p, c, h) = (self.features, self.classes, self.hidden);
                let (w1, rest) = w.split_at(h * p);
                let (b1, rest) = rest.split_at(h);
                let (w2, rest) = rest.split_at(c * h);
                let b2 = &rest[..c];
                let o_b1 = h * p;
                let o_w2 = o_b1 + h;
                let o_b2 = o_w2 + c * h;
                let classes = data.classes();
                let mut hid = vec![0.0; h];
                let mut logits = vec![0.0; c];
                let mut back = vec![0.0; h];
                for &r in &rows {
                    let x = data.row(r);
                    for (j, a) in hid.iter_mut().enumerate() {
                        *a = (dot(&w1[j * p..(j + 1) * p], x) + b1[j]).tanh();
                    }
                    for (k, z) in logits.iter_mut().enumerate() {
                        *z = dot(&w2[k * h..(k + 1) * h], &hid) + b2[k];
                    }
                    let y = classes[r] as usize;
                    let probs = softmax(&logits);
                    loss -= probs[y].max(f64::MIN_POSITIVE).ln();
                    back.iter_mut().for_each(|b| *b = 0.0);
                    for k in 0..c {
                        let delta = probs[k] - if k == y { 1.0 } else { 0.0 };
                        for j in 0..h {
                            grad[o_w2 + k * h + j] += delta * hid[j];
                            back[j] += delta * w2[k * h + j];
                        }
                        grad[o_b2 + k] += delta;
                    }
                    for j in 0..h {
                        let dz = back[j] * (1.0 - hid[j] * hid[j]);
                        for (g, xi) in grad[j * p..(j + 1) * p].iter_mut().zip(x) {
                            *g += dz * xi;
                        }
                        grad[o_b1 + j] += dz;
                    }
                }
            }
        }
        for g in grad.iter_mut().take(self.active_dim()) {
            *g /= m;
        }
        loss /= m;
        if self.l2 > 0.0 {
            let active = &w[..self.active_dim()];
            loss += 0.5 * self.l2 * dot(active, active);
            for (g, wi) in grad.iter_mut().zip(active) {
                *g += self.l2 * wi;
            }
        }
        (loss, ParamVector::new(grad))
    }

    pub fn loss(&self, w: &ParamVector, data: &ClientData) -> f64 {
        self.loss_and_grad(w, data, None).0
    }

    /// Predicted class for row `r`; ties go to the lowest class index.
    pub fn predict(&self, w: &ParamVector, x: &[f64]) -> usize {
        let w = w.as_slice();
        let (p, c, h) = (self.features, self.classes, self.hidden);
        let logits: Vec<f64> = match self.kind {
            TaskKind::Quadratic => return 0,
            TaskKind::Logistic => (0..c).map(|k| dot(&w[k * p..(k + 1) * p], x) + w[c * p + k]).collect(),
            TaskKind::TinyMlp => {
                let hid: Vec<f64> = (0..h)
                    .map(|j| (dot(&w[j * p..(j + 1) * p], x) + w[h * p + j]).tanh())
                    .collect();
                let o_w2 = h * p + h;
                let o_b2 = o_w2 + c * h;
                (0..c).map(|k| dot(&w[o_w2 + k * h..o_w2 + (k + 1) * h], &hid) + w[o_b2 + k]).collect()
            }
        };
        let mut best = 0;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = k;
            }
        }
        best
    }

    /// Fraction of misclassified rows.
    pub fn error_rate(&self, w: &ParamVector, data: &ClientData) -> f64 {
        let Labels::Classes(classes) = &data.labels else {
            return f64::NAN;
        };
        let wrong = classes
            .iter()
            .enumerate()
            .filter(|&(r, &y)| self.predict(w, data.row(r)) != y as usize)
            .count();
        wrong as f64 / classes.len() as f64
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
