//! α-balanced focal cross-entropy over the auxiliary and main heads.
//!
//! Per sample, with `p` the softmax probability of the true class `y`:
//! `loss = -alpha[y] * (1 - p)^gamma * ln(p)`, averaged over the batch.
//! `gamma = 0` gives the α-balanced cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeadOutputs;
use crate::tensor::Tensor;

/// Auxiliary heads 1-4, then the main head.
pub const DEFAULT_HEAD_WEIGHTS: [f32; 5] = [0.025, 0.05, 0.5, 0.2, 1.0];
pub const DEFAULT_GAMMA: f32 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalLossConfig {
    pub gamma: f32,
    /// Per-class weight, indexed by class.
    pub alpha: Vec<f32>,
    /// Auxiliary head weights in brick order, main head weight last.
    pub head_weights: Vec<f32>,
}

impl FocalLossConfig {
    /// All-ones α with the default γ and head weights.
    pub fn uniform(num_classes: usize) -> Self {
        FocalLossConfig {
            gamma: DEFAULT_GAMMA,
            alpha: vec![1.0; num_classes],
            head_weights: DEFAULT_HEAD_WEIGHTS.to_vec(),
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.alpha.len() != num_classes {
            return Err(Error::config(format!(
                "alpha has {} entries for {num_classes} classes",
                self.alpha.len()
            )));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::config("alpha entries must be positive"));
        }
        match self.head_weights.split_last() {
            Some((&main, aux)) if main > 0.0 && aux.iter().all(|&w| w >= 0.0) => Ok(()),
            _ => Err(Error::config(
                "head_weights needs non-negative aux weights and a positive main weight",
            )),
        }
    }

    /// Weights for a model with `num_aux` auxiliary heads: the first
    /// `num_aux` auxiliary weights followed by the main weight.
    pub fn weights_for(&self, num_aux: usize) -> Result<Vec<f32>> {
        let (&main, aux) = self
            .head_weights
            .split_last()
            .ok_or_else(|| Error::config("head_weights is empty"))?;
        if aux.len() < num_aux {
            return Err(Error::config(format!(
                "{} head weights cannot cover {num_aux} auxiliary heads plus the main head",
                self.head_weights.len()
            )));
        }
        let mut w = aux[..num_aux].to_vec();
        w.push(main);
        Ok(w)
    }
}

/// `(1 - p)^gamma`, the focal down-weighting of well-classified samples.
pub fn modulating_factor(p: f64, gamma: f64) -> f64 {
    (1.0 - p).max(0.0).powf(gamma)
}

/// Batch-mean focal loss and its gradient with respect to `logits`.
pub fn focal_ce(
    logits: &Tensor,
    targets: &[usize],
    gamma: f32,
    alpha: &[f32],
) -> Result<(f32, Tensor)> {
    let (n, k) = logits.dims2("focal_ce")?;
    if targets.len() != n {
        return Err(Error::Dimension {
            op: "focal_ce",
            axis: "batch",
            expected: n,
            actual: targets.len(),
        });
    }
    if alpha.len() != k {
        return Err(Error::Dimension {
            op: "focal_ce",
            axis: "alpha",
            expected: k,
            actual: alpha.len(),
        });
    }
    if gamma < 0.0 {
        return Err(Error::config("gamma must be >= 0"));
    }
    let gamma = gamma as f64;
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0f64;
    let mut probs = vec![0.0f64; k];
    for (i, &y) in targets.iter().enumerate() {
        if y >= k {
            return Err(Error::Index {
                index: y,
                num_classes: k,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0;
        for (p, &z) in probs.iter_mut().zip(row) {
            *p = (z as f64 - max).exp();
            sum += *p;
        }
        let log_p = row[y] as f64 - max - sum.ln();
        let p = log_p.exp();
        // 1 - p without cancellation when p is close to 1.
        let q = -log_p.exp_m1();
        let a = alpha[y] as f64;
        let factor = q.powf(gamma);
        total += -a * factor * log_p;

        let d_mod = if gamma == 0.0 || q <= 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * p * log_p
        };
        let d_log_p = -a * (factor - d_mod);
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            let s = probs[j] / sum;
            let onehot = if j == y { 1.0 } else { 0.0 };
            *gj = (d_log_p * (onehot - s) / n as f64) as f32;
        }
    }
    Ok(((total / n as f64) as f32, grad))
}

/// α-balanced cross-entropy, `-alpha[y] * ln(p_y)`; identical to
/// [`focal_ce`] with `gamma = 0`.
pub fn balanced_ce(logits: &Tensor, targets: &[usize], alpha: &[f32]) -> Result<(f32, Tensor)> {
    focal_ce(logits, targets, 0.0, alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    /// Unweighted loss of each auxiliary head, then the main head.
    pub per_head: Vec<f32>,
    pub weights: Vec<f32>,
    pub total: f32,
    pub batch_size: usize,
}

impl LossReport {
    pub fn main(&self) -> f32 {
        *self.per_head.last().expect("at least the main head")
    }
}

/// `sum(weights[i] * per_head[i])`.
pub fn combine_heads(per_head: &[f32], weights: &[f32]) -> Result<f32> {
    if per_head.len() != weights.len() {
        return Err(Error::config(format!(
            "{} head losses but {} head weights",
            per_head.len(),
            weights.len()
        )));
    }
    Ok(per_head
        .iter()
        .zip(weights)
        .map(|(&l, &w)| l as f64 * w as f64)
        .sum::<f64>() as f32)
}

/// Weighted focal loss over every head, and the per-head logit gradients of
/// the weighted total.
pub fn multi_head_loss(
    outputs: &HeadOutputs,
    targets: &[usize],
    config: &FocalLossConfig,
) -> Result<(LossReport, HeadOutputs)> {
    let weights = config.weights_for(outputs.aux.len())?;
    let mut per_head = Vec::with_capacity(weights.len());
    let mut grads = Vec::with_capacity(weights.len());
    for (logits, &w) in outputs.iter().zip(&weights) {
        let (loss, mut grad) = focal_ce(logits, targets, config.gamma, &config.alpha)?;
        grad.scale(w);
        per_head.push(loss);
        grads.push(grad);
    }
    let total = combine_heads(&per_head, &weights)?;
    let main = grads.pop().expect("main head gradient");
    Ok((
        LossReport {
            per_head,
            weights,
            total,
            batch_size: targets.len(),
        },
        HeadOutputs { aux: grads, main },
    ))
}

/// Inverse class frequency, normalised to mean 1.
pub fn alpha_from_frequencies(class_counts: &[usize]) -> Result<Vec<f32>> {
    if class_counts.is_empty() {
        return Err(Error::config("no classes"));
    }
    if let Some(k) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::config(format!("class {k} has no training samples")));
    }
    let inv: Vec<f64> = class_counts.iter().map(|&c| 1.0 / c as f64).collect();
    let mean = inv.iter().sum::<f64>() / inv.len() as f64;
    Ok(inv.iter().map(|v| (v / mean) as f32).collect())
}
