//! Pieces shared by the classifiers: per-epoch history, seeded dropout
//! sites, and tie-aware argmax.

use fgl_autodiff::{rng, Result as AdResult, Var};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percentage of validation sets classified correctly; `None` without validation data.
    pub val_accuracy: Option<f64>,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (best validation accuracy, earliest on ties).
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_accuracy,lr\n");
        for e in &self.epochs {
            let acc = e.val_accuracy.map_or_else(String::new, |a| a.to_string());
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, acc, e.lr));
        }
        out
    }
}

/// Class decision plus the full distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub region: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probs = softmax(logits);
        Self { region: argmax(&probs), probs }
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Dropout configuration for one forward pass. Each call site passes its own
/// salt so masks differ between layers yet stay reproducible.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
    pub seed: u64,
    pub training: bool,
}

impl Dropout {
    pub const EVAL: Dropout = Dropout { p: 0.0, seed: 0, training: false };

    pub fn train(p: f64, seed: u64) -> Self {
        Self { p, seed, training: true }
    }

    pub fn apply<'t>(&self, x: Var<'t>, salt: u64) -> AdResult<Var<'t>> {
        if !self.training || self.p == 0.0 {
            return Ok(x);
        }
        x.dropout(self.p, rng::mix(self.seed, salt), true)
    }
}

/// Percentage of `(prediction, truth)` pairs that agree.
pub fn accuracy_pct(pairs: impl IntoIterator<Item = (usize, usize)>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for (p, t) in pairs {
        hit += usize::from(p == t);
        n += 1;
    }
    (n > 0).then(|| 100.0 * hit as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1000.0, 1000.0, 1000.0, 1000.0]);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let q = softmax(&[-3.0, 0.5, 2.0]);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_of_nothing_is_undefined() {
        assert_eq!(accuracy_pct(Vec::new()), None);
        assert_eq!(accuracy_pct([(1, 1), (2, 0)]), Some(50.0));
    }
}
