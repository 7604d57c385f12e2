//! Feed-forward classifier over GMM feature vectors (the baseline path).

use fgl_autodiff::nn::{Mlp, ParamStore};
use fgl_autodiff::{rng, Adam, AdamConfig, Checkpoint, Tape, Tensor};
use fgl_core::dataset::NormParams;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::{accuracy_pct, EpochStats, History, Prediction};

pub const MODEL_KIND: &str = "gmm_mlp";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub n_hidden_layers: usize,
    pub width: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub n_classes: usize,
    /// Mixture components fitted per set when features come from raw sets.
    pub components: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { n_hidden_layers: 2, width: 128, lr: 1e-3, dropout: 0.1, epochs: 50, n_classes: 94, components: 3 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.n_classes == 0 {
            return Err(Error::Config("width and n_classes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(2..=crate::gmm::K_MAX).contains(&self.components) {
            return Err(Error::Config(format!("components {} outside [2, {}]", self.components, crate::gmm::K_MAX)));
        }
        AdamConfig::with_lr(self.lr).validate()?;
        Ok(())
    }

    pub fn search_space_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(1..=3).contains(&self.n_hidden_layers) {
            v.push(format!("n_hidden_layers {}", self.n_hidden_layers));
        }
        if !(64..=512).contains(&self.width) {
            v.push(format!("width {}", self.width));
        }
        if !(1e-5..=1e-3).contains(&self.lr) {
            v.push(format!("lr {}", self.lr));
        }
        if !(0.0..=0.4).contains(&self.dropout) {
            v.push(format!("dropout {}", self.dropout));
        }
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    mlp: MlpConfig,
    input_dim: usize,
}

#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub cfg: MlpConfig,
    pub input_dim: usize,
    pub store: ParamStore,
    /// Normalization of the raw circulation times the features were built from.
    pub norm: Option<NormParams>,
    net: Mlp,
}

impl MlpClassifier {
    pub fn new(cfg: MlpConfig, input_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let net =
            Mlp::new(&mut store, "mlp", input_dim, cfg.width, cfg.n_hidden_layers, cfg.n_classes, &mut rng::stream(seed, 0x31));
        Ok(Self { cfg, input_dim, store, norm: None, net })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Config(format!("expected {} features, got {}", self.input_dim, x.len())));
        }
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let input = tape.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
        Ok(self.net.forward(&p, input, None, false)?.value().into_data())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(x)?))
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = Meta { mlp: self.cfg, input_dim: self.input_dim };
        Ok(Checkpoint::new(MODEL_KIND, serde_json::to_value(meta)?, serde_json::to_value(self.norm)?, &self.store))
    }

    pub fn from_checkpoint(chk: &Checkpoint) -> Result<Self> {
        chk.expect_kind(MODEL_KIND)?;
        let meta: Meta = serde_json::from_value(chk.config.clone())?;
        let mut m = Self::new(meta.mlp, meta.input_dim, 0)?;
        m.store.load(chk.named_tensors()?)?;
        m.norm = serde_json::from_value(chk.norm.clone())?;
        Ok(m)
    }
}

/// Produces the input vector for training example `index` on one visit.
pub type InputFn<'a> = dyn Fn(usize, u64) -> Result<Vec<f64>> + 'a;

/// Per-example NLL training with Adam; `inputs` is consulted on every visit so
/// callers can recompute features from freshly augmented sets.
pub fn train_mlp_with(
    cfg: &MlpConfig,
    input_dim: usize,
    labels: &[usize],
    inputs: &InputFn<'_>,
    val: &[(Vec<f64>, usize)],
    seed: u64,
) -> Result<(MlpClassifier, History)> {
    if labels.is_empty() {
        return Err(Error::NoTrainingData("no feature vectors".into()));
    }
    if let Some(&label) = labels.iter().chain(val.iter().map(|(_, y)| y)).find(|&&y| y >= cfg.n_classes) {
        return Err(Error::UnknownLabel { label, n_classes: cfg.n_classes });
    }
    let mut model = MlpClassifier::new(*cfg, input_dim, seed)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr))?;
    let mut history = History::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, 0x0e00 + epoch as u64));
        let mut loss_sum = 0.0;
        for &i in &order {
            let visit_seed = rng::mix(seed, step);
            let x = inputs(i, visit_seed)?;
            if x.len() != input_dim {
                return Err(Error::Config(format!("example {i} has {} features, expected {input_dim}", x.len())));
            }
            let tape = Tape::new();
            let p = model.store.bind(&tape);
            let input = tape.constant(Tensor::new(vec![1, input_dim], x)?);
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, visit_seed));
            let logits = model.net.forward(&p, input, dropout, true)?;
            let loss = logits.log_softmax(1)?.narrow(1, labels[i], 1)?.mean_all().scale(-1.0);
            loss_sum += loss.item();
            let grads = p.grads(&tape.backward(loss)?);
            opt.step(model.store.tensors_mut(), &grads)?;
            step += 1;
        }
        let preds = val.iter().map(|(x, y)| Ok((model.predict(x)?.region, *y))).collect::<Result<Vec<_>>>()?;
        let val_accuracy = accuracy_pct(preds);
        history.epochs.push(EpochStats { epoch, train_loss: loss_sum / labels.len() as f64, val_accuracy, lr: cfg.lr });
        let score = val_accuracy.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.store.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    if val.is_empty() {
        history.best_epoch = cfg.epochs.checked_sub(1);
    } else if let Some((_, store)) = best {
        model.store = store;
    }
    Ok((model, history))
}

/// Training on fixed feature vectors.
pub fn train_mlp(
    cfg: &MlpConfig,
    train: &[(Vec<f64>, usize)],
    val: &[(Vec<f64>, usize)],
    seed: u64,
) -> Result<(MlpClassifier, History)> {
    let dim = train.first().map(|(x, _)| x.len()).ok_or_else(|| Error::NoTrainingData("no feature vectors".into()))?;
    let labels: Vec<usize> = train.iter().map(|(_, y)| *y).collect();
    train_mlp_with(cfg, dim, &labels, &|i, _| Ok(train[i].0.clone()), val, seed)
}

pub fn predict_mlp(model: &MlpClassifier, x: &[f64]) -> Result<Prediction> {
    model.predict(x)
}
