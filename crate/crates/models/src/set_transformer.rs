//! Set Transformer classifier: scalar lift, two ISAB encoder blocks, PMA
//! pooling, an SAB decoder and a linear head.

use fgl_autodiff::nn::{glorot_bound, Bound, LayerNorm, Linear, ParamId, ParamStore};
use fgl_autodiff::{cosine_lr, rng, Adam, AdamConfig, Checkpoint, Tape, Tensor, Var};
use fgl_core::dataset::{Dataset, NormParams};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::{accuracy_pct, Dropout, EpochStats, History, Prediction};

pub const MODEL_KIND: &str = "set_transformer";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StConfig {
    pub d_hidden: usize,
    pub n_heads: usize,
    pub m_inducing: usize,
    pub k_seeds: usize,
    pub dropout_p: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub amsgrad: bool,
    pub epochs: usize,
    pub n_classes: usize,
}

impl Default for StConfig {
    fn default() -> Self {
        Self {
            d_hidden: 128,
            n_heads: 4,
            m_inducing: 16,
            k_seeds: 1,
            dropout_p: 0.1,
            lr: 1e-4,
            weight_decay: 1e-5,
            amsgrad: false,
            epochs: 50,
            n_classes: 94,
        }
    }
}

pub const D_HIDDEN_CHOICES: [usize; 4] = [128, 256, 512, 1024];
pub const HEAD_CHOICES: [usize; 3] = [2, 4, 8];
pub const INDUCING_CHOICES: [usize; 3] = [16, 32, 64];
pub const WEIGHT_DECAY_CHOICES: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];
pub const EPOCH_CHOICES: [usize; 2] = [50, 75];

impl StConfig {
    /// Structural checks needed to build and train a model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_hidden == 0 || self.n_heads == 0 || self.d_hidden % self.n_heads != 0 {
            return bad(format!("d_hidden {} must be a positive multiple of n_heads {}", self.d_hidden, self.n_heads));
        }
        if self.m_inducing == 0 || self.k_seeds == 0 || self.n_classes == 0 {
            return bad("m_inducing, k_seeds and n_classes must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }.validate()?;
        Ok(())
    }

    /// Departures from the benchmark hyperparameter grid.
    pub fn search_space_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !D_HIDDEN_CHOICES.contains(&self.d_hidden) {
            v.push(format!("d_hidden {}", self.d_hidden));
        }
        if !HEAD_CHOICES.contains(&self.n_heads) {
            v.push(format!("n_heads {}", self.n_heads));
        }
        if !INDUCING_CHOICES.contains(&self.m_inducing) {
            v.push(format!("m_inducing {}", self.m_inducing));
        }
        if !(0.0..=0.5).contains(&self.dropout_p) {
            v.push(format!("dropout_p {}", self.dropout_p));
        }
        if !(1e-5..=1e-3).contains(&self.lr) {
            v.push(format!("lr {}", self.lr));
        }
        if !WEIGHT_DECAY_CHOICES.contains(&self.weight_decay) {
            v.push(format!("weight_decay {}", self.weight_decay));
        }
        if !EPOCH_CHOICES.contains(&self.epochs) {
            v.push(format!("epochs {}", self.epochs));
        }
        v
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, amsgrad: self.amsgrad, ..AdamConfig::default() }
    }
}

/// Row-wise feed-forward `Linear → relu → dropout → Linear`.
#[derive(Debug, Clone, Copy)]
pub struct Rff {
    pub inner: Linear,
    pub outer: Linear,
    salt: u64,
}

impl Rff {
    pub fn new<R: rand::Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, salt: u64, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.ff1"), d, d, rng),
            outer: Linear::new(store, &format!("{name}.ff2"), d, d, rng),
            salt,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, drop: &Dropout) -> Result<Var<'t>> {
        let h = drop.apply(self.inner.forward(p, x)?.relu(), self.salt)?;
        Ok(self.outer.forward(p, h)?)
    }
}

/// Multihead attention block: `H = LN(X + MH(X, Y, Y))`, `out = LN(H + rFF(H))`.
#[derive(Debug, Clone, Copy)]
pub struct Mab {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub ff: Rff,
    pub heads: usize,
    salt: u64,
}

impl Mab {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        salt: u64,
        rng: &mut R,
    ) -> Self {
        Self {
            wq: Linear::new(store, &format!("{name}.q"), d, d, rng),
            wk: Linear::new(store, &format!("{name}.k"), d, d, rng),
            wv: Linear::new(store, &format!("{name}.v"), d, d, rng),
            wo: Linear::new(store, &format!("{name}.o"), d, d, rng),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ff: Rff::new(store, name, d, rng::mix(salt, 1), rng),
            heads,
            salt,
        }
    }

    /// Attention weights of every head, each `[rows(x), rows(y)]`.
    pub fn attention<'t>(&self, p: &Bound<'t>, x: Var<'t>, y: Var<'t>) -> Result<Vec<Var<'t>>> {
        let (q, k) = (self.wq.forward(p, x)?, self.wk.forward(p, y)?);
        let d = q.shape()[1];
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        (0..self.heads)
            .map(|h| {
                let qh = q.narrow(1, h * dh, dh)?;
                let kh = k.narrow(1, h * dh, dh)?;
                Ok(qh.matmul(kh.transpose()?)?.scale(scale).softmax(1)?)
            })
            .collect()
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, y: Var<'t>, drop: &Dropout) -> Result<Var<'t>> {
        if x.shape().len() != 2 || y.shape().len() != 2 || x.shape()[1] != y.shape()[1] {
            return Err(Error::Config(format!("mab inputs {:?} and {:?} must be n×d and m×d", x.shape(), y.shape())));
        }
        let v = self.wv.forward(p, y)?;
        let dh = v.shape()[1] / self.heads;
        let heads = self
            .attention(p, x, y)?
            .into_iter()
            .enumerate()
            .map(|(h, a)| Ok(a.matmul(v.narrow(1, h * dh, dh)?)?))
            .collect::<Result<Vec<_>>>()?;
        let tape = x.tape();
        let mh = self.wo.forward(p, tape.concat(&heads, 1)?)?;
        let mh = drop.apply(mh, self.salt)?;
        let h = self.ln1.forward(p, x.add(mh)?)?;
        let f = self.ff.forward(p, h, drop)?;
        Ok(self.ln2.forward(p, h.add(f)?)?)
    }
}

/// Self-attention block: `MAB(X, X)`.
pub fn sab<'t>(mab: &Mab, p: &Bound<'t>, x: Var<'t>, drop: &Dropout) -> Result<Var<'t>> {
    mab.forward(p, x, x, drop)
}

/// Induced set attention: `MAB(X, MAB(I, X))` with `m` learned inducing points.
#[derive(Debug, Clone, Copy)]
pub struct Isab {
    pub inducing: ParamId,
    pub to_inducing: Mab,
    pub from_inducing: Mab,
}

impl Isab {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        m: usize,
        salt: u64,
        rng: &mut R,
    ) -> Self {
        let inducing = store.add(format!("{name}.inducing"), Tensor::uniform(&[m, d], glorot_bound(m, d), rng));
        Self {
            inducing,
            to_inducing: Mab::new(store, &format!("{name}.mab0"), d, heads, rng::mix(salt, 10), rng),
            from_inducing: Mab::new(store, &format!("{name}.mab1"), d, heads, rng::mix(salt, 11), rng),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, drop: &Dropout) -> Result<Var<'t>> {
        let h = self.to_inducing.forward(p, p.var(self.inducing), x, drop)?;
        self.from_inducing.forward(p, x, h, drop)
    }
}

/// Pooling by multihead attention: `MAB(S, rFF(Z))` with `k` learned seeds.
#[derive(Debug, Clone, Copy)]
pub struct Pma {
    pub seeds: ParamId,
    pub ff: Rff,
    pub mab: Mab,
}

impl Pma {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        k: usize,
        salt: u64,
        rng: &mut R,
    ) -> Self {
        let seeds = store.add(format!("{name}.seeds"), Tensor::uniform(&[k, d], glorot_bound(k, d), rng));
        Self {
            seeds,
            ff: Rff::new(store, &format!("{name}.pre"), d, rng::mix(salt, 20), rng),
            mab: Mab::new(store, &format!("{name}.mab"), d, heads, rng::mix(salt, 21), rng),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, z: Var<'t>, drop: &Dropout) -> Result<Var<'t>> {
        if z.shape()[0] == 0 {
            return Err(Error::EmptySet);
        }
        let zf = self.ff.forward(p, z, drop)?;
        self.mab.forward(p, p.var(self.seeds), zf, drop)
    }
}

#[derive(Debug, Clone)]
struct Layout {
    lift: Linear,
    enc1: Isab,
    enc2: Isab,
    pool: Pma,
    dec: Mab,
    head: Linear,
}

/// A Set Transformer with its parameters and the normalization of its inputs.
#[derive(Debug, Clone)]
pub struct SetTransformer {
    pub cfg: StConfig,
    pub store: ParamStore,
    pub norm: Option<NormParams>,
    layout: Layout,
}

impl SetTransformer {
    pub fn new(cfg: StConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, 0x5e7);
        let mut store = ParamStore::new();
        let (d, h) = (cfg.d_hidden, cfg.n_heads);
        let layout = Layout {
            lift: Linear::new_fan_in(&mut store, "lift", 1, d, &mut r),
            enc1: Isab::new(&mut store, "enc1", d, h, cfg.m_inducing, 1, &mut r),
            enc2: Isab::new(&mut store, "enc2", d, h, cfg.m_inducing, 2, &mut r),
            pool: Pma::new(&mut store, "pool", d, h, cfg.k_seeds, 3, &mut r),
            dec: Mab::new(&mut store, "dec", d, h, 4, &mut r),
            head: Linear::new(&mut store, "head", d, cfg.n_classes, &mut r),
        };
        Ok(Self { cfg, store, norm: None, layout })
    }

    /// Logits `[k_seeds, n_classes]` for already-normalized values.
    pub fn forward<'t>(&self, p: &Bound<'t>, tape: &'t Tape, values: &[f64], drop: &Dropout) -> Result<Var<'t>> {
        if values.is_empty() {
            return Err(Error::EmptySet);
        }
        let l = &self.layout;
        let x = l.lift.forward(p, tape.constant(Tensor::column(values)))?;
        let z = l.enc2.forward(p, l.enc1.forward(p, x, drop)?, drop)?;
        let pooled = l.pool.forward(p, z, drop)?;
        let decoded = sab(&l.dec, p, pooled, drop)?;
        Ok(l.head.forward(p, decoded)?)
    }

    /// Eval-mode logits for normalized values (first pooled seed).
    pub fn logits(&self, values: &[f64]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let out = self.forward(&p, &tape, values, &Dropout::EVAL)?.value();
        Ok(out.row(0).to_vec())
    }

    pub fn predict_normalized(&self, values: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(values)?))
    }

    /// Applies the stored normalization to raw seconds, then classifies.
    pub fn predict(&self, raw_values: &[f64]) -> Result<Prediction> {
        let norm = self.norm.ok_or(Error::NotNormalized("prediction"))?;
        let xs: Vec<f64> = raw_values.iter().map(|v| norm.apply(*v)).collect();
        self.predict_normalized(&xs)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            MODEL_KIND,
            serde_json::to_value(self.cfg)?,
            serde_json::to_value(self.norm)?,
            &self.store,
        ))
    }

    pub fn from_checkpoint(chk: &Checkpoint) -> Result<Self> {
        chk.expect_kind(MODEL_KIND)?;
        let cfg: StConfig = serde_json::from_value(chk.config.clone())?;
        let mut m = Self::new(cfg, 0)?;
        m.store.load(chk.named_tensors()?)?;
        m.norm = serde_json::from_value(chk.norm.clone())?;
        Ok(m)
    }
}

/// Optional per-visit transform of a training set: `(values, label, seed) → values`.
pub type AugmentFn<'a> = dyn Fn(&[f64], usize, u64) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SetTransformer,
    pub history: History,
}

fn labeled_sets(d: &Dataset, n_classes: usize) -> Result<Vec<(&[f64], usize)>> {
    d.usable()
        .map(|s| {
            if s.label >= n_classes {
                Err(Error::UnknownLabel { label: s.label, n_classes })
            } else {
                Ok((s.values.as_slice(), s.label))
            }
        })
        .collect()
}

/// Validation accuracy in eval mode, `None` when there is nothing to score.
pub fn accuracy_on(model: &SetTransformer, sets: &[(&[f64], usize)]) -> Result<Option<f64>> {
    let preds = sets.iter().map(|(v, y)| Ok((model.predict_normalized(v)?.region, *y))).collect::<Result<Vec<_>>>()?;
    Ok(accuracy_pct(preds))
}

/// Per-set training with cross-entropy, Adam and a per-step cosine schedule.
/// Keeps the parameters of the epoch with the best validation accuracy.
pub fn train(
    cfg: &StConfig,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
    augment: Option<&AugmentFn<'_>>,
) -> Result<Trained> {
    cfg.validate()?;
    let norm = train.norm.ok_or(Error::NotNormalized("training"))?;
    if val.norm.is_none() && !val.is_empty() {
        return Err(Error::NotNormalized("validation"));
    }
    let train_sets = labeled_sets(train, cfg.n_classes)?;
    let val_sets = labeled_sets(val, cfg.n_classes)?;
    if train_sets.is_empty() {
        return Err(Error::NoTrainingData(format!("all {} training sets are empty or flagged", train.len())));
    }
    if train_sets.len() < train.len() {
        log::info!("training on {}/{} sets with detections", train_sets.len(), train.len());
    }

    let mut model = SetTransformer::new(*cfg, seed)?;
    model.norm = Some(norm);
    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(Trained { model, history });
    }

    let mut opt = Adam::new(cfg.adam())?;
    let total = cfg.epochs * train_sets.len();
    let mut order: Vec<usize> = (0..train_sets.len()).collect();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, 0x0e00 + epoch as u64));
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr;
        for &i in &order {
            let (values, label) = train_sets[i];
            let step_seed = rng::mix(seed, step as u64);
            let augmented;
            let input = match augment {
                Some(f) => {
                    augmented = f(values, label, step_seed)?;
                    augmented.as_slice()
                }
                None => values,
            };
            let tape = Tape::new();
            let p = model.store.bind(&tape);
            let drop = Dropout::train(cfg.dropout_p, step_seed);
            let logits = model.forward(&p, &tape, input, &drop)?;
            let loss = logits.log_softmax(1)?.narrow(1, label, 1)?.mean_all().scale(-1.0);
            loss_sum += loss.item();
            let grads = p.grads(&tape.backward(loss)?);
            lr = cosine_lr(step, total, cfg.lr, 0.0)?;
            opt.step_with_lr(model.store.tensors_mut(), &grads, lr)?;
            step += 1;
        }
        let val_accuracy = accuracy_on(&model, &val_sets)?;
        history.epochs.push(EpochStats { epoch, train_loss: loss_sum / order.len() as f64, val_accuracy, lr });
        let score = val_accuracy.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.store.clone()));
            history.best_epoch = Some(epoch);
        }
        log::debug!("epoch {epoch}: loss {:.4} val {:?}", loss_sum / order.len() as f64, val_accuracy);
    }
    if val_sets.is_empty() {
        history.best_epoch = Some(cfg.epochs - 1);
    } else if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(Trained { model, history })
}
