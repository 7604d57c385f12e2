//! Seeded random search over declared hyperparameter domains.

use std::collections::BTreeMap;

use fgl_autodiff::rng;
use fgl_models::generative::GenConfig;
use fgl_models::mlp::MlpConfig;
use fgl_models::set_transformer::{
    StConfig, D_HIDDEN_CHOICES, EPOCH_CHOICES, HEAD_CHOICES, INDUCING_CHOICES, WEIGHT_DECAY_CHOICES,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `10^U(log10 lo, log10 hi)`.
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Inclusive integer range.
    Int { lo: i64, hi: i64 },
    Choice(Vec<f64>),
    Bool,
}

impl Domain {
    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match self {
            Domain::LogUniform { lo, hi } => 10f64.powf(r.random_range(lo.log10()..=hi.log10())),
            Domain::Uniform { lo, hi } => r.random_range(*lo..=*hi),
            Domain::Int { lo, hi } => r.random_range(*lo..=*hi) as f64,
            Domain::Choice(options) => options[r.random_range(0..options.len())],
            Domain::Bool => f64::from(u8::from(r.random_bool(0.5))),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match self {
            Domain::LogUniform { lo, hi } | Domain::Uniform { lo, hi } => (*lo..=*hi).contains(&v),
            Domain::Int { lo, hi } => v.fract() == 0.0 && (*lo as f64..=*hi as f64).contains(&v),
            Domain::Choice(options) => options.contains(&v),
            Domain::Bool => v == 0.0 || v == 1.0,
        }
    }
}

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<(String, Domain)>,
}

fn choices<T: Copy + Into<f64>>(xs: &[T]) -> Domain {
    Domain::Choice(xs.iter().map(|&x| x.into()).collect())
}

fn usize_choices(xs: &[usize]) -> Domain {
    Domain::Choice(xs.iter().map(|&x| x as f64).collect())
}

impl SearchSpace {
    fn of(params: Vec<(&str, Domain)>) -> Self {
        Self { params: params.into_iter().map(|(k, d)| (k.to_string(), d)).collect() }
    }

    pub fn set_transformer() -> Self {
        Self::of(vec![
            ("d_hidden", usize_choices(&D_HIDDEN_CHOICES)),
            ("n_heads", usize_choices(&HEAD_CHOICES)),
            ("m_inducing", usize_choices(&INDUCING_CHOICES)),
            ("dropout_p", Domain::Uniform { lo: 0.0, hi: 0.5 }),
            ("lr", Domain::LogUniform { lo: 1e-5, hi: 1e-3 }),
            ("weight_decay", choices(&WEIGHT_DECAY_CHOICES)),
            ("amsgrad", Domain::Bool),
            ("epochs", usize_choices(&EPOCH_CHOICES)),
        ])
    }

    pub fn baseline() -> Self {
        Self::of(vec![
            ("n_hidden_layers", Domain::Int { lo: 1, hi: 3 }),
            ("width", Domain::Int { lo: 64, hi: 512 }),
            ("lr", Domain::LogUniform { lo: 1e-5, hi: 1e-3 }),
            ("dropout", Domain::Uniform { lo: 0.0, hi: 0.4 }),
            ("components", Domain::Int { lo: 2, hi: 5 }),
        ])
    }

    pub fn generator() -> Self {
        Self::of(vec![
            ("hidden_width", Domain::Int { lo: 32, hi: 256 }),
            ("n_layers", Domain::Int { lo: 1, hi: 3 }),
            ("lr", Domain::LogUniform { lo: 1e-5, hi: 1e-3 }),
            ("latent_dim", Domain::Int { lo: 2, hi: 16 }),
            ("label_embed_dim", Domain::Int { lo: 4, hi: 16 }),
        ])
    }

    /// Trial `index` of a search seeded with `seed`; independent of every other index.
    pub fn sample(&self, seed: u64, index: usize) -> Params {
        let mut r = rng::stream(seed, 0x7a1 + index as u64);
        self.params.iter().map(|(k, d)| (k.clone(), d.sample(&mut r))).collect()
    }

    pub fn contains(&self, p: &Params) -> bool {
        self.params.len() == p.len() && self.params.iter().all(|(k, d)| p.get(k).is_some_and(|v| d.contains(*v)))
    }
}

fn get(p: &Params, key: &str) -> Result<f64> {
    p.get(key).copied().ok_or_else(|| Error::Search(format!("sample lacks {key}")))
}

pub fn st_config_from(p: &Params, base: StConfig) -> Result<StConfig> {
    Ok(StConfig {
        d_hidden: get(p, "d_hidden")? as usize,
        n_heads: get(p, "n_heads")? as usize,
        m_inducing: get(p, "m_inducing")? as usize,
        dropout_p: get(p, "dropout_p")?,
        lr: get(p, "lr")?,
        weight_decay: get(p, "weight_decay")?,
        amsgrad: get(p, "amsgrad")? == 1.0,
        epochs: get(p, "epochs")? as usize,
        ..base
    })
}

pub fn mlp_config_from(p: &Params, base: MlpConfig) -> Result<MlpConfig> {
    Ok(MlpConfig {
        n_hidden_layers: get(p, "n_hidden_layers")? as usize,
        width: get(p, "width")? as usize,
        lr: get(p, "lr")?,
        dropout: get(p, "dropout")?,
        components: get(p, "components")? as usize,
        ..base
    })
}

pub fn gen_config_from(p: &Params, base: GenConfig) -> Result<GenConfig> {
    Ok(GenConfig {
        hidden_width: get(p, "hidden_width")? as usize,
        n_layers: get(p, "n_layers")? as usize,
        lr: get(p, "lr")?,
        latent_dim: get(p, "latent_dim")? as usize,
        label_embed_dim: get(p, "label_embed_dim")? as usize,
        ..base
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub params: Params,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Evaluates `budget` independent samples and keeps the highest objective;
/// ties go to the earliest trial. A failing objective is recorded on its trial
/// and the search continues.
pub fn random_search<F, E>(space: &SearchSpace, budget: usize, seed: u64, objective: F) -> Result<SearchOutcome>
where
    F: Fn(&Params, u64) -> std::result::Result<f64, E> + Sync,
    E: std::fmt::Display,
{
    if budget == 0 {
        return Err(Error::Search("budget must be >= 1".into()));
    }
    let trials: Vec<Trial> = (0..budget)
        .into_par_iter()
        .map(|index| {
            let params = space.sample(seed, index);
            let trial_seed = rng::mix(seed, index as u64);
            let (objective, error) = match objective(&params, trial_seed) {
                Ok(v) if v.is_finite() => (Some(v), None),
                Ok(v) => (None, Some(format!("non-finite objective {v}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(e) = &error {
                log::warn!("trial {index} failed: {e}");
            }
            Trial { index, seed: trial_seed, params, objective, error }
        })
        .collect();
    let best = trials
        .iter()
        .filter_map(|t| t.objective.map(|v| (t.index, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Search(format!("all {budget} trials failed")))?;
    Ok(SearchOutcome { best, trials })
}

/// One row per trial; parameter columns follow the space's declaration order.
pub fn trials_csv(space: &SearchSpace, trials: &[Trial]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["trial".to_string(), "seed".to_string()];
    header.extend(space.params.iter().map(|(k, _)| k.clone()));
    header.extend(["objective".to_string(), "error".to_string()]);
    w.write_record(&header)?;
    for t in trials {
        let mut row = vec![t.index.to_string(), t.seed.to_string()];
        row.extend(space.params.iter().map(|(k, _)| t.params.get(k).map_or(String::new(), f64::to_string)));
        row.push(t.objective.map_or(String::new(), |v| v.to_string()));
        row.push(t.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Search(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Search(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_trial_is_best() {
        let out = random_search(&SearchSpace::baseline(), 1, 4, |_, _| Ok::<_, String>(0.3)).unwrap();
        assert_eq!(out.best, 0);
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn ties_prefer_earliest_and_failures_are_recorded() {
        let out = random_search(&SearchSpace::generator(), 5, 1, |_, s| {
            if s == rng::mix(1, 0) {
                Err("boom")
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert_eq!(out.best, 1);
        assert_eq!(out.trials[0].error.as_deref(), Some("boom"));
        assert!(random_search(&SearchSpace::generator(), 2, 1, |_, _| Err::<f64, _>("no")).is_err());
        assert!(random_search(&SearchSpace::generator(), 0, 1, |_, _| Ok::<_, String>(1.0)).is_err());
    }

    #[test]
    fn sampled_configs_are_in_range() {
        let st = SearchSpace::set_transformer();
        for i in 0..50 {
            let p = st.sample(9, i);
            assert!(st.contains(&p));
            let cfg = st_config_from(&p, StConfig::default()).unwrap();
            assert!(cfg.search_space_violations().is_empty(), "{:?}", cfg.search_space_violations());
            cfg.validate().unwrap();
        }
    }
}
