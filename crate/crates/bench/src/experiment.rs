//! Manifest-driven runs: simulate → datasets → generators → classifiers →
//! evaluation, with one result row per (model, augmentation) cell.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fgl_autodiff::rng;
use fgl_core::dataset::{apply_norm, build_test_set, build_training_replicates, normalize, split, BuildConfigs, Dataset};
use fgl_core::nanosim::{EnergyConfig, LinkConfig, SimConfig};
use fgl_core::topology::{default_topology, load_topology, validate, Topology};
use fgl_models::augment::{augment_set, Strategy};
use fgl_models::generative::{eval_generator, train_generator, GenConfig, GenEval, GenKind, GenModel};
use fgl_models::gmm::{set_features, K_MAX};
use fgl_models::mlp::{train_mlp_with, MlpClassifier, MlpConfig};
use fgl_models::set_transformer::{self, SetTransformer, StConfig};
use fgl_models::training::History;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::metrics::{evaluate, Metrics};
use crate::search::{mlp_config_from, random_search, st_config_from, trials_csv, SearchSpace, Trial};

/// Seed for the GMM initialisation used when featurizing any set.
pub const FEATURE_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySource {
    Generate { regions: usize, seed: u64 },
    /// Relative paths resolve against the manifest's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    St,
    Baseline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::St => "st",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "st" => Ok(ModelKind::St),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::Manifest(format!("unknown model {other:?}"))),
        }
    }
}

/// `none` or `<generator>-<strategy>`, e.g. `cvae-random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Augmentation {
    None,
    With(GenKind, Strategy),
}

impl Augmentation {
    /// The Table-4 style grid: no augmentation, then CGAN and CVAE with both strategies.
    pub fn grid() -> Vec<Augmentation> {
        let mut v = vec![Augmentation::None];
        for kind in [GenKind::Cgan, GenKind::Cvae] {
            for s in [Strategy::Fixed, Strategy::Random] {
                v.push(Augmentation::With(kind, s));
            }
        }
        v
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::None => f.write_str("none"),
            Augmentation::With(k, s) => write!(f, "{k}-{s}"),
        }
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Augmentation::None);
        }
        let (kind, strategy) = s.split_once('-').ok_or_else(|| Error::Manifest(format!("bad augmentation {s:?}")))?;
        let strategy: Strategy = strategy.parse()?;
        if strategy == Strategy::None {
            return Err(Error::Manifest(format!("augmentation {s:?}: use plain \"none\"")));
        }
        Ok(Augmentation::With(kind.parse()?, strategy))
    }
}

impl TryFrom<String> for Augmentation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Augmentation> for String {
    fn from(a: Augmentation) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    /// Centroid-event simulations per region in the training pool.
    pub replicates: usize,
    pub test_per_region: usize,
    /// Fraction of each region's training sets kept for training; the rest validate.
    pub train_ratio: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { replicates: 10, test_per_region: 10, train_ratio: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpoParams {
    pub model: ModelKind,
    pub budget: usize,
    /// Caps sampled epochs for desk-scale searches.
    #[serde(default)]
    pub max_epochs: Option<usize>,
}

fn default_eval_n() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub topology: TopologySource,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub dataset: DatasetParams,
    pub models: Vec<ModelKind>,
    pub augmentation: Vec<Augmentation>,
    #[serde(default)]
    pub st: Option<StConfig>,
    #[serde(default)]
    pub baseline: Option<MlpConfig>,
    #[serde(default)]
    pub cgan: Option<GenConfig>,
    #[serde(default)]
    pub cvae: Option<GenConfig>,
    #[serde(default)]
    pub wgan: Option<GenConfig>,
    #[serde(default)]
    pub hpo: Option<HpoParams>,
    #[serde(default = "default_eval_n")]
    pub gen_eval_per_region: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Writes measured training seconds into metrics.csv, which then differs between runs.
    #[serde(default)]
    pub wall_clock_timing: bool,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    fn gen_config(&self, kind: GenKind, n_classes: usize) -> GenConfig {
        let given = match kind {
            GenKind::Cgan => self.cgan,
            GenKind::Cvae => self.cvae,
            GenKind::Wgan => self.wgan,
        };
        GenConfig { kind, n_classes, ..given.unwrap_or_else(|| GenConfig::new(kind, n_classes)) }
    }

    fn build_configs(&self) -> BuildConfigs {
        BuildConfigs { sim: self.sim, energy: self.energy, link: self.link }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub model: ModelKind,
    pub augmentation: Augmentation,
    pub metrics: Metrics,
    pub history: History,
    pub wall_time_s: f64,
}

impl CellResult {
    pub fn tag(&self) -> String {
        format!("{}_{}", self.model, self.augmentation)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: PathBuf,
    pub rows: Vec<CellResult>,
    pub generators: BTreeMap<String, GenEval>,
    pub trials: Vec<Trial>,
}

/// Prepared inputs shared by every cell.
pub struct Prepared {
    pub topology: Topology,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub n_classes: usize,
}

fn seed_for(seed: u64, purpose: u64) -> u64 {
    rng::mix(seed, purpose)
}

pub fn prepare(m: &Manifest, base_dir: &Path) -> Result<Prepared> {
    let topology = match &m.topology {
        TopologySource::Generate { regions, seed } => default_topology(*regions, *seed)?,
        TopologySource::File(p) => load_topology(&base_dir.join(p))?,
    };
    let report = validate(&topology);
    if !report.ok {
        return Err(fgl_core::Error::Validation(report.violations).into());
    }
    let cfg = m.build_configs();
    let pool = build_training_replicates(&topology, &cfg, m.dataset.replicates, seed_for(m.seed, 1))?;
    let (train_raw, val_raw) = split(&pool, m.dataset.train_ratio, seed_for(m.seed, 3))?;
    let (train, norm) = normalize(&train_raw)?;
    let val = apply_norm(&val_raw, norm)?;
    let test = apply_norm(&build_test_set(&topology, &cfg, m.dataset.test_per_region, seed_for(m.seed, 2))?, norm)?;
    let n_classes = topology.region_ids().last().map_or(0, |id| id + 1);
    Ok(Prepared { topology, train, val, test, n_classes })
}

fn labeled(d: &Dataset) -> Vec<(&[f64], usize)> {
    d.usable().map(|s| (s.values.as_slice(), s.label)).collect()
}

fn best_val(h: &History) -> f64 {
    h.best_epoch.and_then(|e| h.epochs[e].val_accuracy).unwrap_or(0.0)
}

/// Trains and scores the Set Transformer, optionally augmenting every visit.
pub fn run_st(p: &Prepared, cfg: &StConfig, gen: Option<(&GenModel, Strategy)>, seed: u64) -> Result<(SetTransformer, History)> {
    let hook = gen.map(|(g, strategy)| {
        move |v: &[f64], label: usize, s: u64| augment_set(v, strategy, Some(g), label, s)
    });
    let trained = match &hook {
        Some(h) => set_transformer::train(cfg, &p.train, &p.val, seed, Some(h)),
        None => set_transformer::train(cfg, &p.train, &p.val, seed, None),
    }?;
    Ok((trained.model, trained.history))
}

/// Trains the GMM-feature classifier; features are recomputed from each augmented visit.
pub fn run_baseline(
    p: &Prepared,
    cfg: &MlpConfig,
    gen: Option<(&GenModel, Strategy)>,
    seed: u64,
) -> Result<(MlpClassifier, History)> {
    let sets = labeled(&p.train);
    let labels: Vec<usize> = sets.iter().map(|(_, y)| *y).collect();
    let k = cfg.components;
    let fixed = if gen.is_none() {
        sets.iter().map(|(v, _)| set_features(v, k, FEATURE_SEED)).collect::<fgl_models::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let inputs = |i: usize, s: u64| -> fgl_models::Result<Vec<f64>> {
        match gen {
            None => Ok(fixed[i].clone()),
            Some((g, strategy)) => set_features(&augment_set(sets[i].0, strategy, Some(g), sets[i].1, s)?, k, FEATURE_SEED),
        }
    };
    let val = labeled(&p.val)
        .into_iter()
        .map(|(v, y)| Ok((set_features(v, k, FEATURE_SEED)?, y)))
        .collect::<fgl_models::Result<Vec<_>>>()?;
    let (mut model, history) = train_mlp_with(cfg, 3 * K_MAX, &labels, &inputs, &val, seed)?;
    model.norm = p.train.norm;
    Ok((model, history))
}

pub fn predict_baseline(model: &MlpClassifier, normalized_values: &[f64]) -> fgl_models::Result<usize> {
    Ok(model.predict(&set_features(normalized_values, model.cfg.components, FEATURE_SEED)?)?.region)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

pub fn metrics_csv(rows: &[CellResult], wall_clock: bool) -> String {
    let mut out = String::from("model,augmentation,accuracy_pct,point_error_m,train_time_s\n");
    for r in rows {
        let time = if wall_clock { r.wall_time_s.to_string() } else { String::new() };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model, r.augmentation, r.metrics.region_accuracy_pct, r.metrics.mean_point_error_m, time
        ));
    }
    out
}

fn timing_csv(rows: &[CellResult]) -> String {
    let mut out = String::from("model,augmentation,train_time_s\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.model, r.augmentation, r.wall_time_s));
    }
    out
}

/// Loads a manifest file and runs it. `out_override` beats the manifest's `out_dir`.
pub fn run_experiment(manifest_path: &Path, out_override: Option<&Path>) -> Result<Report> {
    let m = Manifest::load(manifest_path).stage("manifest")?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let out = match (out_override, &m.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("results"),
    };
    run_manifest(&m, base, &out)
}

pub fn run_manifest(m: &Manifest, base_dir: &Path, out: &Path) -> Result<Report> {
    if m.models.is_empty() || m.augmentation.is_empty() {
        return Err(Error::Manifest("models and augmentation must be non-empty".into()));
    }
    fs::create_dir_all(out).stage("output")?;
    let p = prepare(m, base_dir).stage("dataset")?;
    log::info!(
        "{} regions, {} train / {} val / {} test sets",
        p.topology.n_regions(),
        p.train.len(),
        p.val.len(),
        p.test.len()
    );

    let mut st_cfg = StConfig { n_classes: p.n_classes, ..m.st.unwrap_or_default() };
    let mut mlp_cfg = MlpConfig { n_classes: p.n_classes, ..m.baseline.unwrap_or_default() };
    let model_seed = seed_for(m.seed, 10);

    let mut trials = Vec::new();
    let trial_space = match m.hpo.map(|h| h.model) {
        Some(ModelKind::Baseline) => SearchSpace::baseline(),
        _ => SearchSpace::set_transformer(),
    };
    if let Some(h) = m.hpo {
        let cap = |e: usize| h.max_epochs.map_or(e, |c| e.min(c));
        let outcome = match h.model {
            ModelKind::St => random_search(&trial_space, h.budget, seed_for(m.seed, 20), |params, s| {
                let cfg = st_config_from(params, st_cfg)?;
                let cfg = StConfig { epochs: cap(cfg.epochs), ..cfg };
                run_st(&p, &cfg, None, s).map(|(_, hist)| best_val(&hist))
            }),
            ModelKind::Baseline => random_search(&trial_space, h.budget, seed_for(m.seed, 20), |params, s| {
                let cfg = mlp_config_from(params, mlp_cfg)?;
                let cfg = MlpConfig { epochs: cap(cfg.epochs), ..cfg };
                run_baseline(&p, &cfg, None, s).map(|(_, hist)| best_val(&hist))
            }),
        }
        .stage("hpo")?;
        let best = outcome.best_trial().params.clone();
        match h.model {
            ModelKind::St => {
                let cfg = st_config_from(&best, st_cfg)?;
                st_cfg = StConfig { epochs: cap(cfg.epochs), ..cfg };
            }
            ModelKind::Baseline => {
                let cfg = mlp_config_from(&best, mlp_cfg)?;
                mlp_cfg = MlpConfig { epochs: cap(cfg.epochs), ..cfg };
            }
        }
        trials = outcome.trials;
    }
    write(out, "trials.csv", &trials_csv(&trial_space, &trials)?)?;

    let mut generators: BTreeMap<GenKind, GenModel> = BTreeMap::new();
    let mut gen_evals = BTreeMap::new();
    for a in &m.augmentation {
        let Augmentation::With(kind, _) = *a else { continue };
        if generators.contains_key(&kind) {
            continue;
        }
        let cfg = m.gen_config(kind, p.n_classes);
        let stage = format!("generator {kind}");
        let (g, _) = train_generator(&cfg, &p.train, seed_for(m.seed, 0x6e0 + kind as u64)).stage(&stage)?;
        let eval = eval_generator(&g, &p.val, m.gen_eval_per_region, seed_for(m.seed, 0x6e8)).stage(&stage)?;
        write(out, &format!("w1_{kind}.csv"), &eval.to_csv())?;
        log::info!("{kind}: mean W1 {:?}", eval.mean_w1);
        gen_evals.insert(kind.to_string(), eval);
        generators.insert(kind, g);
    }

    let mut rows = Vec::new();
    for &model in &m.models {
        for &aug in &m.augmentation {
            let gen = match aug {
                Augmentation::None => None,
                Augmentation::With(k, s) => Some((&generators[&k], s)),
            };
            let stage = format!("{model}/{aug}");
            let started = Instant::now();
            let (metrics, history) = match model {
                ModelKind::St => {
                    let (net, history) = run_st(&p, &st_cfg, gen, model_seed).stage(&stage)?;
                    let wall = started.elapsed().as_secs_f64();
                    let metrics =
                        evaluate(|v| Ok(net.predict_normalized(v)?.region), &p.test, &p.topology).stage(&stage)?;
                    (Metrics { train_time_s: Some(wall), ..metrics }, history)
                }
                ModelKind::Baseline => {
                    let (net, history) = run_baseline(&p, &mlp_cfg, gen, model_seed).stage(&stage)?;
                    let wall = started.elapsed().as_secs_f64();
                    let metrics = evaluate(|v| predict_baseline(&net, v), &p.test, &p.topology).stage(&stage)?;
                    (Metrics { train_time_s: Some(wall), ..metrics }, history)
                }
            };
            let row = CellResult {
                model,
                augmentation: aug,
                wall_time_s: metrics.train_time_s.unwrap_or(0.0),
                metrics,
                history,
            };
            log::info!("{stage}: {:.2}% / {:.4} m", row.metrics.region_accuracy_pct, row.metrics.mean_point_error_m);
            write(out, &format!("history_{}.csv", row.tag()), &row.history.to_csv())?;
            write(out, &format!("confusion_{}.csv", row.tag()), &row.metrics.confusion_csv())?;
            rows.push(row);
            write(out, "metrics.csv", &metrics_csv(&rows, m.wall_clock_timing))?;
        }
    }
    write(out, "timing.csv", &timing_csv(&rows))?;
    Ok(Report { out_dir: out.to_path_buf(), rows, generators: gen_evals, trials })
}
