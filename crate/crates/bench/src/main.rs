//! `fgl`: command-line front end for topologies, simulation, datasets,
//! training, generators, search and experiments.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fgl_autodiff::Checkpoint;
use fgl_bench::experiment::{predict_baseline, run_experiment, FEATURE_SEED};
use fgl_bench::metrics::evaluate;
use fgl_bench::search::{gen_config_from, mlp_config_from, random_search, st_config_from, trials_csv, SearchSpace};
use fgl_core::dataset::{
    apply_norm, build_test_set, build_training_replicates, deserialize, normalize, serialize, split, BuildConfigs,
    Dataset,
};
use fgl_core::nanosim::{reports_to_jsonl, simulate, EnergyConfig, EventSpec, LinkConfig, SimConfig};
use fgl_core::topology::{default_topology, load_topology, validate};
use fgl_models::generative::{eval_generator, train_generator, GenConfig, GenKind, GenModel};
use fgl_models::gmm::{set_features, K_MAX};
use fgl_models::mlp::{train_mlp, MlpClassifier, MlpConfig};
use fgl_models::set_transformer::{self, SetTransformer, StConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "fgl", version, about = "Flow-guided nanoscale localization workbench")]
struct Cli {
    /// Base seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory that relative output paths are written under.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for parallel simulation and scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate or generate vascular topologies.
    #[command(subcommand)]
    Topology(TopologyCmd),
    /// Simulate one event and write the anchor's circulation reports as JSONL.
    Simulate(SimulateArgs),
    /// Build, normalize and split circulation-time datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Extract per-set feature vectors.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Train a classifier.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Train, sample and evaluate generators (cgan, cvae, wgan; wgan-gp is not supported).
    #[command(subcommand)]
    Gen(GenCmd),
    /// Seeded random search over a model's hyperparameter domains.
    Hpo(HpoArgs),
    /// Score a classifier checkpoint on a test dataset.
    Evaluate(EvaluateArgs),
    /// Run a full manifest-driven experiment.
    Experiment {
        manifest: PathBuf,
    },
    /// Classify one set of raw circulation times.
    #[command(subcommand)]
    Predict(PredictCmd),
}

#[derive(Subcommand)]
enum TopologyCmd {
    Validate {
        file: PathBuf,
    },
    Generate {
        #[arg(long)]
        regions: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct SimFlags {
    #[arg(long, default_value_t = SimConfig::default().n_devices)]
    n_devices: usize,
    #[arg(long, default_value_t = SimConfig::default().duration_s)]
    duration_s: f64,
    #[arg(long, default_value_t = SimConfig::default().beacon_interval_s)]
    beacon_interval_s: f64,
    #[arg(long, default_value_t = SimConfig::default().sampling_rate_hz)]
    sampling_rate_hz: f64,
    #[arg(long, default_value_t = SimConfig::default().event_detect_radius_m)]
    event_detect_radius_m: f64,
    #[arg(long, default_value_t = EnergyConfig::default().v_g_volts)]
    v_g_volts: f64,
    #[arg(long, default_value_t = EnergyConfig::default().e_tx_pj)]
    e_tx_pj: f64,
    #[arg(long, default_value_t = EnergyConfig::default().e_rx_pj)]
    e_rx_pj: f64,
    #[arg(long, default_value_t = EnergyConfig::default().e_max_pj)]
    e_max_pj: f64,
    #[arg(long, default_value_t = EnergyConfig::default().on_threshold_pj)]
    on_threshold_pj: f64,
    #[arg(long, default_value_t = EnergyConfig::default().off_threshold_pj)]
    off_threshold_pj: f64,
    #[arg(long, default_value_t = EnergyConfig::default().harvest_cycle_s)]
    harvest_cycle_s: f64,
    #[arg(long, default_value_t = EnergyConfig::default().harvest_charge_pc)]
    harvest_charge_pc: f64,
    #[arg(long, default_value_t = EnergyConfig::default().initial_energy_pj)]
    initial_energy_pj: f64,
    #[arg(long, default_value_t = LinkConfig::default().p_tx_dbm, allow_hyphen_values = true)]
    p_tx_dbm: f64,
    #[arg(long, default_value_t = LinkConfig::default().bandwidth_ghz)]
    bandwidth_ghz: f64,
    #[arg(long, default_value_t = LinkConfig::default().sensitivity_dbm, allow_hyphen_values = true)]
    sensitivity_dbm: f64,
    #[arg(long, default_value_t = LinkConfig::default().frequency_thz)]
    frequency_thz: f64,
    #[arg(long, default_value_t = LinkConfig::default().medium_attenuation_db_per_m)]
    medium_attenuation_db_per_m: f64,
}

impl SimFlags {
    fn configs(&self, seed: u64) -> BuildConfigs {
        BuildConfigs {
            sim: SimConfig {
                n_devices: self.n_devices,
                duration_s: self.duration_s,
                beacon_interval_s: self.beacon_interval_s,
                sampling_rate_hz: self.sampling_rate_hz,
                event_detect_radius_m: self.event_detect_radius_m,
                seed,
            },
            energy: EnergyConfig {
                v_g_volts: self.v_g_volts,
                e_tx_pj: self.e_tx_pj,
                e_rx_pj: self.e_rx_pj,
                e_max_pj: self.e_max_pj,
                on_threshold_pj: self.on_threshold_pj,
                off_threshold_pj: self.off_threshold_pj,
                harvest_cycle_s: self.harvest_cycle_s,
                harvest_charge_pc: self.harvest_charge_pc,
                initial_energy_pj: self.initial_energy_pj,
            },
            link: LinkConfig {
                p_tx_dbm: self.p_tx_dbm,
                bandwidth_ghz: self.bandwidth_ghz,
                sensitivity_dbm: self.sensitivity_dbm,
                frequency_thz: self.frequency_thz,
                medium_attenuation_db_per_m: self.medium_attenuation_db_per_m,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EventAt {
    Centroid,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    event_region: usize,
    #[arg(long, value_enum, default_value = "centroid")]
    event_at: EventAt,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Centroid events, `--replicates` simulations per region.
    BuildTrain {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Uniformly placed events, `--per-region` per region.
    BuildTest {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        per_region: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Min-max normalize; `--params-from` reuses another dataset's parameters.
    Normalize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params_from: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified split into `--train-out` and `--val-out`.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        ratio: f64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        val_out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCmd {
    /// Mixture weights, means and variances per set as JSONL.
    Gmm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize, Deserialize)]
struct FeatureRow {
    label: usize,
    features: Vec<f64>,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Set Transformer on normalized datasets.
    St {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// GMM-feature MLP on a features JSONL file.
    Baseline {
        #[arg(long)]
        feats: PathBuf,
        #[arg(long)]
        val_feats: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GenCmd {
    Train {
        #[arg(long, value_parser = parse_kind)]
        kind: GenKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Sample {
        #[arg(long)]
        chk: PathBuf,
        #[arg(long)]
        label: usize,
        #[arg(long)]
        n: usize,
    },
    Eval {
        #[arg(long)]
        chk: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_per_region: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> std::result::Result<GenKind, String> {
    s.parse().map_err(|e: fgl_models::Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum HpoModel {
    St,
    Baseline,
    Cgan,
    Cvae,
    Wgan,
}

#[derive(Args)]
struct HpoArgs {
    #[arg(long, value_enum)]
    model: HpoModel,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    /// Caps sampled epochs (classifiers only).
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long, default_value = "trials.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    St,
    Baseline,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    model: ClassifierKind,
    #[arg(long)]
    chk: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    topology: PathBuf,
}

#[derive(Subcommand)]
enum PredictCmd {
    St {
        #[arg(long)]
        chk: PathBuf,
        /// Comma-separated circulation times in seconds.
        #[arg(long)]
        set: String,
    },
    Baseline {
        #[arg(long)]
        chk: PathBuf,
        #[arg(long)]
        set: String,
    },
}

struct Ctx {
    seed: u64,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn out(&self, p: &Path) -> Result<PathBuf> {
        let path = match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        };
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn config_or<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>, default: T) -> Result<T> {
    path.as_deref().map_or(Ok(default), read_json)
}

fn load_data(path: &Path) -> Result<Dataset> {
    deserialize(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn n_classes(d: &Dataset) -> usize {
    d.sets.iter().map(|s| s.label + 1).max().unwrap_or(0)
}

fn parse_set(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value {v:?}"))).collect()
}

fn save_checkpoint(chk: &Checkpoint, path: &Path) -> Result<()> {
    chk.save(path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_probs(region: usize, probs: &[f64]) {
    println!("region {region}");
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (id, p) in ranked.into_iter().take(5) {
        println!("  {id}: {p:.4}");
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = Ctx { seed: cli.seed, out_dir: cli.out_dir };
    match cli.cmd {
        Cmd::Topology(c) => topology(&ctx, c),
        Cmd::Simulate(a) => simulate_cmd(&ctx, a),
        Cmd::Dataset(c) => dataset(&ctx, c),
        Cmd::Features(c) => features(&ctx, c),
        Cmd::Train(c) => train(&ctx, c),
        Cmd::Gen(c) => gen(&ctx, c),
        Cmd::Hpo(a) => hpo(&ctx, a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Experiment { manifest } => {
            let report = run_experiment(&manifest, ctx.out_dir.as_deref())?;
            println!("wrote {} rows to {}", report.rows.len(), report.out_dir.join("metrics.csv").display());
            Ok(())
        }
        Cmd::Predict(c) => predict(c),
    }
}

fn topology(ctx: &Ctx, c: TopologyCmd) -> Result<()> {
    match c {
        TopologyCmd::Validate { file } => {
            let t = load_topology(&file)?;
            let report = validate(&t);
            if !report.ok {
                bail!("invalid topology:\n  {}", report.violations.join("\n  "));
            }
            println!("ok: {} regions, hash {}", t.n_regions(), t.content_hash());
        }
        TopologyCmd::Generate { regions, out } => {
            let t = default_topology(regions, ctx.seed)?;
            let path = ctx.out(&out)?;
            t.save(&path)?;
            println!("wrote {} ({} regions)", path.display(), t.n_regions());
        }
    }
    Ok(())
}

fn simulate_cmd(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let t = load_topology(&a.topology)?;
    let cfg = a.sim.configs(ctx.seed);
    let event = match a.event_at {
        EventAt::Centroid => EventSpec::at_centroid(&t, a.event_region)?,
        EventAt::Random => {
            let f: f64 = fgl_autodiff::rng::stream(ctx.seed, 0xe7).random();
            EventSpec::along(&t, a.event_region, f)?
        }
    };
    let reports = simulate(&t, &cfg.sim, &cfg.energy, &cfg.link, &event)?;
    let path = ctx.out(&a.out)?;
    fs::write(&path, reports_to_jsonl(&reports))?;
    let detected = reports.iter().filter(|r| r.event_bit).count();
    println!("wrote {} reports ({detected} with the event bit) to {}", reports.len(), path.display());
    Ok(())
}

fn dataset(ctx: &Ctx, c: DatasetCmd) -> Result<()> {
    match c {
        DatasetCmd::BuildTrain { topology, replicates, out, sim } => {
            let t = load_topology(&topology)?;
            let d = build_training_replicates(&t, &sim.configs(ctx.seed), replicates, ctx.seed)?;
            write_data(ctx, &d, &out)
        }
        DatasetCmd::BuildTest { topology, per_region, out, sim } => {
            let t = load_topology(&topology)?;
            let d = build_test_set(&t, &sim.configs(ctx.seed), per_region, ctx.seed)?;
            write_data(ctx, &d, &out)
        }
        DatasetCmd::Normalize { data, params_from, out } => {
            let d = load_data(&data)?;
            let normed = match params_from {
                Some(p) => {
                    let norm = load_data(&p)?.norm.context("--params-from dataset is not normalized")?;
                    apply_norm(&d, norm)?
                }
                None => normalize(&d)?.0,
            };
            write_data(ctx, &normed, &out)
        }
        DatasetCmd::Split { data, ratio, train_out, val_out } => {
            let (tr, va) = split(&load_data(&data)?, ratio, ctx.seed)?;
            write_data(ctx, &tr, &train_out)?;
            write_data(ctx, &va, &val_out)
        }
    }
}

fn write_data(ctx: &Ctx, d: &Dataset, out: &Path) -> Result<()> {
    let path = ctx.out(out)?;
    serialize(d, &path)?;
    println!("wrote {} sets ({} usable) to {}", d.len(), d.usable().count(), path.display());
    Ok(())
}

fn features(ctx: &Ctx, c: FeaturesCmd) -> Result<()> {
    let FeaturesCmd::Gmm { data, components, out } = c;
    let d = load_data(&data)?;
    let mut lines = String::new();
    for s in d.usable() {
        let row = FeatureRow { label: s.label, features: set_features(&s.values, components, FEATURE_SEED)? };
        lines.push_str(&serde_json::to_string(&row)?);
        lines.push('\n');
    }
    let path = ctx.out(&out)?;
    fs::write(&path, lines)?;
    println!("wrote {} feature rows of length {} to {}", d.usable().count(), 3 * K_MAX, path.display());
    Ok(())
}

fn read_features(path: &Path) -> Result<Vec<(Vec<f64>, usize)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let row: FeatureRow = serde_json::from_str(l)?;
            Ok((row.features, row.label))
        })
        .collect()
}

fn train(ctx: &Ctx, c: TrainCmd) -> Result<()> {
    match c {
        TrainCmd::St { train, val, config, out } => {
            let tr = load_data(&train)?;
            let va = match val {
                Some(v) => load_data(&v)?,
                None => Dataset { sets: Vec::new(), ..tr.clone() },
            };
            let cfg = config_or(&config, StConfig { n_classes: n_classes(&tr).max(n_classes(&va)), ..StConfig::default() })?;
            let trained = set_transformer::train(&cfg, &tr, &va, ctx.seed, None)?;
            for e in &trained.history.epochs {
                log::info!("epoch {} loss {:.4} val {:?}", e.epoch, e.train_loss, e.val_accuracy);
            }
            save_checkpoint(&trained.model.checkpoint()?, &ctx.out(&out)?)
        }
        TrainCmd::Baseline { feats, val_feats, config, out } => {
            let tr = read_features(&feats)?;
            let va = val_feats.as_deref().map_or(Ok(Vec::new()), read_features)?;
            let n = tr.iter().chain(&va).map(|(_, y)| y + 1).max().unwrap_or(0);
            let cfg = config_or(&config, MlpConfig { n_classes: n, ..MlpConfig::default() })?;
            let (model, history) = train_mlp(&cfg, &tr, &va, ctx.seed)?;
            log::info!("best epoch {:?}", history.best_epoch);
            save_checkpoint(&model.checkpoint()?, &ctx.out(&out)?)
        }
    }
}

fn gen(ctx: &Ctx, c: GenCmd) -> Result<()> {
    match c {
        GenCmd::Train { kind, data, config, out } => {
            let d = load_data(&data)?;
            let cfg: GenConfig = config_or(&config, GenConfig::new(kind, n_classes(&d)))?;
            let cfg = GenConfig { kind, ..cfg };
            let (model, curves) = train_generator(&cfg, &d, ctx.seed)?;
            if let Some(last) = curves.last() {
                log::info!("final losses: generator {:.4}, auxiliary {:.4}", last.gen_loss, last.aux_loss);
            }
            save_checkpoint(&model.checkpoint()?, &ctx.out(&out)?)
        }
        GenCmd::Sample { chk, label, n } => {
            let model = GenModel::from_checkpoint(&Checkpoint::load(&chk)?)?;
            let xs = model.sample(label, n, ctx.seed)?;
            let norm = model.norm;
            for x in xs {
                match norm {
                    Some(p) => println!("{x}\t{}", p.invert(x)),
                    None => println!("{x}"),
                }
            }
            Ok(())
        }
        GenCmd::Eval { chk, data, n_per_region, out } => {
            let model = GenModel::from_checkpoint(&Checkpoint::load(&chk)?)?;
            let eval = eval_generator(&model, &load_data(&data)?, n_per_region, ctx.seed)?;
            let path = ctx.out(&out)?;
            fs::write(&path, eval.to_csv())?;
            if !eval.skipped.is_empty() {
                log::warn!("regions without data: {:?}", eval.skipped);
            }
            println!("mean W1 {:?}; wrote {}", eval.mean_w1, path.display());
            Ok(())
        }
    }
}

fn hpo(ctx: &Ctx, a: HpoArgs) -> Result<()> {
    let (tr, va) = (load_data(&a.train)?, load_data(&a.val)?);
    let n = n_classes(&tr).max(n_classes(&va));
    let cap = |e: usize| a.max_epochs.map_or(e, |c| e.min(c));
    let (space, outcome) = match a.model {
        HpoModel::St => {
            let space = SearchSpace::set_transformer();
            let base = StConfig { n_classes: n, ..StConfig::default() };
            let out = random_search(&space, a.budget, ctx.seed, |p, s| -> anyhow::Result<f64> {
                let cfg = st_config_from(p, base)?;
                let cfg = StConfig { epochs: cap(cfg.epochs), ..cfg };
                let h = set_transformer::train(&cfg, &tr, &va, s, None)?.history;
                Ok(h.best_epoch.and_then(|e| h.epochs[e].val_accuracy).unwrap_or(0.0))
            })?;
            (space, out)
        }
        HpoModel::Baseline => {
            let space = SearchSpace::baseline();
            let base = MlpConfig { n_classes: n, ..MlpConfig::default() };
            let out = random_search(&space, a.budget, ctx.seed, |p, s| -> anyhow::Result<f64> {
                let cfg = mlp_config_from(p, base)?;
                let cfg = MlpConfig { epochs: cap(cfg.epochs), ..cfg };
                let feats = |d: &Dataset| -> fgl_models::Result<Vec<(Vec<f64>, usize)>> {
                    d.usable().map(|s| Ok((set_features(&s.values, cfg.components, FEATURE_SEED)?, s.label))).collect()
                };
                let (_, h) = train_mlp(&cfg, &feats(&tr)?, &feats(&va)?, s)?;
                Ok(h.best_epoch.and_then(|e| h.epochs[e].val_accuracy).unwrap_or(0.0))
            })?;
            (space, out)
        }
        HpoModel::Cgan | HpoModel::Cvae | HpoModel::Wgan => {
            let kind = match a.model {
                HpoModel::Cgan => GenKind::Cgan,
                HpoModel::Cvae => GenKind::Cvae,
                _ => GenKind::Wgan,
            };
            let space = SearchSpace::generator();
            let base = GenConfig::new(kind, n);
            // Lower W1 is better; the search maximizes.
            let out = random_search(&space, a.budget, ctx.seed, |p, s| -> anyhow::Result<f64> {
                let (g, _) = train_generator(&gen_config_from(p, base)?, &tr, s)?;
                let w1 = eval_generator(&g, &va, 200, s)?.mean_w1.context("validation data has no values")?;
                Ok(-w1)
            })?;
            (space, out)
        }
    };
    let path = ctx.out(&a.out)?;
    fs::write(&path, trials_csv(&space, &outcome.trials)?)?;
    let best = outcome.best_trial();
    println!("best trial {} objective {:?}: {:?}", best.index, best.objective, best.params);
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let t = load_topology(&a.topology)?;
    let test = load_data(&a.test)?;
    let chk = Checkpoint::load(&a.chk)?;
    let metrics = match a.model {
        ClassifierKind::St => {
            let m = SetTransformer::from_checkpoint(&chk)?;
            let test = match (test.norm, m.norm) {
                (Some(_), _) => test,
                (None, Some(p)) => apply_norm(&test, p)?,
                (None, None) => bail!("neither the test data nor the checkpoint carries normalization"),
            };
            evaluate(|v| Ok(m.predict_normalized(v)?.region), &test, &t)?
        }
        ClassifierKind::Baseline => {
            let m = MlpClassifier::from_checkpoint(&chk)?;
            evaluate(|v| predict_baseline(&m, v), &test, &t)?
        }
    };
    println!("accuracy_pct,point_error_m,undetected");
    println!("{},{},{}", metrics.region_accuracy_pct, metrics.mean_point_error_m, metrics.undetected);
    print!("{}", metrics.confusion_csv());
    Ok(())
}

fn predict(c: PredictCmd) -> Result<()> {
    match c {
        PredictCmd::St { chk, set } => {
            let m = SetTransformer::from_checkpoint(&Checkpoint::load(&chk)?)?;
            let p = m.predict(&parse_set(&set)?)?;
            print_probs(p.region, &p.probs);
        }
        PredictCmd::Baseline { chk, set } => {
            let m = MlpClassifier::from_checkpoint(&Checkpoint::load(&chk)?)?;
            let norm = m.norm.context("baseline checkpoint lacks normalization; features must be built by hand")?;
            let xs: Vec<f64> = parse_set(&set)?.iter().map(|v| norm.apply(*v)).collect();
            let p = m.predict(&set_features(&xs, m.cfg.components, FEATURE_SEED)?)?;
            print_probs(p.region, &p.probs);
        }
    }
    Ok(())
}
