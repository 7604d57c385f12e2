//! Labeled circulation-time sets: construction from simulations,
//! min-max normalization, stratified splitting and JSONL persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nanosim::{simulate, EnergyConfig, EventSpec, LinkConfig, SimConfig};
use crate::rng;
use crate::topology::Topology;

pub const DATASET_VERSION: u32 = 1;
/// Flag attached to sets whose event was never reported.
pub const FLAG_EMPTY: &str = "empty";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Centroid,
    Random,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Centroid => "centroid",
            Placement::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetMeta {
    pub placement: Placement,
    /// Seed of the simulation that produced the set.
    pub seed: u64,
}

/// One classification example: an unordered multiset of circulation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub label: usize,
    pub values: Vec<f64>,
    pub event_position_m: Vec3,
    #[serde(default)]
    pub flags: Vec<String>,
    pub meta: SetMeta,
}

impl SampleSet {
    pub fn is_usable(&self) -> bool {
        !self.values.is_empty() && self.flags.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min_s: f64,
    pub max_s: f64,
}

impl NormParams {
    pub fn new(min_s: f64, max_s: f64) -> Result<Self> {
        if !(max_s > min_s) || !min_s.is_finite() || !max_s.is_finite() {
            return Err(Error::Dataset(format!("degenerate normalization range [{min_s}, {max_s}]")));
        }
        Ok(Self { min_s, max_s })
    }

    /// Maps seconds into [0, 1], clamping values outside the fitted range.
    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.min_s) / (self.max_s - self.min_s)).clamp(0.0, 1.0)
    }

    pub fn invert(&self, x: f64) -> f64 {
        self.min_s + x * (self.max_s - self.min_s)
    }
}

/// Simulation settings a dataset was built with.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildConfigs {
    pub sim: SimConfig,
    pub energy: EnergyConfig,
    pub link: LinkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sets: Vec<SampleSet>,
    pub norm: Option<NormParams>,
    pub topology_hash: String,
    pub configs: BuildConfigs,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    topology_hash: String,
    norm: Option<NormParams>,
    configs: BuildConfigs,
    n_sets: usize,
    label_counts: BTreeMap<usize, usize>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    label: usize,
    values: Vec<f64>,
    event_position_m: Vec3,
    flags: Vec<String>,
    meta: SetMeta,
}

fn region_seed(seed: u64, region: usize, replicate: usize) -> u64 {
    rng::mix(rng::mix(seed, region as u64), replicate as u64)
}

fn detected_values(t: &Topology, cfg: &BuildConfigs, event: &EventSpec, seed: u64) -> Result<Vec<f64>> {
    let sc = SimConfig { seed, ..cfg.sim };
    let reports = simulate(t, &sc, &cfg.energy, &cfg.link, event)?;
    Ok(reports.into_iter().filter(|r| r.event_bit).map(|r| r.circulation_time_s).collect())
}

fn make_set(label: usize, values: Vec<f64>, position: Vec3, placement: Placement, seed: u64) -> SampleSet {
    let flags = if values.is_empty() {
        log::warn!("region {label}: event at {position:?} produced no detections");
        vec![FLAG_EMPTY.to_string()]
    } else {
        Vec::new()
    };
    SampleSet { label, values, event_position_m: position, flags, meta: SetMeta { placement, seed } }
}

/// One set per region from a simulation with the event at its centroid.
pub fn build_training_set(t: &Topology, cfg: &BuildConfigs, seed: u64) -> Result<Dataset> {
    build_training_replicates(t, cfg, 1, seed)
}

/// `replicates` independently seeded centroid simulations per region, in
/// region-id order then replicate order.
pub fn build_training_replicates(t: &Topology, cfg: &BuildConfigs, replicates: usize, seed: u64) -> Result<Dataset> {
    cfg.sim.validate()?;
    let jobs: Vec<(usize, usize)> =
        t.region_ids().into_iter().flat_map(|id| (0..replicates).map(move |r| (id, r))).collect();
    let sets = jobs
        .into_par_iter()
        .map(|(id, rep)| {
            let event = EventSpec::at_centroid(t, id)?;
            let s = region_seed(seed, id, rep);
            let values = detected_values(t, cfg, &event, s)?;
            Ok(make_set(id, values, event.position_m, Placement::Centroid, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { sets, norm: None, topology_hash: t.content_hash(), configs: *cfg })
}

/// `n_per_region` sets per region, each event uniform along the region segment.
pub fn build_test_set(t: &Topology, cfg: &BuildConfigs, n_per_region: usize, seed: u64) -> Result<Dataset> {
    if n_per_region == 0 {
        return Err(Error::Dataset("n_per_region must be >= 1".into()));
    }
    cfg.sim.validate()?;
    let jobs: Vec<(usize, usize)> =
        t.region_ids().into_iter().flat_map(|id| (0..n_per_region).map(move |k| (id, k))).collect();
    let sets = jobs
        .into_par_iter()
        .map(|(id, k)| {
            let s = region_seed(seed ^ 0x7e57, id, k);
            let f: f64 = rng::stream(s, 1).random();
            let event = EventSpec::along(t, id, f)?;
            let values = detected_values(t, cfg, &event, s)?;
            Ok(make_set(id, values, event.position_m, Placement::Random, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { sets, norm: None, topology_hash: t.content_hash(), configs: *cfg })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of sets per label, including flagged ones.
    pub fn label_counts(&self) -> BTreeMap<usize, usize> {
        let mut c = BTreeMap::new();
        for s in &self.sets {
            *c.entry(s.label).or_insert(0) += 1;
        }
        c
    }

    /// Total circulation-time values per label.
    pub fn value_counts(&self) -> BTreeMap<usize, usize> {
        let mut c = BTreeMap::new();
        for s in &self.sets {
            *c.entry(s.label).or_insert(0) += s.values.len();
        }
        c
    }

    pub fn usable(&self) -> impl Iterator<Item = &SampleSet> {
        self.sets.iter().filter(|s| s.is_usable())
    }

    /// Checks labels against a topology and warns when it differs from the
    /// one the dataset was built on.
    pub fn check_topology(&self, t: &Topology) -> Result<Option<String>> {
        let ids = t.region_ids();
        if let Some(bad) = self.sets.iter().find(|s| ids.binary_search(&s.label).is_err()) {
            return Err(Error::UnknownRegion(bad.label));
        }
        let hash = t.content_hash();
        if hash != self.topology_hash {
            let msg = format!("dataset built on topology {} but loaded against {}", self.topology_hash, hash);
            log::warn!("{msg}");
            return Ok(Some(msg));
        }
        Ok(None)
    }
}

/// Fits min-max parameters on every value in `d` and scales it.
pub fn normalize(d: &Dataset) -> Result<(Dataset, NormParams)> {
    if d.norm.is_some() {
        return Err(Error::Dataset("dataset is already normalized".into()));
    }
    let (lo, hi) = d
        .sets
        .iter()
        .flat_map(|s| &s.values)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Dataset("normalization needs at least two distinct values".into()));
    }
    let params = NormParams::new(lo, hi)?;
    Ok((apply_norm(d, params)?, params))
}

/// Scales raw values with previously fitted parameters, clamping to [0, 1].
pub fn apply_norm(d: &Dataset, params: NormParams) -> Result<Dataset> {
    if d.norm.is_some() {
        return Err(Error::Dataset("dataset is already normalized".into()));
    }
    let mut out = d.clone();
    for s in &mut out.sets {
        s.values.iter_mut().for_each(|v| *v = params.apply(*v));
    }
    out.norm = Some(params);
    Ok(out)
}

/// Maps a normalized dataset back to seconds.
pub fn denormalize(d: &Dataset) -> Result<Dataset> {
    let params = d.norm.ok_or_else(|| Error::Dataset("dataset is not normalized".into()))?;
    let mut out = d.clone();
    for s in &mut out.sets {
        s.values.iter_mut().for_each(|v| *v = params.invert(*v));
    }
    out.norm = None;
    Ok(out)
}

/// Stratified split: within each label `round(count · ratio)` sets go to
/// train (a lone set always does). Both halves keep the original order.
pub fn split(d: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Dataset(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in d.sets.iter().enumerate() {
        by_label.entry(s.label).or_default().push(i);
    }
    let mut in_train = vec![false; d.sets.len()];
    for (label, mut idx) in by_label {
        idx.shuffle(&mut rng::stream(seed, label as u64));
        let n_train = if idx.len() == 1 { 1 } else { ((idx.len() as f64 * ratio).round() as usize).min(idx.len()) };
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| Dataset {
        sets: d.sets.iter().zip(&in_train).filter(|(_, &t)| t == want).map(|(s, _)| s.clone()).collect(),
        norm: d.norm,
        topology_hash: d.topology_hash.clone(),
        configs: d.configs,
    };
    Ok((pick(true), pick(false)))
}

/// Sidecar manifest path: `data.jsonl` → `data.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn to_jsonl(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sets {
        let line = Line {
            label: s.label,
            values: s.values.clone(),
            event_position_m: s.event_position_m,
            flags: s.flags.clone(),
            meta: s.meta,
        };
        out.push_str(&serde_json::to_string(&line).expect("set serializes"));
        out.push('\n');
    }
    out
}

/// Writes the JSONL sets and the sidecar manifest.
pub fn serialize(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl(d))?;
    let manifest = Manifest {
        version: DATASET_VERSION,
        topology_hash: d.topology_hash.clone(),
        norm: d.norm,
        configs: d.configs,
        n_sets: d.sets.len(),
        label_counts: d.label_counts(),
    };
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn deserialize(path: &Path) -> Result<Dataset> {
    let mpath = manifest_path(path);
    let mtext = std::fs::read_to_string(&mpath)?;
    let manifest: Manifest =
        serde_json::from_str(&mtext).map_err(|source| Error::Parse { path: mpath.display().to_string(), source })?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::Version { what: "dataset", found: manifest.version, expected: DATASET_VERSION });
    }
    let text = std::fs::read_to_string(path)?;
    let sets = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line: Line = serde_json::from_str(l)
                .map_err(|source| Error::Parse { path: format!("{}:{}", path.display(), i + 1), source })?;
            Ok(SampleSet {
                label: line.label,
                values: line.values,
                event_position_m: line.event_position_m,
                flags: line.flags,
                meta: line.meta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if sets.len() != manifest.n_sets {
        return Err(Error::Dataset(format!("manifest lists {} sets, file holds {}", manifest.n_sets, sets.len())));
    }
    Ok(Dataset { sets, norm: manifest.norm, topology_hash: manifest.topology_hash, configs: manifest.configs })
}
