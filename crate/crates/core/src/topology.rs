//! Vascular graph: regions with traversal kinematics and 3-D placement, plus
//! Markov transition probabilities between them.
//!
//! The heart is a zero-duration junction: a nanodevice passes through it
//! instantaneously, and a circulation (loop) is the time between two
//! consecutive heart passages.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3};
use crate::rng;

pub const TOPOLOGY_VERSION: u32 = 1;
const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Aorta,
    Artery,
    Vein,
    Organ,
    Limb,
    Head,
    Heart,
}

impl RegionKind {
    /// Characteristic blood-flow speed (cm/s) used when a region omits one.
    /// Veins span 2–4 cm/s; the midpoint stands in when unspecified.
    pub fn default_speed_cm_s(self) -> f64 {
        match self {
            RegionKind::Aorta | RegionKind::Heart => 20.0,
            RegionKind::Artery => 10.0,
            RegionKind::Vein => 3.0,
            RegionKind::Organ | RegionKind::Limb | RegionKind::Head => 1.0,
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub name: String,
    pub kind: RegionKind,
    pub length_cm: f64,
    pub speed_cm_s: f64,
    pub entry_m: Vec3,
    pub exit_m: Vec3,
}

impl Region {
    pub fn centroid_m(&self) -> Vec3 {
        geometry::midpoint(self.entry_m, self.exit_m)
    }

    /// Seconds to traverse the region; zero for the heart junction.
    pub fn traversal_s(&self) -> f64 {
        if self.kind == RegionKind::Heart {
            0.0
        } else {
            self.length_cm / self.speed_cm_s
        }
    }

    pub fn position_at(&self, fraction: f64) -> Vec3 {
        geometry::lerp(self.entry_m, self.exit_m, fraction.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub version: u32,
    pub heart_id: usize,
    pub anchor_position_m: Vec3,
    pub regions: Vec<Region>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

#[derive(Deserialize)]
struct RawRegion {
    id: usize,
    name: String,
    kind: RegionKind,
    length_cm: f64,
    speed_cm_s: Option<f64>,
    entry_m: Vec3,
    exit_m: Vec3,
}

#[derive(Deserialize)]
struct RawTopology {
    version: u32,
    heart_id: usize,
    anchor_position_m: Vec3,
    regions: Vec<RawRegion>,
    edges: Vec<Edge>,
}

impl From<RawTopology> for Topology {
    fn from(raw: RawTopology) -> Self {
        let regions = raw
            .regions
            .into_iter()
            .map(|r| Region {
                speed_cm_s: r.speed_cm_s.unwrap_or_else(|| r.kind.default_speed_cm_s()),
                id: r.id,
                name: r.name,
                kind: r.kind,
                length_cm: r.length_cm,
                entry_m: r.entry_m,
                exit_m: r.exit_m,
            })
            .collect();
        Topology {
            version: raw.version,
            heart_id: raw.heart_id,
            anchor_position_m: raw.anchor_position_m,
            regions,
            edges: raw.edges,
        }
    }
}

/// Reads, fills per-kind default speeds, and validates a topology file.
pub fn load_topology(path: &Path) -> Result<Topology> {
    let text = std::fs::read_to_string(path)?;
    let t = parse_topology(&text).map_err(|e| match e {
        Error::Json(source) => Error::Parse { path: path.display().to_string(), source },
        other => other,
    })?;
    Ok(t)
}

pub fn parse_topology(text: &str) -> Result<Topology> {
    let raw: RawTopology = serde_json::from_str(text)?;
    let t = Topology::from(raw);
    let report = validate(&t);
    if !report.ok {
        return Err(Error::Validation(report.violations));
    }
    Ok(t)
}

/// Checks every structural invariant; violations are returned as data.
pub fn validate(t: &Topology) -> ValidationReport {
    let mut v = Vec::new();
    if t.version != TOPOLOGY_VERSION {
        v.push(format!("unsupported version {}", t.version));
    }
    if t.anchor_position_m.iter().any(|c| !c.is_finite()) {
        v.push("anchor position is not finite".into());
    }

    let mut index = HashMap::new();
    for (i, r) in t.regions.iter().enumerate() {
        if index.insert(r.id, i).is_some() {
            v.push(format!("duplicate region id {}", r.id));
        }
        if !(r.length_cm > 0.0) || !r.length_cm.is_finite() {
            v.push(format!("region {} ({}): non-positive length {}", r.id, r.name, r.length_cm));
        }
        if !(r.speed_cm_s > 0.0) || !r.speed_cm_s.is_finite() {
            v.push(format!("region {} ({}): non-positive speed {}", r.id, r.name, r.speed_cm_s));
        }
        let seg = geometry::distance(r.entry_m, r.exit_m);
        if !(seg > 0.0) || !seg.is_finite() {
            v.push(format!("region {} ({}): degenerate segment (entry == exit)", r.id, r.name));
        }
    }

    let hearts: Vec<&Region> = t.regions.iter().filter(|r| r.kind == RegionKind::Heart).collect();
    if hearts.len() != 1 {
        v.push(format!("expected exactly one heart region, found {}", hearts.len()));
    }
    match index.get(&t.heart_id) {
        None => v.push(format!("heart_id {} does not name a region", t.heart_id)),
        Some(&i) if t.regions[i].kind != RegionKind::Heart => {
            v.push(format!("heart_id {} names a {} region", t.heart_id, t.regions[i].kind))
        }
        _ => {}
    }

    let mut out_sum: BTreeMap<usize, f64> = t.regions.iter().map(|r| (r.id, 0.0)).collect();
    let mut fwd: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut rev: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in &t.edges {
        let known = index.contains_key(&e.from) && index.contains_key(&e.to);
        if !known {
            v.push(format!("edge {} -> {} references an unknown region", e.from, e.to));
            continue;
        }
        if !(e.p > 0.0 && e.p <= 1.0) {
            v.push(format!("edge {} -> {}: probability {} outside (0, 1]", e.from, e.to, e.p));
        }
        if e.from == t.heart_id && e.to == t.heart_id {
            v.push("heart self-loop would create a zero-duration circulation".into());
        }
        *out_sum.get_mut(&e.from).expect("known") += e.p;
        fwd.entry(e.from).or_default().push(e.to);
        rev.entry(e.to).or_default().push(e.from);
    }
    for (id, s) in &out_sum {
        if (s - 1.0).abs() > PROB_TOL {
            let name = index.get(id).map_or("", |&i| t.regions[i].name.as_str());
            v.push(format!("region {id} ({name}): outgoing probabilities sum to {s}, expected 1"));
        }
    }

    if index.contains_key(&t.heart_id) {
        let reach = |adj: &HashMap<usize, Vec<usize>>| {
            let mut seen = std::collections::HashSet::from([t.heart_id]);
            let mut queue = VecDeque::from([t.heart_id]);
            while let Some(n) = queue.pop_front() {
                for &m in adj.get(&n).into_iter().flatten() {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            seen
        };
        let from_heart = reach(&fwd);
        let to_heart = reach(&rev);
        let mut unreachable: Vec<usize> = t.regions.iter().map(|r| r.id).filter(|id| !from_heart.contains(id)).collect();
        unreachable.sort_unstable();
        if !unreachable.is_empty() {
            v.push(format!("unreachable regions from heart: {unreachable:?}"));
        }
        let mut stranded: Vec<usize> = t.regions.iter().map(|r| r.id).filter(|id| !to_heart.contains(id)).collect();
        stranded.sort_unstable();
        if !stranded.is_empty() {
            v.push(format!("regions that never return to heart: {stranded:?}"));
        }
    }

    ValidationReport { ok: v.is_empty(), violations: v }
}

impl Topology {
    pub fn region(&self, id: usize) -> Result<&Region> {
        self.regions.iter().find(|r| r.id == id).ok_or(Error::UnknownRegion(id))
    }

    pub fn heart(&self) -> &Region {
        self.region(self.heart_id).expect("validated topology has a heart")
    }

    pub fn region_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.regions.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// SHA-256 of the canonical serialization; identifies the graph a dataset was built on.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("topology serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Precomputed adjacency for walking the chain.
    pub fn chain(&self) -> Chain {
        Chain::new(self)
    }
}

pub fn region_centroid(t: &Topology, region_id: usize) -> Result<Vec3> {
    Ok(t.region(region_id)?.centroid_m())
}

/// Index-based view of a topology used by walkers.
#[derive(Debug, Clone)]
pub struct Chain {
    pub heart: usize,
    pub ids: Vec<usize>,
    pub traversal_s: Vec<f64>,
    /// Per region: `(target index, cumulative probability)`.
    pub next: Vec<Vec<(usize, f64)>>,
}

impl Chain {
    fn new(t: &Topology) -> Self {
        let index: HashMap<usize, usize> = t.regions.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let mut next: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t.regions.len()];
        for e in &t.edges {
            next[index[&e.from]].push((index[&e.to], e.p));
        }
        for out in &mut next {
            let total: f64 = out.iter().map(|(_, p)| p).sum();
            let mut acc = 0.0;
            for (_, p) in out.iter_mut() {
                acc += *p / total;
                *p = acc;
            }
            if let Some(last) = out.last_mut() {
                last.1 = 1.0;
            }
        }
        Self {
            heart: index[&t.heart_id],
            ids: t.regions.iter().map(|r| r.id).collect(),
            traversal_s: t.regions.iter().map(Region::traversal_s).collect(),
            next,
        }
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let out = &self.next[from];
        out.iter().find(|(_, c)| u < *c).unwrap_or(out.last().expect("validated: outgoing edge")).0
    }
}

/// Mean first-return time to the heart, starting at heart exit.
///
/// Solves `E[T_i] = t_i + Σ_j p_ij E[T_j]` over non-heart regions with
/// `E[T_heart] = 0`, then averages over the heart's successors.
pub fn expected_loop_time(t: &Topology) -> Result<f64> {
    let chain = t.chain();
    let n = chain.ids.len();
    let others: Vec<usize> = (0..n).filter(|&i| i != chain.heart).collect();
    let pos: HashMap<usize, usize> = others.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = others.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut heart_out = vec![0.0; m];
    for e in &t.edges {
        let from = chain.ids.iter().position(|&id| id == e.from).ok_or(Error::UnknownRegion(e.from))?;
        let to = chain.ids.iter().position(|&id| id == e.to).ok_or(Error::UnknownRegion(e.to))?;
        if to == chain.heart {
            continue;
        }
        if from == chain.heart {
            heart_out[pos[&to]] += e.p;
        } else {
            a[(pos[&from], pos[&to])] -= e.p;
        }
    }
    for (k, &i) in others.iter().enumerate() {
        b[k] = chain.traversal_s[i];
    }
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Singular("some region cannot return to the heart".into()))?;
    if sol.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Singular("non-finite or negative expected times".into()));
    }
    Ok(heart_out.iter().zip(sol.iter()).map(|(p, e)| p * e).sum())
}

// --- bundled generator -----------------------------------------------------

const PAIR_NAMES: &[&str] = &[
    "arm", "leg", "kidney", "lung", "shoulder", "hip", "hand", "foot", "thigh", "knee", "elbow", "wrist", "ankle",
    "breast", "eye", "ear", "calf", "forearm", "adrenal", "ovary",
];
const CENTRAL_NAMES: &[&str] = &["liver", "stomach", "spleen", "pancreas", "intestine", "bladder", "neck", "spine"];

#[derive(Debug, Clone)]
struct BranchPlan {
    kind: RegionKind,
    name: String,
    beds: usize,
    mirrored: bool,
}

/// Deterministic heart-rooted circulation with mirrored left/right branches.
///
/// Layout: `heart → aorta → branch artery → one of 1–3 capillary beds →
/// branch vein → heart`. The first branch supplies the head; later branches
/// alternate two mirrored pairs and one central organ. Mirror twins share
/// lengths, speeds and transition probabilities exactly. Graphs with fewer
/// than five regions degrade to a single loop.
pub fn default_topology(n_regions: usize, seed: u64) -> Result<Topology> {
    if n_regions < 2 {
        return Err(Error::Config(format!("need at least 2 regions, got {n_regions}")));
    }
    let mut b = Builder::new(seed);
    let heart = b.push("heart", RegionKind::Heart, 1.0, [0.0, 0.0, -0.005], [0.0, 0.0, 0.005]);

    if n_regions < 5 {
        let kinds: &[RegionKind] = match n_regions {
            2 => &[RegionKind::Organ],
            3 => &[RegionKind::Artery, RegionKind::Organ],
            _ => &[RegionKind::Artery, RegionKind::Organ, RegionKind::Vein],
        };
        let mut prev = heart;
        let mut at = [0.0, 0.0, 0.005];
        for &kind in kinds {
            let len = match kind {
                RegionKind::Artery => 20.0,
                RegionKind::Vein => 20.0,
                _ => 5.0,
            };
            let exit = [at[0] + len / 100.0, at[1], at[2]];
            let id = b.push(&kind.to_string(), kind, len, at, exit);
            if kind == RegionKind::Vein {
                b.regions[id].speed_cm_s = 3.0;
            }
            b.edge(prev, id, 1.0);
            prev = id;
            at = exit;
        }
        b.edge(prev, heart, 1.0);
        return Ok(b.finish(heart));
    }

    let hub = [0.0, 0.2, 0.005];
    let aorta = b.push("aorta", RegionKind::Aorta, 20.0, [0.0, 0.0, 0.005], hub);
    b.edge(heart, aorta, 1.0);

    // Branch plan.
    let mut remaining = n_regions - 2;
    let mut plans = vec![BranchPlan { kind: RegionKind::Head, name: "head".into(), beds: 1, mirrored: false }];
    remaining -= 3;
    let (mut slot, mut pairs, mut centrals) = (0usize, 0usize, 0usize);
    while remaining >= 3 {
        let want_pair = slot % 3 != 2;
        if want_pair && remaining >= 6 {
            let max_beds = (remaining / 2 - 2).min(3);
            let beds = b.rng.random_range(1..=max_beds);
            let kind = if pairs < 2 { RegionKind::Limb } else { RegionKind::Organ };
            let name = PAIR_NAMES.get(pairs).map_or_else(|| format!("pair{pairs}"), |s| s.to_string());
            plans.push(BranchPlan { kind, name, beds, mirrored: true });
            remaining -= 2 * (2 + beds);
            pairs += 1;
        } else {
            let beds = b.rng.random_range(1..=(remaining - 2).min(3));
            let name = CENTRAL_NAMES.get(centrals).map_or_else(|| format!("organ{centrals}"), |s| s.to_string());
            plans.push(BranchPlan { kind: RegionKind::Organ, name, beds, mirrored: false });
            remaining -= 2 + beds;
            centrals += 1;
        }
        slot += 1;
    }
    plans[0].beds += remaining;

    // Angles in the x–z plane: head straight up, pairs mirrored about it,
    // centrals spread across the lower half.
    let n_pairs = plans.iter().filter(|p| p.mirrored).count().max(1);
    let n_central = plans.iter().skip(1).filter(|p| !p.mirrored).count().max(1);
    let (mut pi, mut ci) = (0usize, 0usize);
    let mut aorta_out: Vec<(usize, f64)> = Vec::new();
    for plan in &plans {
        let weight = b.rng.random_range(0.5..1.5);
        let artery_cm = b.rng.random_range(10.0..30.0);
        let bed_cm: Vec<f64> = (0..plan.beds).map(|_| b.rng.random_range(3.0..8.0)).collect();
        let bed_w: Vec<f64> = (0..plan.beds).map(|_| b.rng.random_range(0.5..1.5)).collect();
        let vein_speed = b.rng.random_range(2.0..4.0);
        let sides: Vec<(&str, f64)> = if plan.mirrored {
            let right = 10.0 + 60.0 * (pi as f64 + 0.5) / n_pairs as f64 - 80.0 * (pi % 2) as f64;
            pi += 1;
            vec![("left", 180.0 - right), ("right", right)]
        } else if plan.kind == RegionKind::Head {
            vec![("", 90.0)]
        } else {
            let a = 240.0 + 60.0 * (ci as f64 + 0.5) / n_central as f64;
            ci += 1;
            vec![("", a)]
        };
        for (side, angle_deg) in sides {
            let prefix = if side.is_empty() { plan.name.clone() } else { format!("{side}_{}", plan.name) };
            let dir = {
                let a = angle_deg.to_radians();
                [a.cos(), 0.0, a.sin()]
            };
            let artery_exit = add(hub, scale(dir, artery_cm / 100.0));
            let artery = b.push(&format!("{prefix}_artery"), RegionKind::Artery, artery_cm, hub, artery_exit);
            aorta_out.push((artery, weight));
            let total_w: f64 = bed_w.iter().sum();
            let mut bed_exits = Vec::new();
            let mut beds = Vec::new();
            for (j, (&len, &w)) in bed_cm.iter().zip(&bed_w).enumerate() {
                // Fan beds ±15° apart around the branch direction; the mirror
                // twin fans the opposite way so geometry stays symmetric.
                let spread = (j as f64 - (plan.beds as f64 - 1.0) / 2.0) * 15.0;
                let a = (angle_deg + if side == "left" { -spread } else { spread }).to_radians();
                let bdir = [a.cos(), 0.0, a.sin()];
                let exit = add(artery_exit, scale(bdir, len / 100.0));
                let name = if plan.beds == 1 { prefix.clone() } else { format!("{prefix}_{}", j + 1) };
                let bed = b.push(&name, plan.kind, len, artery_exit, exit);
                b.edge(artery, bed, w / total_w);
                bed_exits.push(exit);
                beds.push(bed);
            }
            let k = bed_exits.len() as f64;
            let mut vein_entry = [0.0; 3];
            for e in &bed_exits {
                vein_entry = add(vein_entry, scale(*e, 1.0 / k));
            }
            let vein_exit = [0.0, 0.0, -0.005];
            let vein_cm = geometry::distance(vein_entry, vein_exit) * 100.0;
            let vein = b.push(&format!("{prefix}_vein"), RegionKind::Vein, vein_cm, vein_entry, vein_exit);
            b.regions[vein].speed_cm_s = vein_speed;
            for bed in beds {
                b.edge(bed, vein, 1.0);
            }
            b.edge(vein, heart, 1.0);
        }
    }
    let total: f64 = aorta_out.iter().map(|(_, w)| w).sum();
    for (artery, w) in aorta_out {
        b.edge(aorta, artery, w / total);
    }
    debug_assert_eq!(b.regions.len(), n_regions);
    Ok(b.finish(heart))
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

struct Builder {
    rng: rng::StreamRng,
    regions: Vec<Region>,
    edges: Vec<Edge>,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self { rng: rng::stream(seed, 0x70b0), regions: Vec::new(), edges: Vec::new() }
    }

    fn push(&mut self, name: &str, kind: RegionKind, length_cm: f64, entry_m: Vec3, exit_m: Vec3) -> usize {
        let id = self.regions.len();
        self.regions.push(Region {
            id,
            name: name.to_string(),
            kind,
            length_cm,
            speed_cm_s: kind.default_speed_cm_s(),
            entry_m,
            exit_m,
        });
        id
    }

    fn edge(&mut self, from: usize, to: usize, p: f64) {
        self.edges.push(Edge { from, to, p });
    }

    fn finish(self, heart: usize) -> Topology {
        Topology {
            version: TOPOLOGY_VERSION,
            heart_id: heart,
            anchor_position_m: [0.03, 0.0, 0.0],
            regions: self.regions,
            edges: self.edges,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(id: usize, kind: RegionKind, length_cm: f64, speed: f64) -> Region {
        let x = id as f64 * 0.1;
        Region {
            id,
            name: format!("r{id}"),
            kind,
            length_cm,
            speed_cm_s: speed,
            entry_m: [x, 0.0, 0.0],
            exit_m: [x, 0.0, 0.05],
        }
    }

    fn single_loop() -> Topology {
        Topology {
            version: 1,
            heart_id: 0,
            anchor_position_m: [0.0, 0.0, 0.0],
            regions: vec![
                region(0, RegionKind::Heart, 1.0, 20.0),
                region(1, RegionKind::Aorta, 20.0, 20.0),
                region(2, RegionKind::Artery, 10.0, 10.0),
                region(3, RegionKind::Organ, 5.0, 1.0),
                region(4, RegionKind::Vein, 20.0, 4.0),
            ],
            edges: vec![
                Edge { from: 0, to: 1, p: 1.0 },
                Edge { from: 1, to: 2, p: 1.0 },
                Edge { from: 2, to: 3, p: 1.0 },
                Edge { from: 3, to: 4, p: 1.0 },
                Edge { from: 4, to: 0, p: 1.0 },
            ],
        }
    }

    #[test]
    fn single_loop_expected_time_is_twelve_seconds() {
        let t = single_loop();
        assert!(validate(&t).ok);
        assert!((expected_loop_time(&t).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn two_branch_expected_time_is_weighted_mean() {
        let t = Topology {
            version: 1,
            heart_id: 0,
            anchor_position_m: [0.0; 3],
            regions: vec![
                region(0, RegionKind::Heart, 1.0, 20.0),
                region(1, RegionKind::Organ, 10.0, 1.0),
                region(2, RegionKind::Organ, 20.0, 1.0),
            ],
            edges: vec![
                Edge { from: 0, to: 1, p: 0.5 },
                Edge { from: 0, to: 2, p: 0.5 },
                Edge { from: 1, to: 0, p: 1.0 },
                Edge { from: 2, to: 0, p: 1.0 },
            ],
        };
        assert!((expected_loop_time(&t).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn one_region_loop_returns_its_time() {
        let tau = 7.25;
        let t = Topology {
            version: 1,
            heart_id: 0,
            anchor_position_m: [0.0; 3],
            regions: vec![region(0, RegionKind::Heart, 1.0, 20.0), region(1, RegionKind::Organ, tau, 1.0)],
            edges: vec![Edge { from: 0, to: 1, p: 1.0 }, Edge { from: 1, to: 0, p: 1.0 }],
        };
        assert!(validate(&t).ok);
        assert!((expected_loop_time(&t).unwrap() - tau).abs() < 1e-12);
    }

    #[test]
    fn probability_deficit_names_region() {
        let mut t = single_loop();
        t.edges[2].p = 0.9;
        let r = validate(&t);
        assert!(!r.ok);
        assert!(r.violations.iter().any(|v| v.contains("region 2") && v.contains("0.9")), "{:?}", r.violations);
    }

    #[test]
    fn heart_only_self_loop_leaves_regions_unreachable() {
        let mut t = single_loop();
        t.edges = vec![Edge { from: 0, to: 0, p: 1.0 }];
        let r = validate(&t);
        assert!(r.violations.iter().any(|v| v.contains("unreachable")), "{:?}", r.violations);
    }

    #[test]
    fn negative_length_flagged() {
        let mut t = single_loop();
        t.regions[3].length_cm = -5.0;
        let r = validate(&t);
        assert!(r.violations.iter().any(|v| v.contains("non-positive length")));
    }

    #[test]
    fn multiple_or_missing_hearts_flagged() {
        let mut t = single_loop();
        t.regions[2].kind = RegionKind::Heart;
        assert!(!validate(&t).ok);
        t.regions[2].kind = RegionKind::Artery;
        t.regions[0].kind = RegionKind::Organ;
        assert!(!validate(&t).ok);
    }

    #[test]
    fn centroid_is_segment_midpoint() {
        let mut t = single_loop();
        t.regions[1].entry_m = [0.0, 0.0, 0.0];
        t.regions[1].exit_m = [0.0, 0.0, 0.1];
        assert_eq!(region_centroid(&t, 1).unwrap(), [0.0, 0.0, 0.05]);
        assert!(matches!(region_centroid(&t, 999), Err(Error::UnknownRegion(999))));
    }

    #[test]
    fn missing_speed_defaults_by_kind() {
        let text = r#"{"version":1,"heart_id":0,"anchor_position_m":[0,0,0],
            "regions":[
              {"id":0,"name":"heart","kind":"heart","length_cm":1,"entry_m":[0,0,0],"exit_m":[0,0,0.01]},
              {"id":1,"name":"liver","kind":"organ","length_cm":5,"entry_m":[0,0,0.01],"exit_m":[0,0,0.06]}],
            "edges":[{"from":0,"to":1,"p":1.0},{"from":1,"to":0,"p":1.0}]}"#;
        let t = parse_topology(text).unwrap();
        assert_eq!(t.regions.len(), 2);
        assert_eq!(t.regions[1].speed_cm_s, 1.0);
    }

    #[test]
    fn generator_small_sizes() {
        for n in 2..12 {
            let t = default_topology(n, 7).unwrap();
            assert_eq!(t.regions.len(), n);
            let r = validate(&t);
            assert!(r.ok, "n={n}: {:?}", r.violations);
        }
        assert!(default_topology(1, 0).is_err());
    }
}
