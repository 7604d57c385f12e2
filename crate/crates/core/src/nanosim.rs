//! Discrete-time simulation of blood-borne nanodevices.
//!
//! Each device walks the topology's Markov chain, harvests energy in whole
//! cycles, samples for the event at a fixed rate, and answers anchor beacons
//! with its last completed circulation time when it is powered and within THz
//! range of the anchor. Time is gridded at 1 ms; movement between grid points
//! is continuous so heart passages are timed exactly.


use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3};
use crate::rng;
use crate::topology::{Chain, Topology};

/// Simulation grid step in seconds.
pub const TICK_S: f64 = 1e-3;
const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
const ON_SEGMENT_TOL_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_devices: usize,
    pub duration_s: f64,
    pub beacon_interval_s: f64,
    pub sampling_rate_hz: f64,
    pub event_detect_radius_m: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_devices: 64,
            duration_s: 1200.0,
            beacon_interval_s: 0.1,
            sampling_rate_hz: 3.0,
            event_detect_radius_m: 0.01,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_devices < 1 {
            return Err(Error::Config("n_devices must be >= 1".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::Config(format!("duration_s must be >= 0, got {}", self.duration_s)));
        }
        for (name, v) in [
            ("beacon_interval_s", self.beacon_interval_s),
            ("sampling_rate_hz", self.sampling_rate_hz),
            ("event_detect_radius_m", self.event_detect_radius_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn beacon_ticks(&self) -> u64 {
        ((self.beacon_interval_s / TICK_S).round() as u64).max(1)
    }

    fn sample_ticks(&self) -> u64 {
        ((1.0 / (self.sampling_rate_hz * TICK_S)).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConfig {
    pub v_g_volts: f64,
    pub e_tx_pj: f64,
    pub e_rx_pj: f64,
    pub e_max_pj: f64,
    pub on_threshold_pj: f64,
    pub off_threshold_pj: f64,
    pub harvest_cycle_s: f64,
    pub harvest_charge_pc: f64,
    /// Stored energy every device starts with.
    pub initial_energy_pj: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            v_g_volts: 0.42,
            e_tx_pj: 1.0,
            e_rx_pj: 0.0,
            e_max_pj: 800.0,
            on_threshold_pj: 10.0,
            off_threshold_pj: 0.0,
            harvest_cycle_s: 0.020,
            harvest_charge_pc: 6.0,
            initial_energy_pj: 0.0,
        }
    }
}

impl EnergyConfig {
    /// Devices that start full and never pay for a report.
    pub fn unlimited() -> Self {
        Self { e_tx_pj: 0.0, initial_energy_pj: 800.0, ..Self::default() }
    }

    /// Picojoules gained per harvesting cycle (pC × V).
    pub fn energy_per_cycle_pj(&self) -> f64 {
        self.harvest_charge_pc * self.v_g_volts
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.e_max_pj >= self.on_threshold_pj
            && self.on_threshold_pj > self.off_threshold_pj
            && self.off_threshold_pj >= 0.0
            && self.harvest_cycle_s > 0.0
            && self.harvest_charge_pc >= 0.0
            && self.v_g_volts >= 0.0
            && self.e_tx_pj >= 0.0
            && self.e_rx_pj >= 0.0
            && (0.0..=self.e_max_pj).contains(&self.initial_energy_pj);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent energy configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub p_tx_dbm: f64,
    pub bandwidth_ghz: f64,
    pub sensitivity_dbm: f64,
    pub frequency_thz: f64,
    pub medium_attenuation_db_per_m: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            p_tx_dbm: -20.0,
            bandwidth_ghz: 10.0,
            sensitivity_dbm: -110.0,
            frequency_thz: 1.0,
            medium_attenuation_db_per_m: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_thz > 0.0) || !(self.sensitivity_dbm < self.p_tx_dbm) || self.medium_attenuation_db_per_m < 0.0
        {
            return Err(Error::Config(format!("inconsistent link configuration {self:?}")));
        }
        Ok(())
    }
}

/// Free-space path loss in dB at `distance_m` and `frequency_hz`.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT_M_S).log10()
}

pub fn received_power_dbm(lc: &LinkConfig, distance_m: f64) -> f64 {
    lc.p_tx_dbm - fspl_db(distance_m, lc.frequency_thz * 1e12) - lc.medium_attenuation_db_per_m * distance_m
}

pub fn link_budget_ok(lc: &LinkConfig, distance_m: f64) -> bool {
    received_power_dbm(lc, distance_m) >= lc.sensitivity_dbm
}

/// Largest distance at which the link closes.
pub fn max_comm_range(lc: &LinkConfig) -> f64 {
    let margin_db = lc.p_tx_dbm - lc.sensitivity_dbm;
    let free_space = SPEED_OF_LIGHT_M_S / (4.0 * std::f64::consts::PI * lc.frequency_thz * 1e12) * 10f64.powf(margin_db / 20.0);
    if lc.medium_attenuation_db_per_m == 0.0 {
        return free_space;
    }
    if !lc.medium_attenuation_db_per_m.is_finite() {
        return 0.0;
    }
    // received power is strictly decreasing in distance
    let (mut lo, mut hi) = (0.0, free_space);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if link_budget_ok(lc, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Closed-ball event detection.
pub fn detect_event(pos_m: Vec3, event_pos_m: Vec3, radius_m: f64) -> bool {
    geometry::distance(pos_m, event_pos_m) <= radius_m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub region_id: usize,
    pub position_m: Vec3,
}

impl EventSpec {
    pub fn at_centroid(t: &Topology, region_id: usize) -> Result<Self> {
        Ok(Self { region_id, position_m: t.region(region_id)?.centroid_m() })
    }

    /// Event at fraction `f` ∈ [0, 1] along the region segment.
    pub fn along(t: &Topology, region_id: usize, f: f64) -> Result<Self> {
        Ok(Self { region_id, position_m: t.region(region_id)?.position_at(f) })
    }

    pub fn validate(&self, t: &Topology) -> Result<()> {
        let r = t.region(self.region_id)?;
        let d = geometry::distance_to_segment(self.position_m, r.entry_m, r.exit_m);
        if d > ON_SEGMENT_TOL_M {
            return Err(Error::Config(format!("event is {d} m off the segment of region {}", self.region_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirculationReport {
    pub device_id: usize,
    pub report_time_s: f64,
    pub circulation_time_s: f64,
    pub event_bit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NanodeviceState {
    pub device_id: usize,
    pub current_region: usize,
    pub fraction_traversed: f64,
    pub energy_pj: f64,
    pub active: bool,
    pub time_since_heart_s: f64,
    pub event_bit: bool,
    /// Time accumulated toward the next completed harvesting cycle.
    pub harvest_phase_s: f64,
}

impl NanodeviceState {
    pub fn cold(device_id: usize, region: usize, energy_pj: f64, ec: &EnergyConfig) -> Self {
        Self {
            device_id,
            current_region: region,
            fraction_traversed: 0.0,
            energy_pj,
            active: energy_pj >= ec.on_threshold_pj,
            time_since_heart_s: 0.0,
            event_bit: false,
            harvest_phase_s: 0.0,
        }
    }
}

fn apply_hysteresis(energy: f64, active: bool, ec: &EnergyConfig) -> bool {
    if energy >= ec.on_threshold_pj {
        true
    } else if energy <= ec.off_threshold_pj {
        false
    } else {
        active
    }
}

/// Advances harvesting by `dt` seconds: only whole cycles pay out, the
/// remainder carries over. Storage clamps at `e_max`.
pub fn step_energy(s: &NanodeviceState, ec: &EnergyConfig, dt: f64) -> NanodeviceState {
    let mut next = s.clone();
    let elapsed = s.harvest_phase_s + dt.max(0.0);
    let cycles = (elapsed / ec.harvest_cycle_s + 1e-9).floor();
    next.harvest_phase_s = (elapsed - cycles * ec.harvest_cycle_s).max(0.0);
    next.energy_pj = (s.energy_pj + cycles * ec.energy_per_cycle_pj()).min(ec.e_max_pj);
    next.active = apply_hysteresis(next.energy_pj, s.active, ec);
    next
}

/// Spends `cost` pJ if available; returns whether the device could pay.
fn spend(s: &mut NanodeviceState, ec: &EnergyConfig, cost: f64) -> bool {
    if s.energy_pj + 1e-12 < cost {
        return false;
    }
    s.energy_pj = (s.energy_pj - cost).max(0.0);
    s.active = apply_hysteresis(s.energy_pj, s.active, ec);
    true
}

/// A device's passage through the chain in continuous time.
pub struct Walker<'a> {
    chain: &'a Chain,
    rng: rng::StreamRng,
    pub region: usize,
    pub enter_s: f64,
    pub exit_s: f64,
    pub last_heart_s: f64,
}

impl<'a> Walker<'a> {
    /// Starts at the heart at `t = 0`.
    pub fn new(chain: &'a Chain, rng: rng::StreamRng) -> Self {
        let mut w = Self { chain, rng, region: chain.heart, enter_s: 0.0, exit_s: 0.0, last_heart_s: 0.0 };
        w.leave_heart(0.0);
        w
    }

    fn leave_heart(&mut self, at: f64) {
        let next = self.chain.sample_next(self.chain.heart, &mut self.rng);
        self.enter(next, at);
    }

    fn enter(&mut self, region: usize, at: f64) {
        self.region = region;
        self.enter_s = at;
        self.exit_s = at + self.chain.traversal_s[region];
    }

    /// Moves to time `t`, calling `on_heart(passage_time, loop_time)` at each
    /// heart passage crossed on the way.
    pub fn advance_to(&mut self, t: f64, mut on_heart: impl FnMut(f64, f64)) {
        while self.exit_s <= t {
            let at = self.exit_s;
            let next = self.chain.sample_next(self.region, &mut self.rng);
            if next == self.chain.heart {
                on_heart(at, at - self.last_heart_s);
                self.last_heart_s = at;
                self.leave_heart(at);
            } else {
                self.enter(next, at);
            }
        }
    }

    pub fn fraction_at(&self, t: f64) -> f64 {
        let span = self.exit_s - self.enter_s;
        if span <= 0.0 {
            0.0
        } else {
            ((t - self.enter_s) / span).clamp(0.0, 1.0)
        }
    }

    /// Walks until `n` loops complete and returns their durations.
    pub fn sample_loops(mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let t = self.exit_s;
            self.advance_to(t, |_, dur| out.push(dur));
        }
        out.truncate(n);
        out
    }
}

/// Monte-Carlo circulation times from the mobility model alone.
pub fn sample_loop_times(t: &Topology, n_loops: usize, seed: u64) -> Vec<f64> {
    let chain = t.chain();
    Walker::new(&chain, rng::stream(seed, 0)).sample_loops(n_loops)
}

struct DeviceCtx<'a> {
    topology: &'a Topology,
    chain: &'a Chain,
    sc: &'a SimConfig,
    ec: &'a EnergyConfig,
    event: &'a EventSpec,
    range_m: f64,
}

fn simulate_device(ctx: &DeviceCtx<'_>, device_id: usize) -> Vec<CirculationReport> {
    let DeviceCtx { topology, chain, sc, ec, event, range_m } = *ctx;
    let total_ticks = (sc.duration_s / TICK_S).round() as u64;
    let (beacon, sample, harvest) = (sc.beacon_ticks(), sc.sample_ticks(), ((ec.harvest_cycle_s / TICK_S).round() as u64).max(1));
    let mut walker = Walker::new(chain, rng::stream(sc.seed, device_id as u64));
    let mut state = NanodeviceState::cold(device_id, chain.ids[walker.region], ec.initial_energy_pj, ec);
    let mut pending: Option<f64> = None;
    let mut pending_bit = false;
    let mut reports = Vec::new();

    let next_multiple = |k: u64, m: u64| (k / m + 1) * m;
    let mut tick = 0u64;
    loop {
        let next = next_multiple(tick, beacon).min(next_multiple(tick, sample)).min(next_multiple(tick, harvest));
        if next > total_ticks {
            break;
        }
        tick = next;
        let now = tick as f64 * TICK_S;

        walker.advance_to(now, |_, loop_s| {
            pending = Some(loop_s);
            pending_bit |= state.event_bit;
            state.event_bit = false;
        });
        state.current_region = chain.ids[walker.region];
        state.fraction_traversed = walker.fraction_at(now);
        state.time_since_heart_s = now - walker.last_heart_s;

        if tick % harvest == 0 && (state.energy_pj < ec.e_max_pj || !state.active) {
            state.energy_pj = (state.energy_pj + ec.energy_per_cycle_pj()).min(ec.e_max_pj);
            state.active = apply_hysteresis(state.energy_pj, state.active, ec);
        }

        let here = topology.regions[walker.region].position_at(state.fraction_traversed);
        if tick % sample == 0 && state.active && detect_event(here, event.position_m, sc.event_detect_radius_m) {
            state.event_bit = true;
        }
        if tick % beacon == 0 && state.active {
            if let Some(loop_s) = pending {
                if geometry::distance(here, topology.anchor_position_m) <= range_m && spend(&mut state, ec, ec.e_tx_pj) {
                    reports.push(CirculationReport {
                        device_id,
                        report_time_s: now,
                        circulation_time_s: loop_s,
                        event_bit: pending_bit,
                    });
                    pending = None;
                    pending_bit = false;
                }
            }
        }
    }
    reports
}

/// Runs every device and merges their reports by `(report_time, device_id)`.
pub fn simulate(
    t: &Topology,
    sc: &SimConfig,
    ec: &EnergyConfig,
    lc: &LinkConfig,
    event: &EventSpec,
) -> Result<Vec<CirculationReport>> {
    sc.validate()?;
    ec.validate()?;
    lc.validate()?;
    event.validate(t)?;
    let chain = t.chain();
    let ctx = DeviceCtx { topology: t, chain: &chain, sc, ec, event, range_m: max_comm_range(lc) };
    let mut reports: Vec<CirculationReport> =
        (0..sc.n_devices).into_par_iter().flat_map_iter(|d| simulate_device(&ctx, d)).collect();
    reports.sort_by(|a, b| a.report_time_s.total_cmp(&b.report_time_s).then(a.device_id.cmp(&b.device_id)));
    Ok(reports)
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[CirculationReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    out
}
