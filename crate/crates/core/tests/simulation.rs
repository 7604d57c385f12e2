mod common;

use fgl_core::nanosim::{
    detect_event, fspl_db, link_budget_ok, max_comm_range, reports_to_jsonl, simulate, step_energy, EnergyConfig,
    EventSpec, LinkConfig, NanodeviceState, SimConfig,
};
use proptest::prelude::*;

fn one_device(duration_s: f64) -> SimConfig {
    SimConfig { n_devices: 1, duration_s, seed: 5, ..SimConfig::default() }
}

#[test]
fn single_loop_reports_every_twelve_seconds() {
    let t = common::single_loop();
    let event = EventSpec::at_centroid(&t, 3).unwrap();
    let reports =
        simulate(&t, &one_device(1200.0), &EnergyConfig::unlimited(), &LinkConfig::default(), &event).unwrap();
    assert!((99..=100).contains(&reports.len()), "{}", reports.len());
    for r in &reports {
        assert!((r.circulation_time_s - 12.0).abs() < 1e-9, "{r:?}");
        assert!(r.event_bit);
    }
}

#[test]
fn event_away_from_the_path_is_never_seen() {
    // The heart is passed instantaneously, so its segment is never sampled.
    let t = common::single_loop();
    let event = EventSpec::at_centroid(&t, 0).unwrap();
    let reports =
        simulate(&t, &one_device(1200.0), &EnergyConfig::unlimited(), &LinkConfig::default(), &event).unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| !r.event_bit));
}

#[test]
fn only_loops_through_the_event_carry_the_bit() {
    let t = common::skewed_branches();
    let event = EventSpec::at_centroid(&t, 2).unwrap();
    let sc = SimConfig { n_devices: 8, duration_s: 600.0, seed: 9, ..SimConfig::default() };
    let reports = simulate(&t, &sc, &EnergyConfig::unlimited(), &LinkConfig::default(), &event).unwrap();
    let short = 1.5 + 4.0 + 6.0;
    let long = 1.5 + 9.0 + 10.0;
    for r in &reports {
        let through_event = (r.circulation_time_s - short).abs() < 1e-9;
        assert!(through_event || (r.circulation_time_s - long).abs() < 1e-9, "{r:?}");
        assert_eq!(r.event_bit, through_event, "{r:?}");
    }
    assert!(reports.iter().any(|r| r.event_bit) && reports.iter().any(|r| !r.event_bit));
}

#[test]
fn zero_duration_gives_no_reports() {
    let t = common::single_loop();
    let event = EventSpec::at_centroid(&t, 3).unwrap();
    let r = simulate(&t, &one_device(0.0), &EnergyConfig::default(), &LinkConfig::default(), &event).unwrap();
    assert!(r.is_empty());
}

#[test]
fn simulation_is_reproducible_and_sorted() {
    let t = fgl_core::topology::default_topology(16, 3).unwrap();
    let event = EventSpec::along(&t, 5, 0.3).unwrap();
    let sc = SimConfig { n_devices: 12, duration_s: 300.0, seed: 77, ..SimConfig::default() };
    let run = || simulate(&t, &sc, &EnergyConfig::default(), &LinkConfig::default(), &event).unwrap();
    let a = run();
    assert_eq!(reports_to_jsonl(&a), reports_to_jsonl(&run()));
    assert!(a.windows(2).all(|w| (w[0].report_time_s, w[0].device_id) <= (w[1].report_time_s, w[1].device_id)));
    let other = SimConfig { seed: 78, ..sc };
    let b = simulate(&t, &other, &EnergyConfig::default(), &LinkConfig::default(), &event).unwrap();
    assert_ne!(reports_to_jsonl(&a), reports_to_jsonl(&b));
}

#[test]
fn adding_devices_does_not_perturb_existing_ones() {
    let t = fgl_core::topology::default_topology(16, 3).unwrap();
    let event = EventSpec::at_centroid(&t, 6).unwrap();
    let small = SimConfig { n_devices: 3, duration_s: 200.0, seed: 4, ..SimConfig::default() };
    let big = SimConfig { n_devices: 9, ..small };
    let (ec, lc) = (EnergyConfig::default(), LinkConfig::default());
    let a = simulate(&t, &small, &ec, &lc, &event).unwrap();
    let b: Vec<_> = simulate(&t, &big, &ec, &lc, &event).unwrap().into_iter().filter(|r| r.device_id < 3).collect();
    assert_eq!(a, b);
}

#[test]
fn devices_without_energy_never_report() {
    let t = common::single_loop();
    let event = EventSpec::at_centroid(&t, 3).unwrap();
    let dead = EnergyConfig { harvest_charge_pc: 0.0, initial_energy_pj: 5.0, ..EnergyConfig::default() };
    let r = simulate(&t, &one_device(600.0), &dead, &LinkConfig::default(), &event).unwrap();
    assert!(r.is_empty());

    // 12 pJ and no harvesting pays for exactly 12 one-pulse reports.
    let budget = EnergyConfig { harvest_charge_pc: 0.0, initial_energy_pj: 12.0, ..EnergyConfig::default() };
    let r = simulate(&t, &one_device(1200.0), &budget, &LinkConfig::default(), &event).unwrap();
    assert_eq!(r.len(), 12);
}

#[test]
fn reports_only_within_anchor_range() {
    let mut t = common::single_loop();
    t.anchor_position_m = [0.0, -0.5, 0.0];
    let event = EventSpec::at_centroid(&t, 3).unwrap();
    // Range shorter than any point of the loop: nothing gets through.
    let deaf = LinkConfig { sensitivity_dbm: -21.0, ..LinkConfig::default() };
    assert!(max_comm_range(&deaf) < 1e-3);
    let r = simulate(&t, &one_device(600.0), &EnergyConfig::unlimited(), &deaf, &event).unwrap();
    assert!(r.is_empty());
    // 0.5 m away is inside the default 0.754 m range.
    let r = simulate(&t, &one_device(600.0), &EnergyConfig::unlimited(), &LinkConfig::default(), &event).unwrap();
    assert!(!r.is_empty());
}

#[test]
fn energy_per_cycle_and_thresholds() {
    let ec = EnergyConfig::default();
    assert_eq!(ec.energy_per_cycle_pj(), 6.0 * 0.42);
    assert!((ec.energy_per_cycle_pj() - 2.52).abs() < 1e-15);

    let mut s = NanodeviceState::cold(0, 0, 0.0, &ec);
    assert!(!s.active);
    let mut cycles = 0;
    while !s.active {
        s = step_energy(&s, &ec, ec.harvest_cycle_s);
        cycles += 1;
    }
    assert_eq!(cycles, 4);
    assert!((cycles as f64 * ec.harvest_cycle_s - 0.080).abs() < 1e-12);

    let mut s = NanodeviceState::cold(0, 0, 0.0, &ec);
    let mut cycles = 0;
    while s.energy_pj < ec.e_max_pj {
        s = step_energy(&s, &ec, ec.harvest_cycle_s);
        cycles += 1;
    }
    assert_eq!(cycles, 318);
    assert!((cycles as f64 * ec.harvest_cycle_s - 6.36).abs() < 1e-12);
    assert_eq!(s.energy_pj, 800.0);
}

#[test]
fn link_budget_points() {
    let lc = LinkConfig::default();
    assert!((fspl_db(1.0, 1e12) - 92.45).abs() < 5e-3);
    assert!((fspl_db(0.1, 1e12) - 72.45).abs() < 5e-3);
    assert!(!link_budget_ok(&lc, 1.0));
    assert!(link_budget_ok(&lc, 0.1));
    assert!((max_comm_range(&lc) - 0.754).abs() < 1e-3);

    let r120 = max_comm_range(&LinkConfig { sensitivity_dbm: -120.0, ..lc });
    let r100 = max_comm_range(&LinkConfig { sensitivity_dbm: -100.0, ..lc });
    assert!((r120 / r100 - 10.0).abs() < 1e-9);

    let exact = LinkConfig { p_tx_dbm: lc.sensitivity_dbm + fspl_db(1.0, 1e12), ..lc };
    assert!((max_comm_range(&exact) - 1.0).abs() < 1e-9);

    let lossy = LinkConfig { medium_attenuation_db_per_m: 10.0, ..lc };
    let d = max_comm_range(&lossy);
    assert!(d < max_comm_range(&lc));
    assert!(link_budget_ok(&lossy, d) && !link_budget_ok(&lossy, d + 1e-6));
    let opaque = LinkConfig { medium_attenuation_db_per_m: f64::INFINITY, ..lc };
    assert!(!link_budget_ok(&opaque, 1e-6));
}

#[test]
fn detection_is_a_closed_ball() {
    assert!(detect_event([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], 0.01));
    assert!(detect_event([0.0, 0.0, 0.0], [0.0, 0.0, 0.25], 0.25));
    assert!(!detect_event([0.0, 0.0, 0.0], [0.02, 0.0, 0.0], 0.01));
}

#[test]
fn off_segment_event_is_rejected() {
    let t = common::single_loop();
    let mut e = EventSpec::at_centroid(&t, 3).unwrap();
    e.position_m[2] += 0.02;
    assert!(simulate(&t, &one_device(10.0), &EnergyConfig::default(), &LinkConfig::default(), &e).is_err());
}

proptest! {
    #[test]
    fn harvest_conserves_energy(start in 0.0f64..800.0, dts in prop::collection::vec(0.0f64..0.2, 1..40)) {
        let ec = EnergyConfig::default();
        let mut s = NanodeviceState::cold(0, 0, start, &ec);
        let mut total = 0.0;
        for dt in dts {
            let before = s.energy_pj;
            let phase = s.harvest_phase_s;
            s = step_energy(&s, &ec, dt);
            total += dt;
            let cycles = ((phase + dt) / ec.harvest_cycle_s + 1e-9).floor();
            let expected = (before + cycles * ec.energy_per_cycle_pj()).min(ec.e_max_pj);
            prop_assert!((s.energy_pj - expected).abs() < 1e-9);
            prop_assert!(s.energy_pj >= 0.0 && s.energy_pj <= ec.e_max_pj);
            prop_assert!(!s.active || s.energy_pj >= ec.off_threshold_pj);
        }
        // harvest never outruns wall time
        let max_cycles = (total / ec.harvest_cycle_s + 1e-6).floor();
        prop_assert!(s.energy_pj <= start + max_cycles * ec.energy_per_cycle_pj() + 1e-9);
    }
}
