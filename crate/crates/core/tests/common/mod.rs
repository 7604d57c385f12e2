#![allow(dead_code)]

use fgl_core::topology::{Edge, Region, RegionKind, Topology};

pub fn region(id: usize, kind: RegionKind, length_cm: f64, speed: f64, entry: [f64; 3], exit: [f64; 3]) -> Region {
    Region { id, name: format!("r{id}"), kind, length_cm, speed_cm_s: speed, entry_m: entry, exit_m: exit }
}

pub fn edge(from: usize, to: usize, p: f64) -> Edge {
    Edge { from, to, p }
}

/// heart → aorta (1 s) → artery (1 s) → organ (5 s) → vein (5 s) → heart.
/// The heart segment sits well away from the loop so nothing is ever sampled there.
pub fn single_loop() -> Topology {
    Topology {
        version: 1,
        heart_id: 0,
        anchor_position_m: [0.0, 0.0, 0.0],
        regions: vec![
            region(0, RegionKind::Heart, 1.0, 20.0, [0.0, -0.05, 0.0], [0.0, -0.04, 0.0]),
            region(1, RegionKind::Aorta, 20.0, 20.0, [0.0, 0.0, 0.0], [0.0, 0.2, 0.0]),
            region(2, RegionKind::Artery, 10.0, 10.0, [0.0, 0.2, 0.0], [0.1, 0.2, 0.0]),
            region(3, RegionKind::Organ, 5.0, 1.0, [0.1, 0.2, 0.0], [0.15, 0.2, 0.0]),
            region(4, RegionKind::Vein, 20.0, 4.0, [0.15, 0.2, 0.0], [0.0, 0.0, 0.0]),
        ],
        edges: vec![edge(0, 1, 1.0), edge(1, 2, 1.0), edge(2, 3, 1.0), edge(3, 4, 1.0), edge(4, 0, 1.0)],
    }
}

/// Two organs behind a shared artery, with unequal branch probabilities.
pub fn skewed_branches() -> Topology {
    Topology {
        version: 1,
        heart_id: 0,
        anchor_position_m: [0.0, 0.0, 0.0],
        regions: vec![
            region(0, RegionKind::Heart, 1.0, 20.0, [0.0, -0.05, 0.0], [0.0, -0.04, 0.0]),
            region(1, RegionKind::Artery, 15.0, 10.0, [0.0, 0.0, 0.0], [0.0, 0.15, 0.0]),
            region(2, RegionKind::Organ, 4.0, 1.0, [0.0, 0.15, 0.0], [0.04, 0.15, 0.0]),
            region(3, RegionKind::Organ, 9.0, 1.0, [0.0, 0.15, 0.0], [-0.09, 0.15, 0.0]),
            region(4, RegionKind::Vein, 18.0, 3.0, [0.04, 0.15, 0.0], [0.0, 0.0, 0.0]),
            region(5, RegionKind::Vein, 25.0, 2.5, [-0.09, 0.15, 0.0], [0.0, 0.0, 0.0]),
        ],
        edges: vec![
            edge(0, 1, 1.0),
            edge(1, 2, 0.3),
            edge(1, 3, 0.7),
            edge(2, 4, 1.0),
            edge(3, 5, 1.0),
            edge(4, 0, 1.0),
            edge(5, 0, 1.0),
        ],
    }
}

/// A capillary bed that recirculates into its artery, giving geometric
/// numbers of passes, plus a shortcut straight back to the heart.
pub fn recirculating() -> Topology {
    Topology {
        version: 1,
        heart_id: 10,
        anchor_position_m: [0.0, 0.0, 0.0],
        regions: vec![
            region(10, RegionKind::Heart, 1.0, 20.0, [0.0, -0.05, 0.0], [0.0, -0.04, 0.0]),
            region(11, RegionKind::Aorta, 30.0, 20.0, [0.0, 0.0, 0.0], [0.0, 0.3, 0.0]),
            region(12, RegionKind::Artery, 8.0, 10.0, [0.0, 0.3, 0.0], [0.08, 0.3, 0.0]),
            region(13, RegionKind::Limb, 6.0, 1.0, [0.08, 0.3, 0.0], [0.14, 0.3, 0.0]),
            region(14, RegionKind::Vein, 30.0, 3.7, [0.14, 0.3, 0.0], [0.0, 0.0, 0.0]),
        ],
        edges: vec![
            edge(10, 11, 1.0),
            edge(11, 12, 0.8),
            edge(11, 10, 0.2),
            edge(12, 13, 1.0),
            edge(13, 12, 0.35),
            edge(13, 14, 0.65),
            edge(14, 10, 1.0),
        ],
    }
}

/// Mean first-return time by fixed-point iteration of the Bellman-style
/// recursion, independent of any linear solver.
pub fn iterate_loop_time(t: &Topology) -> f64 {
    use std::collections::HashMap;
    let time: HashMap<usize, f64> = t.regions.iter().map(|r| (r.id, r.traversal_s())).collect();
    let mut e: HashMap<usize, f64> = t.regions.iter().map(|r| (r.id, 0.0)).collect();
    for _ in 0..20_000 {
        let mut next = HashMap::new();
        for r in &t.regions {
            if r.id == t.heart_id {
                next.insert(r.id, 0.0);
                continue;
            }
            let tail: f64 = t.edges.iter().filter(|x| x.from == r.id).map(|x| x.p * e[&x.to]).sum();
            next.insert(r.id, time[&r.id] + tail);
        }
        e = next;
    }
    t.edges.iter().filter(|x| x.from == t.heart_id).map(|x| x.p * e[&x.to]).sum()
}
