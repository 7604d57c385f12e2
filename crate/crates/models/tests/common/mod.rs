#![allow(dead_code)]

use fgl_core::dataset::{BuildConfigs, Dataset, NormParams, Placement, SampleSet, SetMeta};

/// An already-normalized dataset built from `(label, values)` pairs.
pub fn normalized(sets: Vec<(usize, Vec<f64>)>) -> Dataset {
    Dataset {
        sets: sets
            .into_iter()
            .map(|(label, values)| SampleSet {
                label,
                values,
                event_position_m: [0.0; 3],
                flags: Vec::new(),
                meta: SetMeta { placement: Placement::Centroid, seed: 0 },
            })
            .collect(),
        norm: Some(NormParams::new(0.0, 1.0).unwrap()),
        topology_hash: String::new(),
        configs: BuildConfigs::default(),
    }
}

pub fn ad_err(e: fgl_models::Error) -> fgl_autodiff::Error {
    fgl_autodiff::Error::Invalid(e.to_string())
}

/// Relative gap `max |a − b| / max(1, max |a|)`.
pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
