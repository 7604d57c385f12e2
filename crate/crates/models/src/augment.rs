//! Appending synthetic circulation times to a training set.

use std::fmt;
use std::str::FromStr;

use fgl_autodiff::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can draw normalized circulation times for a label.
pub trait Generator: Sync {
    fn sample(&self, label: usize, n: usize, seed: u64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    /// Append `⌈n/2⌉` synthetic values.
    Fixed,
    /// Append a count drawn uniformly from `0..=n`.
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::Fixed => "fixed",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "fixed" => Ok(Strategy::Fixed),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!("unknown augmentation strategy {other:?}"))),
        }
    }
}

/// How many synthetic values a strategy appends to a set of size `n`.
pub fn appended_count(strategy: Strategy, n: usize, seed: u64) -> usize {
    match strategy {
        Strategy::None => 0,
        Strategy::Fixed => n.div_ceil(2),
        Strategy::Random => rng::stream(seed, 0xa06).random_range(0..=n),
    }
}

/// Returns `values` followed by freshly generated samples for `label`.
pub fn augment_set(
    values: &[f64],
    strategy: Strategy,
    generator: Option<&dyn Generator>,
    label: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptySet);
    }
    if strategy == Strategy::None {
        return Ok(values.to_vec());
    }
    let g = generator.ok_or(Error::MissingGenerator)?;
    let k = appended_count(strategy, values.len(), seed);
    let mut out = values.to_vec();
    out.extend(g.sample(label, k, rng::mix(seed, 0x5a3))?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Const(f64);

    impl Generator for Const {
        fn sample(&self, _: usize, n: usize, _: u64) -> Result<Vec<f64>> {
            Ok(vec![self.0; n])
        }
    }

    #[test]
    fn none_is_identity_without_generator() {
        assert_eq!(augment_set(&[0.1, 0.2], Strategy::None, None, 0, 1).unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn fixed_appends_half_rounded_up() {
        let g = Const(0.9);
        for (n, want) in [(1, 2), (4, 6), (5, 8)] {
            let v = vec![0.1; n];
            let out = augment_set(&v, Strategy::Fixed, Some(&g), 0, 3).unwrap();
            assert_eq!(out.len(), want);
            assert_eq!(&out[..n], &v[..]);
        }
    }

    #[test]
    fn generator_required_and_input_nonempty() {
        assert!(matches!(augment_set(&[0.1], Strategy::Fixed, None, 0, 0), Err(Error::MissingGenerator)));
        assert!(matches!(augment_set(&[], Strategy::None, None, 0, 0), Err(Error::EmptySet)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::None, Strategy::Fixed, Strategy::Random] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("half".parse::<Strategy>().is_err());
    }
}
