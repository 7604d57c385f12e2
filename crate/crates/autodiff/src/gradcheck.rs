//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Number of coordinates probed when a model has more than this many.
pub const MIN_PROBED_COORDS: usize = 100;
const PROBED_COORDS: usize = 200;

fn eval<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let shape = out.shape();
    if shape.iter().product::<usize>() != 1 {
        return Err(Error::NonScalarLoss(shape));
    }
    Ok(out.item())
}

/// Compares reverse-mode gradients of the scalar `model_fn(params)` against
/// central differences with step `eps`.
///
/// Probes every coordinate when there are at most 200, otherwise a seeded
/// random subset of 200. Returns `max |analytic − numeric| / max(1, |numeric|)`.
/// `model_fn` must be deterministic: stochastic primitives need fixed seeds.
pub fn finite_diff_check<F>(model_fn: F, params: &[Tensor], eps: f64, seed: u64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = model_fn(&tape, &vars)?;
        let g = tape.backward(loss)?;
        vars.iter().map(|v| g.get(*v)).collect()
    };
    let base = eval(&model_fn, params)?;
    if eval(&model_fn, params)?.to_bits() != base.to_bits() {
        return Err(Error::NonDeterministic);
    }

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.numel()).map(move |ci| (pi, ci)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= PROBED_COORDS {
        (0..coords.len()).collect()
    } else {
        let mut r = rng::stream(seed, 0x9c);
        sample(&mut r, coords.len(), PROBED_COORDS).into_vec()
    };

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for ix in chosen {
        let (pi, ci) = coords[ix];
        let orig = work[pi].data()[ci];
        work[pi].data_mut()[ci] = orig + eps;
        let up = eval(&model_fn, &work)?;
        work[pi].data_mut()[ci] = orig - eps;
        let down = eval(&model_fn, &work)?;
        work[pi].data_mut()[ci] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[pi].data()[ci] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_is_exact() {
        let x = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let w = Tensor::new(vec![4, 2], (0..8).map(|i| (i as f64).sin()).collect()).unwrap();
        let err = finite_diff_check(
            |tape, p| {
                let x = tape.constant(x.clone());
                Ok(x.matmul(p[0])?.sum())
            },
            &[w],
            1e-5,
            0,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn unfrozen_dropout_is_rejected() {
        use std::sync::atomic::{AtomicU64, Ordering};
        let counter = AtomicU64::new(0);
        let w = Tensor::full(&[50], 1.0);
        let res = finite_diff_check(
            |_, p| {
                let seed = counter.fetch_add(1, Ordering::Relaxed);
                Ok(p[0].dropout(0.5, seed, true)?.sum())
            },
            &[w],
            1e-5,
            0,
        );
        assert!(matches!(res, Err(Error::NonDeterministic)));
    }
}
