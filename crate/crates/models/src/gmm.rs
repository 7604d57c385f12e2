//! Univariate Gaussian mixtures fitted by EM, and the fixed-length feature
//! vectors the baseline classifier consumes.

use std::f64::consts::PI;

use fgl_autodiff::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const K_MAX: usize = 5;
/// Slack for round-off when asserting the likelihood never drops.
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration.
    pub trace: Vec<f64>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Seeded k-means++ centres over sorted data.
fn kmeans_pp(xs: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0x6a);
    let mut centres = vec![xs[r.random_range(0..xs.len())]];
    while centres.len() < k {
        let d2: Vec<f64> =
            xs.iter().map(|x| centres.iter().map(|c| (x - c).powi(2)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = r.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter().position(|d| {
                acc += d;
                acc > u
            })
            .unwrap_or(xs.len() - 1)
        } else {
            r.random_range(0..xs.len())
        };
        centres.push(xs[pick]);
    }
    centres
}

/// Per-point log-likelihood terms and total log-likelihood.
fn e_step(xs: &[f64], w: &[f64], mu: &[f64], var: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let mut ll = 0.0;
    let resp = xs
        .iter()
        .map(|&x| {
            let logs: Vec<f64> = (0..w.len()).map(|k| w[k].ln() + log_normal(x, mu[k], var[k])).collect();
            let lse = log_sum_exp(&logs);
            ll += lse;
            logs.into_iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    (resp, ll)
}

fn m_step(xs: &[f64], resp: &[Vec<f64>], k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let mut w = vec![0.0; k];
    let mut mu = vec![0.0; k];
    let mut var = vec![0.0; k];
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        if nk <= f64::MIN_POSITIVE {
            // A starved component keeps a tiny weight at the data mean.
            w[j] = f64::MIN_POSITIVE;
            mu[j] = xs.iter().sum::<f64>() / n;
            var[j] = VARIANCE_FLOOR;
            continue;
        }
        w[j] = nk / n;
        mu[j] = resp.iter().zip(xs).map(|(r, x)| r[j] * x).sum::<f64>() / nk;
        var[j] = (resp.iter().zip(xs).map(|(r, x)| r[j] * (x - mu[j]).powi(2)).sum::<f64>() / nk).max(VARIANCE_FLOOR);
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    (w, mu, var)
}

/// EM for a `k`-component 1-D mixture. Errors if the log-likelihood ever drops.
pub fn fit_gmm_1d(values: &[f64], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<GmmParams> {
    if !(2..=K_MAX).contains(&k) {
        return Err(Error::Config(format!("mixture components must lie in [2, {K_MAX}], got {k}")));
    }
    fit_any(values, k, seed, tol, max_iter)
}

fn fit_any(values: &[f64], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<GmmParams> {
    if values.len() < k {
        return Err(Error::TooFewValues { n: values.len(), k });
    }
    // Sorting first makes the fit independent of input order.
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);

    let centres = kmeans_pp(&xs, k, seed);
    let hard: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let best = (0..k).min_by(|&a, &b| (x - centres[a]).abs().total_cmp(&(x - centres[b]).abs())).unwrap_or(0);
            (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let (mut w, mut mu, mut var) = m_step(&xs, &hard, k);
    for j in 0..k {
        if hard.iter().all(|r| r[j] == 0.0) {
            mu[j] = centres[j];
        }
    }

    let (mut resp, mut ll) = e_step(&xs, &w, &mu, &var);
    let mut trace = vec![ll];
    for iter in 1..=max_iter {
        (w, mu, var) = m_step(&xs, &resp, k);
        let (r, next) = e_step(&xs, &w, &mu, &var);
        if next < ll - MONOTONE_SLACK * ll.abs().max(1.0) {
            return Err(Error::NonMonotone { iter, prev: ll, next });
        }
        trace.push(next);
        resp = r;
        let gain = next - ll;
        ll = next;
        if gain < tol {
            break;
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]).then(w[b].total_cmp(&w[a])));
    Ok(GmmParams {
        weights: order.iter().map(|&j| w[j]).collect(),
        means: order.iter().map(|&j| mu[j]).collect(),
        variances: order.iter().map(|&j| var[j]).collect(),
        log_likelihood: ll,
        trace,
    })
}

/// `[w₁, μ₁, σ²₁, …]` in mean order, zero-padded to `3·k_max`.
pub fn gmm_features(p: &GmmParams, k_max: usize) -> Vec<f64> {
    let mut f = vec![0.0; 3 * k_max];
    for j in 0..p.k().min(k_max) {
        f[3 * j] = p.weights[j];
        f[3 * j + 1] = p.means[j];
        f[3 * j + 2] = p.variances[j];
    }
    f
}

/// Features for an arbitrary non-empty set: sets smaller than `k` fit as many
/// components as they have values, and a single value becomes one component.
pub fn set_features(values: &[f64], k: usize, seed: u64) -> Result<Vec<f64>> {
    match values.len() {
        0 => Err(Error::EmptySet),
        1 => Ok(gmm_features(
            &GmmParams {
                weights: vec![1.0],
                means: vec![values[0]],
                variances: vec![VARIANCE_FLOOR],
                log_likelihood: log_normal(values[0], values[0], VARIANCE_FLOOR),
                trace: Vec::new(),
            },
            K_MAX,
        )),
        n => Ok(gmm_features(&fit_any(values, k.min(n), seed, 1e-6, 200)?, K_MAX)),
    }
}
