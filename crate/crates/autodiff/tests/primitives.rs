//! Finite-difference and property checks for every differentiable primitive.

use fgl_autodiff::{finite_diff_check, rng, Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 1);
    Tensor::uniform(shape, 1.5, &mut r)
}

/// Weighted sum with fixed random weights so every output coordinate matters.
fn probe<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let w = tape.constant(random(&y.shape(), seed ^ 0xabc));
    Ok(y.mul(w)?.sum())
}

fn check(params: &[Tensor], f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>) -> f64 {
    finite_diff_check(f, params, EPS, 3).unwrap()
}

fn shapes_up_to_4d(seed: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, 7);
    let rank = r.random_range(1..=4);
    (0..rank).map(|_| r.random_range(1..=4)).collect()
}

#[test]
fn elementwise_unary_primitives() {
    for seed in 0..6 {
        let shape = shapes_up_to_4d(seed);
        let x = random(&shape, seed);
        let pos = x.clone();
        let pos = Tensor::new(pos.shape().to_vec(), pos.data().iter().map(|v| v.abs() + 0.2).collect()).unwrap();
        type Unary = for<'t> fn(Var<'t>) -> Var<'t>;
        let ops: [(&str, Unary); 8] = [
            ("relu", |v| v.relu()),
            ("exp", |v| v.exp()),
            ("sigmoid", |v| v.sigmoid()),
            ("tanh", |v| v.tanh()),
            ("softplus", |v| v.softplus()),
            ("square", |v| v.square()),
            ("scale", |v| v.scale(-2.5)),
            ("add_scalar", |v| v.add_scalar(0.7)),
        ];
        for (name, op) in ops {
            let err = check(&[x.clone()], |t, p| probe(t, op(p[0]), seed));
            assert!(err < TOL, "{name} {shape:?}: {err}");
        }
        let err = check(&[pos], |t, p| probe(t, p[0].log(), seed));
        assert!(err < TOL, "log {shape:?}: {err}");
    }
}

#[test]
fn binary_primitives_with_broadcast() {
    for seed in 0..6 {
        let shape = shapes_up_to_4d(seed + 10);
        let a = random(&shape, seed);
        let b = random(&shape, seed + 100);
        let suffix = random(&shape[shape.len() - 1..], seed + 200);
        for rhs in [b, suffix] {
            let e1 = check(&[a.clone(), rhs.clone()], |t, p| probe(t, p[0].add(p[1])?, seed));
            let e2 = check(&[a.clone(), rhs.clone()], |t, p| probe(t, p[0].sub(p[1])?, seed));
            let e3 = check(&[a.clone(), rhs.clone()], |t, p| probe(t, p[0].mul(p[1])?, seed));
            assert!(e1.max(e2).max(e3) < TOL, "{shape:?}: {e1} {e2} {e3}");
        }
    }
}

#[test]
fn matmul_and_transpose() {
    let a = random(&[3, 5], 1);
    let b = random(&[5, 4], 2);
    let err = check(&[a.clone(), b.clone()], |t, p| probe(t, p[0].matmul(p[1])?, 9));
    assert!(err < TOL, "{err}");
    let err = check(&[a, b], |t, p| probe(t, p[1].transpose()?.matmul(p[0].transpose()?)?, 9));
    assert!(err < TOL, "{err}");
}

#[test]
fn axis_primitives_on_every_axis() {
    for seed in 0..8 {
        let shape = shapes_up_to_4d(seed + 30);
        let x = random(&shape, seed);
        for axis in 0..shape.len() {
            let len = shape[axis];
            let es = check(&[x.clone()], |t, p| probe(t, p[0].softmax(axis)?, seed));
            let el = check(&[x.clone()], |t, p| probe(t, p[0].log_softmax(axis)?, seed));
            let em = check(&[x.clone()], |t, p| probe(t, p[0].mean(axis)?, seed));
            let gamma = random(&[len], seed + 1);
            let beta = random(&[len], seed + 2);
            let en = check(&[x.clone(), gamma.clone(), beta.clone()], |t, p| {
                probe(t, p[0].layer_norm(axis, Some(p[1]), Some(p[2]))?, seed)
            });
            let en0 = check(&[x.clone()], |t, p| probe(t, p[0].layer_norm(axis, None, None)?, seed));
            let ec = check(&[x.clone(), x.clone()], |t, p| probe(t, t.concat(&[p[0], p[1]], axis)?, seed));
            let ew = check(&[x.clone()], |t, p| probe(t, p[0].narrow(axis, len / 2, len - len / 2)?, seed));
            let worst = [es, el, em, en, en0, ec, ew].into_iter().fold(0.0, f64::max);
            assert!(worst < TOL, "{shape:?} axis {axis}: {es} {el} {em} {en} {en0} {ec} {ew}");
        }
    }
}

#[test]
fn seeded_stochastic_primitives_and_embedding() {
    let x = random(&[4, 3], 5);
    let err = check(&[x.clone()], |t, p| probe(t, p[0].dropout(0.4, 77, true)?, 1));
    assert!(err < TOL, "dropout {err}");
    let mu = random(&[3, 2], 6);
    let sigma = random(&[3, 2], 7);
    let err = check(&[mu, sigma], |t, p| probe(t, t.gaussian_sample(p[0], p[1], 123)?, 2));
    assert!(err < TOL, "gaussian_sample {err}");
    let table = random(&[5, 3], 8);
    let err = check(&[table], |t, p| probe(t, t.embed(p[0], &[4, 0, 4, 2])?, 3));
    assert!(err < TOL, "embed {err}");
}

#[test]
fn random_three_layer_net() {
    let x = random(&[6, 4], 11);
    let params = vec![
        random(&[4, 8], 12),
        random(&[8], 13),
        random(&[8, 8], 14),
        random(&[8], 15),
        random(&[8, 3], 16),
        random(&[3], 17),
    ];
    let err = check(&params, |t, p| {
        let x = t.constant(x.clone());
        let h = x.matmul(p[0])?.add(p[1])?.tanh();
        let h = h.matmul(p[2])?.add(p[3])?.relu();
        let y = h.matmul(p[4])?.add(p[5])?.log_softmax(1)?;
        Ok(y.narrow(1, 0, 1)?.sum().scale(-1.0))
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn dropout_preserves_expectation() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::full(&[100_000], 1.0));
    for p in [0.1, 0.5] {
        let y = x.dropout(p, 2024, true).unwrap().value();
        let mean = y.data().iter().sum::<f64>() / y.numel() as f64;
        assert!((mean - 1.0).abs() < 0.01, "p={p}: mean {mean}");
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..9, seed in 0u64..1000) {
        let tape = Tape::new();
        let mut r = rng::stream(seed, 2);
        let x = Tensor::uniform(&[rows, cols], 30.0, &mut r);
        let y = tape.constant(x).softmax(1).unwrap().value();
        for i in 0..rows {
            let row = y.row(i);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stochastic_ops_are_bit_reproducible(seed in any::<u64>(), p in 0.0f64..0.9) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(&[64], 2.0));
        let s = tape.constant(Tensor::full(&[64], 0.5));
        let a = x.dropout(p, seed, true).unwrap().value();
        let b = x.dropout(p, seed, true).unwrap().value();
        prop_assert_eq!(a, b);
        let g1 = tape.gaussian_sample(x, s, seed).unwrap().value();
        let g2 = tape.gaussian_sample(x, s, seed).unwrap().value();
        prop_assert_eq!(g1, g2);
    }
}
