mod common;

use common::ad_err;
use fgl_autodiff::nn::{Bound, ParamStore};
use fgl_autodiff::{finite_diff_check, rng, Tape, Tensor, Var};
use fgl_models::generative::{bce_fake, bce_real, GenConfig, GenKind, GenModel};
use fgl_models::set_transformer::{Isab, Mab, Pma, SetTransformer, StConfig};
use fgl_models::training::Dropout;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn input(rows: usize, cols: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[rows, cols], 1.0, &mut rng::stream(seed, 3))
}

/// Weighted sum so every output coordinate influences the scalar.
fn probe<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> fgl_autodiff::Result<Var<'t>> {
    let w = tape.constant(Tensor::uniform(&y.shape(), 1.0, &mut rng::stream(seed, 4)));
    Ok(y.mul(w)?.sum())
}

fn check_store(store: &ParamStore, f: impl for<'t> Fn(&'t Tape, &Bound<'t>) -> fgl_autodiff::Result<Var<'t>>) -> f64 {
    finite_diff_check(
        |tape, vars| f(tape, &Bound::from_vars(vars.to_vec())),
        store.tensors(),
        EPS,
        17,
    )
    .unwrap()
}

#[test]
fn attention_block_gradients() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, "mab", 8, 2, 0, &mut rng::stream(1, 0));
    let (x, y) = (input(3, 8, 1), input(5, 8, 2));
    let err = check_store(&store, |tape, p| {
        let out = mab.forward(p, tape.constant(x.clone()), tape.constant(y.clone()), &Dropout::EVAL).map_err(ad_err)?;
        probe(tape, out, 5)
    });
    assert!(err < TOL, "mab {err}");
}

#[test]
fn attention_block_gradients_with_dropout() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, "mab", 8, 4, 0, &mut rng::stream(2, 0));
    let x = input(4, 8, 3);
    let drop = Dropout::train(0.3, 77);
    let err = check_store(&store, |tape, p| {
        let xv = tape.constant(x.clone());
        probe(tape, mab.forward(p, xv, xv, &drop).map_err(ad_err)?, 6)
    });
    assert!(err < TOL, "sab with dropout {err}");
}

#[test]
fn induced_block_gradients() {
    let mut store = ParamStore::new();
    let isab = Isab::new(&mut store, "isab", 8, 2, 2, 0, &mut rng::stream(3, 0));
    let x = input(4, 8, 4);
    let err = check_store(&store, |tape, p| {
        probe(tape, isab.forward(p, tape.constant(x.clone()), &Dropout::EVAL).map_err(ad_err)?, 7)
    });
    assert!(err < TOL, "isab {err}");
}

#[test]
fn pooling_block_gradients() {
    let mut store = ParamStore::new();
    let pma = Pma::new(&mut store, "pma", 8, 2, 2, 0, &mut rng::stream(4, 0));
    let z = input(5, 8, 5);
    let err = check_store(&store, |tape, p| {
        probe(tape, pma.forward(p, tape.constant(z.clone()), &Dropout::EVAL).map_err(ad_err)?, 8)
    });
    assert!(err < TOL, "pma {err}");
}

#[test]
fn full_set_transformer_gradients() {
    let cfg = StConfig { d_hidden: 8, n_heads: 2, m_inducing: 2, n_classes: 4, dropout_p: 0.0, ..StConfig::default() };
    let model = SetTransformer::new(cfg, 5).unwrap();
    let values = [0.1, 0.7, 0.35, 0.9, 0.2];
    let err = check_store(&model.store, |tape, p| {
        let logits = model.forward(p, tape, &values, &Dropout::EVAL).map_err(ad_err)?;
        Ok(logits.log_softmax(1)?.narrow(1, 2, 1)?.mean_all().scale(-1.0))
    });
    assert!(err < TOL, "set transformer {err}");
}

fn split_bound<'t>(m: &GenModel, vars: &[Var<'t>]) -> (Bound<'t>, Bound<'t>) {
    let n = m.gen.len();
    (Bound::from_vars(vars[..n].to_vec()), Bound::from_vars(vars[n..].to_vec()))
}

fn all_params(m: &GenModel) -> Vec<Tensor> {
    m.gen.tensors().iter().chain(m.aux.tensors()).cloned().collect()
}

fn gen_config(kind: GenKind) -> GenConfig {
    GenConfig { hidden_width: 8, n_layers: 2, latent_dim: 3, label_embed_dim: 4, ..GenConfig::new(kind, 3) }
}

#[test]
fn adversarial_network_gradients() {
    let m = GenModel::new(gen_config(GenKind::Cgan), 2).unwrap();
    let labels = [0usize, 2, 1, 2];
    let (x, z) = (input(4, 1, 6), input(4, 3, 7));
    let err = finite_diff_check(
        |tape, vars| {
            let (pg, pa) = split_bound(&m, vars);
            let fake = m.generate(&pg, tape, tape.constant(z.clone()), &labels).map_err(ad_err)?;
            let d_fake = m.auxiliary(&pa, tape, fake, &labels).map_err(ad_err)?;
            let d_real = m.auxiliary(&pa, tape, tape.constant(x.clone()), &labels).map_err(ad_err)?;
            bce_real(d_real).add(bce_fake(d_fake))?.add(bce_real(d_fake))
        },
        &all_params(&m),
        EPS,
        19,
    )
    .unwrap();
    assert!(err < TOL, "cgan {err}");
}

#[test]
fn variational_network_gradients() {
    let m = GenModel::new(gen_config(GenKind::Cvae), 3).unwrap();
    let labels = [1usize, 0, 1];
    let x = input(3, 1, 8);
    let err = finite_diff_check(
        |tape, vars| {
            let (pg, pa) = split_bound(&m, vars);
            m.cvae_loss(&pg, &pa, tape, tape.constant(x.clone()), &labels, 41).map_err(ad_err)
        },
        &all_params(&m),
        EPS,
        23,
    )
    .unwrap();
    assert!(err < TOL, "cvae {err}");
}
