//! Shared helpers: seeded random inputs, central finite differences and the
//! per-family gradient checks used by both the gradient tests and the
//! acceptance runner.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppi_core::graph_builder::EdgeList;
use ppi_core::interaction_model::{gin_layer, loss_in, InteractionConfig, InteractionModel};
use ppi_core::nn::{losses, HeadCombine, Pass, ParamStore, Tape};
use ppi_core::residue_encoder::{gat_layer, loss_msre, loss_re, GatParams, COSINE_EPS};
use ppi_core::contrastive::info_nce;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

pub fn binary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<bool>() { 1.0 } else { 0.0 })
}

/// `count` random directed edges on `n` nodes, self loops allowed.
pub fn random_edges(n: usize, count: usize, rng: &mut ChaCha8Rng) -> EdgeList {
    EdgeList::from_pairs((0..count).map(|_| (rng.random_range(0..n), rng.random_range(0..n))))
}

/// Central differences of a scalar function of one matrix.
pub fn numeric_grad(x: &Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + FD_STEP;
        let up = f(&probe);
        probe[idx] = orig - FD_STEP;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// `||a - n|| / max(||a||, ||n||)`, zero when both vanish.
pub fn rel_err(a: &Array2<f64>, n: &Array2<f64>) -> f64 {
    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(n));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&(a - n)) / scale
    }
}

/// Numeric gradient of `f` with respect to every parameter in `store`.
pub fn numeric_param_grads(store: &ParamStore, mut f: impl FnMut(&ParamStore) -> f64) -> Vec<Array2<f64>> {
    let mut probe = store.clone();
    store
        .ids()
        .map(|id| {
            let value = store.value(id).clone();
            numeric_grad(&value, |v| {
                *probe.value_mut(id) = v.clone();
                let out = f(&probe);
                *probe.value_mut(id) = value.clone();
                out
            })
        })
        .collect()
}

/// Add uniform noise to every parameter. Zero-initialized biases put rows
/// with all-zero inputs exactly on a ReLU kink, where central differences
/// are meaningless.
pub fn jitter(store: &mut ParamStore, amount: f64, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (r, c) = store.value(id).dim();
        let noise = uniform(r, c, -amount, amount, rng);
        *store.value_mut(id) += &noise;
    }
}

fn worst(errs: impl IntoIterator<Item = f64>) -> f64 {
    errs.into_iter().fold(0.0, f64::max)
}

pub fn check_loss_re(seed: u64) -> f64 {
    let mut r = rng(seed);
    let target = uniform(6, 4, -1.0, 1.0, &mut r);
    let x = uniform(6, 4, -1.0, 1.0, &mut r);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = tape.mse_rows(xv, &target);
    let analytic = tape.backward(loss).get(xv).unwrap().clone();
    rel_err(&analytic, &numeric_grad(&x, |p| loss_re(&target, p).unwrap()))
}

pub fn check_loss_msre(seed: u64) -> f64 {
    let mut r = rng(seed);
    let delta = r.random_range(1.0..3.0);
    let target = uniform(6, 5, -1.0, 1.0, &mut r);
    let x = uniform(6, 5, -1.0, 1.0, &mut r);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = tape.cosine_pow(xv, &target, delta, COSINE_EPS);
    let analytic = tape.backward(loss).get(xv).unwrap().clone();
    rel_err(&analytic, &numeric_grad(&x, |p| loss_msre(&target, p, delta).unwrap()))
}

pub fn check_loss_in(seed: u64) -> f64 {
    let mut r = rng(seed);
    let labels = binary(5, 7, &mut r);
    let logits = uniform(5, 7, -3.0, 3.0, &mut r);
    let mut tape = Tape::new();
    let lv = tape.leaf(logits.clone());
    let loss = tape.bce_logits(lv, &labels);
    let analytic = tape.backward(loss).get(lv).unwrap().clone();
    rel_err(&analytic, &numeric_grad(&logits, |p| loss_in(p, &labels).unwrap()))
}

/// Gradients with respect to both embedding matrices, N = 4, d = 3.
pub fn check_info_nce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let tau = r.random_range(0.3..2.0);
    let a = uniform(4, 3, -1.0, 1.0, &mut r);
    let b = uniform(4, 3, -1.0, 1.0, &mut r);
    let mut tape = Tape::new();
    let av = tape.leaf(a.clone());
    let bv = tape.leaf(b.clone());
    let loss = tape.info_nce(av, bv, tau);
    let grads = tape.backward(loss);
    let na = numeric_grad(&a, |p| info_nce(p, &b, tau).unwrap());
    let nb = numeric_grad(&b, |p| info_nce(&a, p, tau).unwrap());
    worst([rel_err(grads.get(av).unwrap(), &na), rel_err(grads.get(bv).unwrap(), &nb)])
}

/// One attention layer with an untied normalizer key, squared-error loss
/// against a random target; checks inputs and all four projections.
pub fn check_gat(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d_in, heads, head_dim) = (6, 4, 2, 3);
    let combine = if seed.is_multiple_of(2) { HeadCombine::Concat } else { HeadCombine::Mean };
    let mut store = ParamStore::new();
    let params = GatParams::new(&mut store, "g", d_in, heads, head_dim, combine, &mut r);
    let noise = uniform(d_in, heads * head_dim, -0.5, 0.5, &mut r);
    *store.value_mut(params.key_norm.weight) += &noise;
    let edges = random_edges(n, 14, &mut r);
    let x = uniform(n, d_in, -1.0, 1.0, &mut r);
    let target = uniform(n, params.output_width(), -1.0, 1.0, &mut r);

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = params.forward(&mut tape, &store, &edges, xv);
    let loss = tape.mse_rows(out, &target);
    let grads = tape.backward(loss);
    let analytic_params = grads.for_params(&store);

    let f = |s: &ParamStore, x: &Array2<f64>| losses::reconstruction_loss(&gat_layer(s, &params, &edges, x).unwrap(), &target);
    let nx = numeric_grad(&x, |p| f(&store, p));
    let np = numeric_param_grads(&store, |s| f(s, &x));
    worst(
        std::iter::once(rel_err(grads.get(xv).unwrap(), &nx))
            .chain(analytic_params.iter().zip(&np).map(|(a, n)| rel_err(a, n))),
    )
}

/// One GIN layer in train mode with dropout off, so batch norm uses batch
/// statistics; checks inputs and every layer parameter.
pub fn check_gin(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d_in) = (12, 4);
    let mut model = InteractionModel::new(InteractionConfig { hidden: 5, layers: 1 }, d_in, seed).unwrap();
    jitter(&mut model.store, 0.3, &mut r);
    let edges = random_edges(n, 30, &mut r);
    let x = uniform(n, d_in, -1.0, 1.0, &mut r);
    let target = uniform(n, 5, -1.0, 1.0, &mut r);

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = {
        let mut pass = Pass::train(&model.store, &model.buffers, 0.0, rng(0));
        model.layers[0].forward(&mut tape, &mut pass, &edges, xv)
    };
    let loss = tape.mse_rows(out, &target);
    let grads = tape.backward(loss);
    let analytic_params = grads.for_params(&model.store);

    let layer_ids: Vec<_> = tape.touched_params();
    let nx = numeric_grad(&x, |p| {
        losses::reconstruction_loss(&gin_layer(&model, 0, &edges, p, 0.0, true, 0).unwrap(), &target)
    });
    let mut probe = model.clone();
    let np = numeric_param_grads(&model.store, |s| {
        probe.store = s.clone();
        losses::reconstruction_loss(&gin_layer(&probe, 0, &edges, &x, 0.0, true, 0).unwrap(), &target)
    });
    worst(
        std::iter::once(rel_err(grads.get(xv).unwrap(), &nx)).chain(
            model
                .store
                .ids()
                .filter(|id| layer_ids.contains(id))
                .map(|id| rel_err(&analytic_params[id.0], &np[id.0])),
        ),
    )
}

pub type GradCheck = fn(u64) -> f64;

pub const GRADIENT_FAMILIES: [(&str, GradCheck); 6] = [
    ("loss_re", check_loss_re),
    ("loss_msre", check_loss_msre),
    ("loss_in", check_loss_in),
    ("info_nce", check_info_nce),
    ("gat_layer", check_gat),
    ("gin_layer", check_gin),
];
