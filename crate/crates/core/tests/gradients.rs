mod common;

use common::*;
use ndarray::Array2;
use ppi_core::nn::{losses, Pass, Tape};
use ppi_core::rng::rng_from;

const TOL: f64 = 1e-4;

fn run_family(name: &str, check: GradCheck) {
    for seed in 0..20 {
        let err = check(seed);
        assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn loss_re_matches_finite_differences() {
    run_family("loss_re", check_loss_re);
}

#[test]
fn loss_msre_matches_finite_differences() {
    run_family("loss_msre", check_loss_msre);
}

#[test]
fn loss_in_matches_finite_differences() {
    run_family("loss_in", check_loss_in);
}

#[test]
fn info_nce_matches_finite_differences() {
    run_family("info_nce", check_info_nce);
}

#[test]
fn gat_layer_matches_finite_differences() {
    run_family("gat_layer", check_gat);
}

#[test]
fn gin_layer_matches_finite_differences() {
    run_family("gin_layer", check_gin);
}

#[test]
fn segment_mean_and_gather_match_finite_differences() {
    let mut r = rng(7);
    let x = uniform(7, 3, -1.0, 1.0, &mut r);
    let target = uniform(4, 3, -1.0, 1.0, &mut r);
    let segments = vec![0..3, 3..4, 4..7];
    let idx = [2, 0, 2, 1];
    let f = |x: &Array2<f64>| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let m = tape.segment_mean(xv, &segments);
        let g = tape.gather_rows(m, &idx);
        let l = tape.mse_rows(g, &target);
        (tape.scalar_value(l), tape.backward(l).get(xv).unwrap().clone())
    };
    let (_, analytic) = f(&x);
    let numeric = numeric_grad(&x, |p| f(p).0);
    assert!(rel_err(&analytic, &numeric) < TOL);
}

#[test]
fn batch_norm_in_train_mode_matches_finite_differences() {
    let mut r = rng(11);
    let x = uniform(9, 4, -2.0, 2.0, &mut r);
    let target = uniform(9, 4, -1.0, 1.0, &mut r);
    let f = |x: &Array2<f64>| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (y, _, _) = tape.batch_norm(xv, 1e-5);
        let l = tape.mse_rows(y, &target);
        (tape.scalar_value(l), tape.backward(l).get(xv).unwrap().clone())
    };
    let (_, analytic) = f(&x);
    assert!(rel_err(&analytic, &numeric_grad(&x, |p| f(p).0)) < TOL);
}

#[test]
fn full_pair_head_matches_finite_differences() {
    use ppi_core::interaction_model::{InteractionConfig, InteractionModel};
    let mut r = rng(3);
    let mut model = InteractionModel::new(InteractionConfig { hidden: 4, layers: 2 }, 3, 5).unwrap();
    jitter(&mut model.store, 0.3, &mut r);
    let x = uniform(8, 3, -1.0, 1.0, &mut r);
    let edges = random_edges(8, 16, &mut r);
    let pairs = [(0, 1), (2, 5), (7, 3)];
    let labels = binary(3, 7, &mut r);
    let loss_of = |store: &ppi_core::nn::ParamStore| {
        let mut tape = Tape::new();
        let mut pass = Pass::train(store, &model.buffers, 0.0, rng_from(0, &[]));
        let xv = tape.leaf(x.clone());
        let fwd = model.forward_tape(&mut tape, &mut pass, &edges, xv, &pairs);
        let l = tape.bce_logits(fwd.logits, &labels);
        let grads = tape.backward(l);
        (tape.scalar_value(l), grads.for_params(store))
    };
    let (value, analytic) = loss_of(&model.store);
    let logits = model.logits(&x, &edges, &pairs).unwrap();
    assert!(value.is_finite() && losses::multilabel_bce(&logits, &labels).is_finite());
    let numeric = numeric_param_grads(&model.store, |s| loss_of(s).0);
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!(rel_err(a, n) < TOL, "relative error {:e}", rel_err(a, n));
    }
}
