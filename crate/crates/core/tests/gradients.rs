//! Analytic gradients against central finite differences in f64.

mod common;

use common::grad::{self, Worst, DELTA, MAX_REL};
use ecgformer::model::{ModelConfig, ModelParams};
use ecgformer::training::{loss_and_grad, loss_only, softmax_cross_entropy, Example};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(w: Worst) {
    assert!(w.0 < MAX_REL, "{}: max relative error {:e}", w.1, w.0);
}

#[test]
fn composed_model_every_parameter() {
    for seed in 0..12 {
        check(grad::composed_model(seed));
    }
}

#[test]
fn default_sized_model_spot_check() {
    let cfg = ModelConfig::default();
    let params = grad::random_params(&cfg, 77);
    let batch = grad::random_batch(&cfg, 77, 2);
    let refs: Vec<&Example> = batch.iter().collect();
    let (_, grads) = loss_and_grad(&params, &refs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut flat = params.as_slice().to_vec();
    for _ in 0..60 {
        let i = rng.random_range(0..flat.len());
        let orig = flat[i];
        let eval = |v: f64, flat: &mut Vec<f64>| {
            flat[i] = v;
            loss_only(&ModelParams::from_flat(&cfg, flat.clone()).unwrap(), &refs).unwrap()
        };
        let n = (eval(orig + DELTA, &mut flat) - eval(orig - DELTA, &mut flat)) / (2.0 * DELTA);
        flat[i] = orig;
        assert!(grad::rel_err(grads.as_slice()[i], n) < MAX_REL, "index {i}");
    }
}

#[test]
fn linear_layer() {
    (0..10).for_each(|s| check(grad::linear_layer(s)));
}

#[test]
fn layer_norm_layer() {
    (0..10).for_each(|s| check(grad::layer_norm_layer(s)));
}

#[test]
fn attention_layer() {
    (0..10).for_each(|s| check(grad::attention_layer(s)));
}

#[test]
fn gelu_elementwise() {
    (0..3).for_each(|s| check(grad::gelu_elementwise(s)));
}

#[test]
fn embedding_layer() {
    (0..10).for_each(|s| check(grad::embedding_layer(s)));
}

#[test]
fn cross_entropy_cases() {
    let (loss, g) = softmax_cross_entropy(&[0.0; 5], 2);
    assert!((loss - 5f64.ln()).abs() < 1e-12);
    assert!((g[2] + 0.8).abs() < 1e-12);
    let (loss, g) = softmax_cross_entropy(&[0.0, 0.0, 60.0, 0.0, 0.0], 2);
    assert!(loss < 1e-20);
    assert!(g.iter().all(|v| v.abs() < 1e-20));
    (0..10).for_each(|s| check(grad::cross_entropy(s)));
}
