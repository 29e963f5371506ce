//! Analytic gradients against central finite differences in f64. Each check
//! returns the worst relative error it saw and where.

use ecgformer::model::{
    add_positions, attention_core, conv_tokens, gelu, gelu_grad, layer_norm_rows, linear, ModelConfig, ModelParams,
    TensorId,
};
use ecgformer::training::{
    attention_backward, embed_backward, layer_norm_backward, linear_backward, loss_and_grad, loss_only,
    softmax_cross_entropy, Example,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DELTA: f64 = 1e-5;
pub const MAX_REL: f64 = 1e-4;
/// Denominator floor so that gradients that are zero up to rounding are
/// compared in absolute terms.
pub const FLOOR: f64 = 1e-6;

pub type Worst = (f64, String);

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub fn randv(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + DELTA;
            let up = f(x);
            x[i] = orig - DELTA;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * DELTA)
        })
        .collect()
}

fn compare(worst: &mut Worst, what: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{what}");
    for (&a, &n) in analytic.iter().zip(numeric) {
        let e = rel_err(a, n);
        if e > worst.0 || e.is_nan() {
            *worst = (e, what.to_string());
        }
    }
}

fn merge(a: Worst, b: Worst) -> Worst {
    if b.0 > a.0 || b.0.is_nan() {
        b
    } else {
        a
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// E=4, H=2, h=8 and S=6 tokens of width 4.
pub fn tiny_config(use_rr: bool) -> ModelConfig {
    ModelConfig { input_len: 24, embed_dim: 4, kernel: 4, heads: 2, hidden: 8, classes: 5, rr_dim: 2, use_rr }
}

pub fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    // Non-trivial biases, gains and positions so every path carries signal.
    for v in p.as_mut_slice() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}

pub fn random_batch(cfg: &ModelConfig, seed: u64, n: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|i| Example {
            window: randv(&mut rng, cfg.input_len, 1.5),
            rr: randv(&mut rng, cfg.rr_dim, 2.0),
            label: i % cfg.classes,
        })
        .collect()
}

/// Every parameter of the composed tiny model; the RR branch is dropped for
/// every third seed.
pub fn composed_model(seed: u64) -> Worst {
    let cfg = tiny_config(seed % 3 != 2);
    assert_eq!(cfg.seq_len(), 6);
    let params = random_params(&cfg, seed);
    let batch = random_batch(&cfg, seed, 3);
    let refs: Vec<&Example> = batch.iter().collect();
    let (_, grads) = loss_and_grad(&params, &refs).unwrap();
    let mut flat = params.as_slice().to_vec();
    let numeric = numeric_grad(&mut flat, |x| {
        let p = ModelParams::from_flat(&cfg, x.to_vec()).unwrap();
        loss_only(&p, &refs).unwrap()
    });
    let mut worst = (0.0, String::new());
    for spec in params.layout() {
        let r = spec.offset..spec.offset + spec.len();
        compare(
            &mut worst,
            &format!("model seed {seed} {}", spec.id.name()),
            &grads.as_slice()[r.clone()],
            &numeric[r],
        );
    }
    worst
}

pub fn linear_layer(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, n_in, n_out) = (5, 4, 3);
    let mut x = randv(&mut rng, rows * n_in, 1.0);
    let mut w = randv(&mut rng, n_in * n_out, 1.0);
    let mut b = randv(&mut rng, n_out, 1.0);
    let r = randv(&mut rng, rows * n_out, 1.0);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; b.len()];
    let dx = linear_backward(&x, &r, &w, n_in, n_out, &mut dw, Some(&mut db));
    let (w0, b0, x0) = (w.clone(), b.clone(), x.clone());
    let mut worst = (0.0, String::new());
    compare(&mut worst, "linear dx", &dx, &numeric_grad(&mut x, |x| dot(&r, &linear(x, n_in, &w0, &b0, n_out))));
    compare(&mut worst, "linear dw", &dw, &numeric_grad(&mut w, |w| dot(&r, &linear(&x0, n_in, w, &b0, n_out))));
    compare(&mut worst, "linear db", &db, &numeric_grad(&mut b, |b| dot(&r, &linear(&x0, n_in, &w0, b, n_out))));
    worst
}

pub fn layer_norm_layer(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 6;
    let mut x = randv(&mut rng, 4 * width, 2.0);
    let mut g = randv(&mut rng, width, 1.5);
    let mut b = randv(&mut rng, width, 1.0);
    let r = randv(&mut rng, x.len(), 1.0);
    let (_, cache) = layer_norm_rows(&x, width, &g, &b);
    let mut dg = vec![0.0; width];
    let mut db = vec![0.0; width];
    let dx = layer_norm_backward(&r, &cache, &g, &mut dg, &mut db);
    let (x0, g0, b0) = (x.clone(), g.clone(), b.clone());
    let mut worst = (0.0, String::new());
    compare(&mut worst, "layer norm dx", &dx, &numeric_grad(&mut x, |x| dot(&r, &layer_norm_rows(x, width, &g0, &b0).0)));
    compare(&mut worst, "layer norm dgamma", &dg, &numeric_grad(&mut g, |g| dot(&r, &layer_norm_rows(&x0, width, g, &b0).0)));
    compare(&mut worst, "layer norm dbeta", &db, &numeric_grad(&mut b, |b| dot(&r, &layer_norm_rows(&x0, width, &g0, b).0)));
    worst
}

pub fn attention_layer(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (seq, width, heads) = (6, 4, 2);
    let mut q = randv(&mut rng, seq * width, 1.5);
    let mut k = randv(&mut rng, seq * width, 1.5);
    let mut v = randv(&mut rng, seq * width, 1.5);
    let r = randv(&mut rng, seq * width, 1.0);
    let (_, probs) = attention_core(&q, &k, &v, seq, width, heads, |_| {});
    let (dq, dk, dv) = attention_backward(&q, &k, &v, &probs, &r, seq, width, heads);
    let (q0, k0, v0) = (q.clone(), k.clone(), v.clone());
    let f = |q: &[f64], k: &[f64], v: &[f64]| dot(&r, &attention_core(q, k, v, seq, width, heads, |_| {}).0);
    let mut worst = (0.0, String::new());
    compare(&mut worst, "attention dq", &dq, &numeric_grad(&mut q, |q| f(q, &k0, &v0)));
    compare(&mut worst, "attention dk", &dk, &numeric_grad(&mut k, |k| f(&q0, k, &v0)));
    compare(&mut worst, "attention dv", &dv, &numeric_grad(&mut v, |v| f(&q0, &k0, v)));
    worst
}

/// Convolution weights and bias plus the positional embedding.
pub fn embedding_layer(seed: u64) -> Worst {
    let cfg = tiny_config(true);
    let params = random_params(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = randv(&mut rng, cfg.input_len, 1.0);
    let (e, s) = (cfg.embed_dim, cfg.seq_len());
    let r = randv(&mut rng, e * s, 1.0);
    let mut dcw = vec![0.0; cfg.kernel * e];
    let mut dcb = vec![0.0; e];
    let mut dpos = vec![0.0; e * s];
    embed_backward(&input, &r, cfg.kernel, e, &mut dcw, &mut dcb, &mut dpos);
    let embed = |p: &ModelParams| {
        let mut t = conv_tokens(&input, p);
        add_positions(&mut t, p);
        dot(&r, &t)
    };
    let mut worst = (0.0, String::new());
    for (id, analytic) in [(TensorId::ConvW, &dcw), (TensorId::ConvB, &dcb), (TensorId::PosEmbed, &dpos)] {
        let mut vals = params.tensor(id).to_vec();
        let numeric = numeric_grad(&mut vals, |v| {
            let mut p = params.clone();
            p.tensor_mut(id).copy_from_slice(v);
            embed(&p)
        });
        compare(&mut worst, &format!("embedding {}", id.name()), analytic, &numeric);
    }
    worst
}

pub fn gelu_elementwise(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, String::new());
    for _ in 0..1000 {
        let x: f64 = rng.random_range(-6.0..6.0);
        let n = (gelu(x + DELTA) - gelu(x - DELTA)) / (2.0 * DELTA);
        worst = merge(worst, (rel_err(gelu_grad(x), n), format!("gelu at {x}")));
    }
    worst
}

pub fn cross_entropy(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = randv(&mut rng, 5, 4.0);
    let label = seed as usize % 5;
    let (_, g) = softmax_cross_entropy(&z, label);
    let mut worst = (0.0, String::new());
    compare(&mut worst, "cross entropy dlogits", &g, &numeric_grad(&mut z, |z| softmax_cross_entropy(z, label).0));
    worst
}

/// Every per-layer check for one seed.
pub fn all_layers(seed: u64) -> Worst {
    [linear_layer, layer_norm_layer, attention_layer, embedding_layer, gelu_elementwise, cross_entropy]
        .iter()
        .map(|f| f(seed))
        .fold((0.0, String::new()), merge)
}
