//! Integer kernels against exact or float references.

use std::path::PathBuf;

use ecgformer::model::{gelu, layer_norm_rows};
use ecgformer::quant::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inputs below 2^16 where `i_sqrt` is not the floor square root.
pub fn i_sqrt_exhaustive_mismatches() -> usize {
    (0u32..(1 << 16)).filter(|&n| !is_floor_sqrt(n, i_sqrt(n))).count()
}

pub fn is_floor_sqrt(n: u32, r: u32) -> bool {
    let (n, r) = (u64::from(n), u64::from(r));
    r * r <= n && (r + 1) * (r + 1) > n
}

/// Random rows: every row sums to the fixed-point one and is unchanged by a
/// shift. Returns the worst deviation from the float softmax.
pub fn softmax_worst(rows: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.004;
    let c = exp_consts(scale).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..rows {
        let len = rng.random_range(2..80);
        let row: Vec<i32> = (0..len).map(|_| rng.random_range(-2000..2000)).collect();
        let p = i_softmax(&row, &c);
        assert_eq!(p.iter().map(|&v| i64::from(v)).sum::<i64>(), SOFTMAX_ONE);
        let shifted: Vec<i32> = row.iter().map(|v| v + 777).collect();
        assert_eq!(i_softmax(&shifted, &c), p);
        let m = row.iter().copied().max().unwrap();
        let e: Vec<f64> = row.iter().map(|&v| (f64::from(v - m) * scale).exp()).collect();
        let z: f64 = e.iter().sum();
        for (&pi, ei) in p.iter().zip(&e) {
            worst = worst.max((f64::from(pi) / SOFTMAX_ONE as f64 - ei / z).abs());
        }
    }
    worst
}

/// Integer layer norm for float gains and offsets, built the way the model
/// export builds it.
pub fn int_layer_norm(g: &[f64], b: &[f64], s_out: f64) -> IntLayerNorm {
    let gs = weight_scale(g);
    let unit = gs / f64::from(1u32 << LN_FRAC_BITS);
    IntLayerNorm {
        gamma: quantize_tensor(g, gs),
        beta: b.iter().map(|v| (v / unit).round() as i32).collect(),
        out: requant_from_ratio(unit / s_out).unwrap(),
    }
}

/// Worst deviation of the integer layer norm from the float one, in output
/// quanta, over random int8 rows of width 16.
pub fn layernorm_worst_quanta(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = 16;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let g: Vec<f64> = (0..e).map(|_| rng.random_range(0.3..1.8)).collect();
        let b: Vec<f64> = (0..e).map(|_| rng.random_range(-0.5..0.5)).collect();
        let s_in = rng.random_range(0.005..0.05);
        let x: Vec<i8> = (0..e * 20).map(|_| rng.random_range(-128..=127)).collect();
        let (y, _) = layer_norm_rows(&dequantize(&x, s_in), e, &g, &b);
        let s_out = symmetric_scale(max_abs(&y));
        let yq = i_layernorm(&x, &int_layer_norm(&g, &b, s_out));
        for (a, r) in dequantize(&yq, s_out).iter().zip(&y) {
            worst = worst.max((a - r).abs() / s_out);
        }
    }
    worst
}

/// Worst |i_gelu - gelu| over every int8 input at several input scales.
pub fn gelu_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for s_in in [6.0 / 127.0, 4.0 / 127.0, 10.0 / 127.0, 0.013] {
        let g = gelu_consts(s_in, 0.05).unwrap();
        let unit = gelu_output_scale(s_in, g.frac_bits);
        assert_eq!(i_gelu(0, &g), 0);
        for q in -128i64..=127 {
            worst = worst.max((i_gelu(q, &g) as f64 * unit - gelu(q as f64 * s_in)).abs());
        }
    }
    worst
}

/// Strips comments, then looks for floating-point types, literals and
/// casts.
pub fn float_tokens(src: &str) -> Vec<String> {
    let code: String = src
        .lines()
        .map(|l| l.split("//").next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let mut hits = Vec::new();
    let chars: Vec<char> = code.chars().collect();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        if c == '.'
            && !word.is_empty()
            && word.chars().all(|d| d.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            hits.push(format!("{word}."));
        }
        if word.ends_with("f32") || word.ends_with("f64") {
            hits.push(word.clone());
        }
        word.clear();
    }
    hits
}

/// Source of the integer inference path.
pub const INTEGER_SOURCES: [(&str, &str); 2] = [
    ("int_ops.rs", include_str!("../../src/quant/int_ops.rs")),
    ("int_forward.rs", include_str!("../../src/quant/int_forward.rs")),
];

pub fn integer_path_float_tokens() -> Vec<String> {
    INTEGER_SOURCES
        .iter()
        .flat_map(|(name, src)| float_tokens(src).into_iter().map(move |t| format!("{name}: {t}")))
        .collect()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct Golden {
    pub inputs: Vec<(Vec<i8>, Vec<i8>)>,
    pub logits: Vec<Vec<i32>>,
}

/// Inputs of the golden fixture whose logits differ from the stored ones.
pub fn golden_mismatches() -> (usize, usize) {
    let (q, _) = load_quantized(&fixture_dir().join("golden.qckpt")).unwrap();
    let golden: Golden =
        serde_json::from_str(&std::fs::read_to_string(fixture_dir().join("golden.json")).unwrap()).unwrap();
    let bad = golden
        .inputs
        .iter()
        .zip(&golden.logits)
        .filter(|((w, r), expect)| int_forward(w, r, &q.int).unwrap() != **expect)
        .count();
    (bad, golden.inputs.len())
}
