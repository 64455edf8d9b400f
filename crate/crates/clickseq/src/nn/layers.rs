//! Neural layers assembled from tape primitives: linear, multi-head
//! attention, and Transformer encoder blocks, with matching parameter
//! definition helpers.

use rand_chacha::ChaCha8Rng;

use super::params::{ParameterStore, Session};
use super::tape::{Scalar, Var};
use crate::ClickseqError;

pub const INIT_STD: f64 = 0.02;

/// Defines `{prefix}.w (in,out)` and `{prefix}.b (1,out)`.
pub fn def_linear<F: Scalar>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    input: usize,
    output: usize,
    rng: &mut ChaCha8Rng,
) {
    store.def_trunc_normal(&format!("{prefix}.w"), input, output, INIT_STD, rng);
    store.def_zeros(&format!("{prefix}.b"), 1, output);
}

/// `y = x W + b`.
pub fn linear<F: Scalar>(s: &Session<F>, prefix: &str, x: Var) -> Var {
    let w = s.p(&format!("{prefix}.w"));
    let b = s.p(&format!("{prefix}.b"));
    let xw = s.tape.matmul(x, w);
    s.tape.add_row(xw, b)
}

pub fn def_layernorm<F: Scalar>(store: &mut ParameterStore<F>, prefix: &str, width: usize) {
    store.def_ones(&format!("{prefix}.gain"), 1, width);
    store.def_zeros(&format!("{prefix}.bias"), 1, width);
}

pub fn layernorm<F: Scalar>(s: &Session<F>, prefix: &str, x: Var) -> Var {
    let gain = s.p(&format!("{prefix}.gain"));
    let bias = s.p(&format!("{prefix}.bias"));
    s.tape.layernorm(x, gain, bias)
}

pub fn def_attention<F: Scalar>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    width: usize,
    rng: &mut ChaCha8Rng,
) {
    for part in ["wq", "wk", "wv", "wo"] {
        def_linear(store, &format!("{prefix}.{part}"), width, width, rng);
    }
}

/// Scaled dot-product multi-head attention of `query (q,d)` against
/// `memory (m,d)`. `mask` marks the valid memory slots.
pub fn multi_head_attention<F: Scalar>(
    s: &Session<F>,
    prefix: &str,
    query: Var,
    memory: Var,
    heads: usize,
    mask: &[bool],
) -> Result<Var, ClickseqError> {
    let (_, d) = s.tape.shape(query);
    let (m, dm) = s.tape.shape(memory);
    if d != dm {
        return Err(ClickseqError::ShapeMismatch(format!(
            "attention query width {d} != memory width {dm}"
        )));
    }
    if d % heads != 0 {
        return Err(ClickseqError::ShapeMismatch(format!(
            "width {d} not divisible by {heads} heads"
        )));
    }
    if mask.len() != m {
        return Err(ClickseqError::ShapeMismatch(format!(
            "mask length {} != memory rows {m}",
            mask.len()
        )));
    }
    let dk = d / heads;
    let q = linear(s, &format!("{prefix}.wq"), query);
    let k = linear(s, &format!("{prefix}.wk"), memory);
    let v = linear(s, &format!("{prefix}.wv"), memory);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dk, (h + 1) * dk);
        let qh = s.tape.slice_cols(q, lo, hi);
        let kh = s.tape.slice_cols(k, lo, hi);
        let vh = s.tape.slice_cols(v, lo, hi);
        let scores = s.tape.scale(s.tape.matmul_nt(qh, kh), scale);
        let attn = s.tape.softmax_rows(scores, mask);
        ctx.push(s.tape.matmul(attn, vh));
    }
    let merged = s.tape.concat_cols(&ctx);
    Ok(linear(s, &format!("{prefix}.wo"), merged))
}

pub fn def_encoder_layer<F: Scalar>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    width: usize,
    ffn_width: usize,
    rng: &mut ChaCha8Rng,
) {
    def_attention(store, &format!("{prefix}.attn"), width, rng);
    def_layernorm(store, &format!("{prefix}.ln1"), width);
    def_linear(store, &format!("{prefix}.ffn1"), width, ffn_width, rng);
    def_linear(store, &format!("{prefix}.ffn2"), ffn_width, width, rng);
    def_layernorm(store, &format!("{prefix}.ln2"), width);
}

pub fn def_encoder<F: Scalar>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    layers: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) {
    for l in 0..layers {
        def_encoder_layer(store, &format!("{prefix}.l{l}"), width, 4 * width, rng);
    }
}

/// Post-norm Transformer encoder: `layers` blocks of self-attention and
/// position-wise feed-forward, each with residual and layer norm. Order
/// information enters only through the inputs.
pub fn transformer_encoder<F: Scalar>(
    s: &Session<F>,
    prefix: &str,
    inputs: Var,
    layers: usize,
    heads: usize,
    mask: &[bool],
    dropout: f64,
) -> Result<Var, ClickseqError> {
    let mut x = inputs;
    for l in 0..layers {
        let lp = format!("{prefix}.l{l}");
        let attn = multi_head_attention(s, &format!("{lp}.attn"), x, x, heads, mask)?;
        let attn = s.tape.dropout(attn, dropout);
        x = layernorm(s, &format!("{lp}.ln1"), s.tape.add(x, attn));
        let h = s.tape.gelu(linear(s, &format!("{lp}.ffn1"), x));
        let ff = linear(s, &format!("{lp}.ffn2"), h);
        let ff = s.tape.dropout(ff, dropout);
        x = layernorm(s, &format!("{lp}.ln2"), s.tape.add(x, ff));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, Axis};
    use rand::{Rng, SeedableRng};

    fn store_with_attention(d: usize, seed: u64) -> ParameterStore<f64> {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        def_attention(&mut store, "attn", d, &mut rng);
        store
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() - 0.5)
    }

    /// Straightforward per-head loop oracle for attention, no tape involved.
    fn attention_oracle(
        store: &ParameterStore<f64>,
        query: &Array2<f64>,
        memory: &Array2<f64>,
        heads: usize,
        mask: &[bool],
    ) -> Array2<f64> {
        let d = query.ncols();
        let dk = d / heads;
        let project = |x: &Array2<f64>, name: &str| -> Array2<f64> {
            x.dot(store.get(&format!("attn.{name}.w"))) + &store.get(&format!("attn.{name}.b")).row(0)
        };
        let q = project(query, "wq");
        let k = project(memory, "wk");
        let v = project(memory, "wv");
        let mut merged = Array2::zeros((query.nrows(), d));
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..query.nrows() {
                // scores for query row i
                let mut scores = vec![f64::NEG_INFINITY; memory.nrows()];
                for j in 0..memory.nrows() {
                    if mask[j] {
                        let mut dot = 0.0;
                        for c in cols.clone() {
                            dot += q[(i, c)] * k[(j, c)];
                        }
                        scores[j] = dot / (dk as f64).sqrt();
                    }
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores
                    .iter()
                    .map(|&x| if x.is_finite() { (x - max).exp() } else { 0.0 })
                    .collect();
                let denom: f64 = exps.iter().sum();
                for (c_off, c) in cols.clone().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..memory.nrows() {
                        acc += exps[j] / denom * v[(j, c)];
                    }
                    merged[(i, h * dk + c_off)] = acc;
                }
            }
        }
        merged.dot(store.get("attn.wo.w")) + &store.get("attn.wo.b").row(0)
    }

    #[test]
    fn attention_matches_per_head_oracle() {
        let d = 8;
        let store = store_with_attention(d, 3);
        let query = random_matrix(3, d, 10);
        let memory = random_matrix(5, d, 11);
        let mask = [true, true, false, true, true];

        let tape: Tape<f64> = Tape::new();
        let s = Session::new(&tape, &store);
        let q = tape.leaf(query.clone());
        let m = tape.leaf(memory.clone());
        let out = multi_head_attention(&s, "attn", q, m, 2, &mask).unwrap();
        let got = tape.value(out);
        let want = attention_oracle(&store, &query, &memory, 2, &mask);
        for (a, b) in got.iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn singleton_memory_ignores_scores() {
        // With one valid slot the softmax is 1 regardless of the query, so
        // the output is the projection of that slot's value.
        let d = 8;
        let store = store_with_attention(d, 4);
        let memory = random_matrix(1, d, 12);

        let run = |query: &Array2<f64>, memory: &Array2<f64>, mask: &[bool]| {
            let tape: Tape<f64> = Tape::new();
            let s = Session::new(&tape, &store);
            let q = tape.leaf(query.clone());
            let m = tape.leaf(memory.clone());
            tape.value(multi_head_attention(&s, "attn", q, m, 2, mask).unwrap())
        };

        let q1 = random_matrix(1, d, 13);
        let q2 = random_matrix(1, d, 14);
        let a = run(&q1, &memory, &[true]);
        let b = run(&q2, &memory, &[true]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }

        // all-masked-but-one equals the m=1 case
        let mut memory3 = random_matrix(3, d, 15);
        memory3.row_mut(1).assign(&memory.row(0));
        let c = run(&q1, &memory3, &[false, true, false]);
        for (x, y) in a.iter().zip(c.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn attention_shape_errors() {
        let store = store_with_attention(8, 5);
        let tape: Tape<f64> = Tape::new();
        let s = Session::new(&tape, &store);
        let q = tape.leaf(Array2::zeros((2, 8)));
        let m = tape.leaf(Array2::zeros((3, 8)));
        assert!(multi_head_attention(&s, "attn", q, m, 3, &[true; 3]).is_err());
        assert!(multi_head_attention(&s, "attn", q, m, 2, &[true; 4]).is_err());
    }

    #[test]
    fn encoder_shape_contract_and_permutation_equivariance() {
        let d = 16;
        let n = 5;
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        def_encoder(&mut store, "enc", 2, d, &mut rng);

        let x = random_matrix(n, d, 20);
        let run = |x: &Array2<f64>| {
            let tape: Tape<f64> = Tape::new();
            let s = Session::new(&tape, &store);
            let v = tape.leaf(x.clone());
            tape.value(transformer_encoder(&s, "enc", v, 2, 4, &[true; 5], 0.0).unwrap())
        };
        let base = run(&x);
        assert_eq!(base.dim(), (n, d));

        // permute input rows: outputs permute identically (no internal
        // sequence-order encoding)
        let perm = [3usize, 0, 4, 1, 2];
        let mut xp = Array2::zeros((n, d));
        for (i, &p) in perm.iter().enumerate() {
            xp.row_mut(i).assign(&x.row(p));
        }
        let out_p = run(&xp);
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..d {
                assert_abs_diff_eq!(out_p[(i, j)], base[(p, j)], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn encoder_rows_sum_consistency() {
        // layernorm output rows have mean bias and gain structure; sanity
        // check values stay finite over a deeper stack
        let d = 8;
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        def_encoder(&mut store, "enc", 3, d, &mut rng);
        let tape: Tape<f64> = Tape::new();
        let s = Session::new(&tape, &store);
        let v = tape.leaf(random_matrix(4, d, 21).mapv(|x| x * 10.0));
        let out = tape.value(transformer_encoder(&s, "enc", v, 3, 2, &[true; 4], 0.0).unwrap());
        assert!(out.iter().all(|x| x.is_finite()));
        let _ = out.sum_axis(Axis(0));
    }
}
