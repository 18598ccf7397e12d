//! Transformer building blocks expressed as tape operations.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn expect_shape<T: Real>(tape: &Tape<T>, v: Var, want: (usize, usize), what: &str) -> Result<()> {
    let got = tape.shape(v);
    if got != want {
        return Err(Error::invalid(format!("{what}: expected shape {want:?}, got {got:?}")));
    }
    Ok(())
}

/// `x W + b` for `x: n x d_in`, `W: d_in x d_out`, `b: 1 x d_out`.
pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (_, d_in) = tape.shape(x);
    let (w_in, d_out) = tape.shape(w);
    if w_in != d_in {
        return Err(Error::invalid(format!("linear: input width {d_in} but weight has {w_in} rows")));
    }
    expect_shape(tape, b, (1, d_out), "linear bias")?;
    let y = tape.matmul(x, w);
    Ok(tape.add_row(y, b))
}

pub fn softmax_rows<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    tape.softmax_rows(x)
}

/// Scaled dot-product attention. Returns the output and the `n x n` weight
/// matrix `softmax(Q K^T / sqrt(d_k))`.
pub fn attention<T: Real>(tape: &mut Tape<T>, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let (n, d_k) = tape.shape(q);
    expect_shape(tape, k, (n, d_k), "attention keys")?;
    if tape.shape(v).0 != n {
        return Err(Error::invalid("attention: values must have one row per token"));
    }
    let scores = tape.matmul_t(q, k);
    let scaled = tape.scale(scores, T::one() / T::from_usize_lossy(d_k).sqrt());
    let weights = tape.softmax_rows(scaled);
    Ok((tape.matmul(weights, v), weights))
}

/// Per-head projection matrices, each `d_model x d_k`.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

/// `Concat(A_1, ..., A_h) W^O` with `A_i = attention(Z W_i^Q, Z W_i^K, Z W_i^V)`.
/// Also returns each head's weight matrix.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    z: Var,
    heads: &[HeadVars],
    w_o: Var,
) -> Result<(Var, Vec<Var>)> {
    if heads.is_empty() {
        return Err(Error::invalid("multi-head attention needs at least one head"));
    }
    let (_, d_model) = tape.shape(z);
    let d_k = tape.shape(heads[0].w_q).1;
    let mut outs = Vec::with_capacity(heads.len());
    let mut weights = Vec::with_capacity(heads.len());
    for (i, h) in heads.iter().enumerate() {
        for (w, name) in [(h.w_q, "W^Q"), (h.w_k, "W^K"), (h.w_v, "W^V")] {
            expect_shape(tape, w, (d_model, d_k), &format!("head {i} {name}"))?;
        }
        let q = tape.matmul(z, h.w_q);
        let k = tape.matmul(z, h.w_k);
        let v = tape.matmul(z, h.w_v);
        let (a, w) = attention(tape, q, k, v)?;
        outs.push(a);
        weights.push(w);
    }
    expect_shape(tape, w_o, (heads.len() * d_k, d_model), "W^O")?;
    let cat = tape.concat_cols(&outs);
    Ok((tape.matmul(cat, w_o), weights))
}

pub fn layer_norm<T: Real>(tape: &mut Tape<T>, x: Var, alpha: Var, delta: Var) -> Result<Var> {
    let (_, d) = tape.shape(x);
    if d < 2 {
        return Err(Error::invalid("layer norm needs at least two features"));
    }
    expect_shape(tape, alpha, (1, d), "layer norm alpha")?;
    expect_shape(tape, delta, (1, d), "layer norm delta")?;
    Ok(tape.layer_norm(x, alpha, delta))
}

/// `max(0, x W1 + b1) W2 + b2`.
pub fn ffn<T: Real>(tape: &mut Tape<T>, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let h = linear(tape, x, w1, b1)?;
    let h = tape.relu(h);
    linear(tape, h, w2, b2)
}

/// Mean squared error between equally shaped values.
pub fn mse<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::invalid(format!(
            "mse: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    let d = tape.sub(a, b);
    Ok(tape.mean_square(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_and_bias() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(1, 2, vec![1.0, 2.0]);
        let w = t.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = t.constant(1, 2, vec![1.0, 1.0]);
        let y = linear(&mut t, x, w, b).unwrap();
        assert_eq!(t.value(y), &[2.0, 3.0]);
        let bad = t.constant(3, 2, vec![0.0; 6]);
        assert!(linear(&mut t, x, bad, b).is_err());
    }

    #[test]
    fn softmax_edge_rows() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(2, 3, vec![0.0, 0.0, 0.0, 1000.0, 0.0, 0.0]);
        let y = softmax_rows(&mut t, x);
        let v = t.value(y);
        for &p in &v[..3] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v[3] - 1.0).abs() < 1e-15 && v[4] < 1e-300 && v[4].is_finite());
    }

    #[test]
    fn single_token_attention_returns_values() {
        let mut t = Tape::<f64>::new();
        let q = t.constant(1, 2, vec![0.3, -1.0]);
        let k = t.constant(1, 2, vec![2.0, 0.5]);
        let v = t.constant(1, 2, vec![7.0, 8.0]);
        let (out, w) = attention(&mut t, q, k, v).unwrap();
        assert_eq!(t.value(w), &[1.0]);
        assert_eq!(t.value(out), &[7.0, 8.0]);
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let mut t = Tape::<f64>::new();
        let q = t.constant(3, 2, vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0]);
        let k = t.constant(3, 2, vec![0.4, 0.7, 0.4, 0.7, 0.4, 0.7]);
        let v = t.constant(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let (_, w) = attention(&mut t, q, k, v).unwrap();
        for &p in t.value(w) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_known_row() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 4.0, 4.0]);
        let a = t.constant(1, 3, vec![1.0; 3]);
        let d = t.constant(1, 3, vec![0.0, 0.5, 0.0]);
        let y = layer_norm(&mut t, x, a, d).unwrap();
        let v = t.value(y);
        // population std sqrt(2/3); eps shifts the fourth decimal at most
        assert!((v[0] + 1.22474).abs() < 1e-3);
        assert!((v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 1.22474).abs() < 1e-3);
        assert_eq!(&v[3..], &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn ffn_relu_zeroing() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(1, 2, vec![-1.0, 2.0]);
        let eye = t.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let zero = t.constant(1, 2, vec![0.0, 0.0]);
        let y = ffn(&mut t, x, eye, zero, eye, zero).unwrap();
        assert_eq!(t.value(y), &[0.0, 2.0]);

        let neg = t.constant(1, 2, vec![-3.0, -4.0]);
        let b2 = t.constant(1, 2, vec![0.25, -0.5]);
        let y = ffn(&mut t, neg, eye, zero, eye, b2).unwrap();
        assert_eq!(t.value(y), &[0.25, -0.5]);
    }

    #[test]
    fn mse_shape_check() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(1, 8, vec![0.1; 8]);
        let b = t.constant(1, 8, vec![0.0; 8]);
        let l = mse(&mut t, a, b).unwrap();
        assert!((t.scalar(l) - 0.01).abs() < 1e-15);
        let c = t.constant(1, 7, vec![0.0; 7]);
        assert!(mse(&mut t, a, c).is_err());
    }

    #[test]
    fn mha_shape_contract() {
        let mut t = Tape::<f64>::new();
        let z = t.constant(5, 4, (0..20).map(|i| i as f64 * 0.1).collect());
        let heads: Vec<HeadVars> = (0..2)
            .map(|h| HeadVars {
                w_q: t.constant(4, 2, vec![0.1 * (h + 1) as f64; 8]),
                w_k: t.constant(4, 2, vec![0.2; 8]),
                w_v: t.constant(4, 2, vec![0.3; 8]),
            })
            .collect();
        let w_o = t.constant(4, 4, vec![0.5; 16]);
        let (out, ws) = multi_head_attention(&mut t, z, &heads, w_o).unwrap();
        assert_eq!(t.shape(out), (5, 4));
        assert_eq!(ws.len(), 2);
        let bad_o = t.constant(3, 4, vec![0.5; 12]);
        assert!(multi_head_attention(&mut t, z, &heads, bad_o).is_err());
    }
}
