//! User behavior channels: price sensitivity through multi-head
//! self-attention over the price embeddings of the history, and product
//! preference through a gated unit over positional, reversed-item and
//! basket-aggregate signals.

use std::rc::Rc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::params::{Forward, Init, ParamId, ParamStore};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub heads: usize,
    /// `d x d` each; head `n` uses columns `n*d/h .. (n+1)*d/h`.
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
}

impl AttentionParams {
    pub fn register(store: &mut ParamStore, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = |name: &str| store.add_init(format!("price_att.{name}"), (d, d), Init::Uniform { fan: d }, rng);
        AttentionParams { heads, query: w("query"), key: w("key"), value: w("value"), output: w("output") }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InterestParams {
    /// `max_len x d`, row 0 is the most recent position.
    pub positions: ParamId,
    pub w_pos: ParamId,
    pub w_item: ParamId,
    pub w_basket: ParamId,
    pub w_out: ParamId,
    /// `1 x d`
    pub bias: ParamId,
    /// `d x 1`
    pub w_beta: ParamId,
}

impl InterestParams {
    pub fn register(store: &mut ParamStore, d: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let u = Init::Uniform { fan: d };
        InterestParams {
            positions: store.add_init("interest.positions", (max_len, d), u, rng),
            w_pos: store.add_init("interest.w_pos", (d, d), u, rng),
            w_item: store.add_init("interest.w_item", (d, d), u, rng),
            w_basket: store.add_init("interest.w_basket", (d, d), u, rng),
            w_out: store.add_init("interest.w_out", (d, d), u, rng),
            bias: store.add_init("interest.bias", (1, d), Init::Zeros, rng),
            w_beta: store.add_init("interest.w_beta", (d, 1), u, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Most recent position.
    #[default]
    Last,
    Mean,
}

/// Scaled dot-product self-attention with `heads` heads over `x` (`m x d`).
/// Returns the `m x d` output after the output projection and each head's
/// `m x m` attention matrix.
pub fn multi_head_attention(tape: &Tape, x: Var, heads: usize, wq: Var, wk: Var, wv: Var, wo: Var) -> (Var, Vec<Var>) {
    let (_, d) = tape.shape(x);
    assert!(heads > 0 && d % heads == 0, "width {d} not divisible by {heads} heads");
    let dh = d / heads;
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for n in 0..heads {
        let (a, b) = (n * dh, (n + 1) * dh);
        let logits = tape.scale(tape.matmul_nt(tape.slice_cols(q, a, b), tape.slice_cols(k, a, b)), scale);
        let w = tape.softmax_rows(logits);
        outs.push(tape.matmul(w, tape.slice_cols(v, a, b)));
        weights.push(w);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.hcat(&outs) };
    (tape.matmul(cat, wo), weights)
}

pub struct PricePreference {
    /// `m x d`
    pub output: Var,
    /// `1 x d`
    pub phi: Var,
    pub weights: Vec<Var>,
}

/// Price attention over `x` (`m x d`) and the pooled price preference `φ_p`.
pub fn price_preference(fwd: &Forward, x: Var, params: &AttentionParams, pooling: Pooling) -> PricePreference {
    let tape = &fwd.tape;
    let (output, weights) = multi_head_attention(
        tape,
        x,
        params.heads,
        fwd.p(params.query),
        fwd.p(params.key),
        fwd.p(params.value),
        fwd.p(params.output),
    );
    let m = tape.shape(output).0;
    let phi = match pooling {
        Pooling::Last => tape.gather_rows(output, Rc::new(vec![m - 1])),
        Pooling::Mean => tape.mean_rows(output),
    };
    PricePreference { output, phi, weights }
}

/// Product preference `φ_d` from the reversed item embeddings `items_rev`
/// (`m x d`, most recent first).
pub fn interest(tape: &Tape, items_rev: Var, positions: Var, w: [Var; 4], bias: Var, w_beta: Var) -> Var {
    let m = tape.shape(items_rev).0;
    let basket = tape.mean_rows(items_rev);
    let pos = tape.gather_rows(positions, Rc::new((0..m).collect()));
    let pre = tape.add(tape.matmul(pos, w[0]), tape.matmul(items_rev, w[1]));
    let pre = tape.add_row(pre, tape.add(tape.matmul(basket, w[2]), bias));
    let glu = tape.matmul(tape.mul(tape.tanh(pre), tape.sigmoid(pre)), w[3]);
    let beta = tape.matmul(glu, w_beta);
    tape.matmul(tape.transpose(beta), items_rev)
}

pub fn interest_preference(fwd: &Forward, items_rev: Var, params: &InterestParams) -> Var {
    interest(
        &fwd.tape,
        items_rev,
        fwd.p(params.positions),
        [fwd.p(params.w_pos), fwd.p(params.w_item), fwd.p(params.w_basket), fwd.p(params.w_out)],
        fwd.p(params.bias),
        fwd.p(params.w_beta),
    )
}

/// Weights for [`price_attention`].
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub heads: usize,
    pub query: Mat,
    pub key: Mat,
    pub value: Mat,
    pub output: Mat,
}

/// Value-level price attention: `(m x d output, per-head attention rows, φ_p)`.
pub fn price_attention(h_p: &Mat, w: &AttentionWeights, pooling: Pooling) -> Result<(Mat, Vec<Mat>, Vec<f64>)> {
    let (m, d) = h_p.dim();
    if m == 0 {
        return Err(Error::EmptySequence);
    }
    if w.heads == 0 || d % w.heads != 0 {
        return Err(Error::DimensionMismatch { expected: d - d % w.heads.max(1), got: d });
    }
    for mat in [&w.query, &w.key, &w.value, &w.output] {
        check_dim(d, mat.nrows())?;
        check_dim(d, mat.ncols())?;
    }
    let mut store = ParamStore::new();
    let params = AttentionParams {
        heads: w.heads,
        query: store.add("q", w.query.clone()),
        key: store.add("k", w.key.clone()),
        value: store.add("v", w.value.clone()),
        output: store.add("o", w.output.clone()),
    };
    let fwd = Forward::new(&store);
    let x = fwd.tape.constant(h_p.clone());
    let pref = price_preference(&fwd, x, &params, pooling);
    let value = |v: Var| (*fwd.tape.value(v)).clone();
    let rows = pref.weights.iter().map(|&w| value(w)).collect();
    Ok((value(pref.output), rows, fwd.tape.value(pref.phi).row(0).to_vec()))
}

/// Weights for [`interest_embedding`].
#[derive(Debug, Clone)]
pub struct InterestWeights {
    pub positions: Mat,
    pub w_pos: Mat,
    pub w_item: Mat,
    pub w_basket: Mat,
    pub w_out: Mat,
    pub bias: Mat,
    pub w_beta: Mat,
}

impl InterestWeights {
    pub fn zeros(d: usize, max_len: usize) -> Self {
        InterestWeights {
            positions: Mat::zeros((max_len, d)),
            w_pos: Mat::zeros((d, d)),
            w_item: Mat::zeros((d, d)),
            w_basket: Mat::zeros((d, d)),
            w_out: Mat::zeros((d, d)),
            bias: Mat::zeros((1, d)),
            w_beta: Mat::zeros((d, 1)),
        }
    }
}

/// Value-level product preference `φ_d` for a chronological item sequence
/// (oldest first, one `d`-vector per item).
pub fn interest_embedding(items: &[Vec<f64>], w: &InterestWeights) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(Error::EmptySequence);
    }
    let d = items[0].len();
    for it in items {
        check_dim(d, it.len())?;
    }
    if items.len() > w.positions.nrows() {
        return Err(Error::DimensionMismatch { expected: w.positions.nrows(), got: items.len() });
    }
    let rev: Vec<f64> = items.iter().rev().flatten().copied().collect();
    let tape = Tape::new();
    let x = tape.constant(Array2::from_shape_vec((items.len(), d), rev).unwrap());
    let c = |m: &Mat| tape.constant(m.clone());
    let phi = interest(
        &tape,
        x,
        c(&w.positions),
        [c(&w.w_pos), c(&w.w_item), c(&w.w_basket), c(&w.w_out)],
        c(&w.bias),
        c(&w.w_beta),
    );
    Ok(tape.value(phi).row(0).to_vec())
}
