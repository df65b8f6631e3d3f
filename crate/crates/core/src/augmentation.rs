//! Basket-guided dynamic augmentation.
//!
//! Each basket in the current batch is pooled into `v_B = tanh(mean h)`. For
//! every node that appears in some batch basket, the baskets containing it
//! are attended with weights `softmax(bᵀ tanh(W_α v_B))` and the result is
//! added residually to the node's embedding.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::dataio::Basket;
use crate::error::{check_dim, Error, Result};
use crate::hypergraph::NodeType;
use crate::params::{Forward, Init, ParamId, ParamStore};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct AugmentationParams {
    /// `d x d`
    pub w_alpha: ParamId,
    /// `d x 1`
    pub b: ParamId,
}

impl AugmentationParams {
    pub fn register(store: &mut ParamStore, t: NodeType, d: usize, rng: &mut ChaCha8Rng) -> Self {
        AugmentationParams {
            w_alpha: store.add_init(format!("aug.{}.w_alpha", t.name()), (d, d), Init::Uniform { fan: d }, rng),
            b: store.add_init(format!("aug.{}.b", t.name()), (d, 1), Init::Zeros, rng),
        }
    }
}

/// Which baskets of a batch contain each embedding row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemBasketIndex {
    /// `groups[row]` lists batch-basket positions, ascending.
    pub groups: Rc<Vec<Vec<usize>>>,
}

/// Pooling layout for one feature type over a batch of baskets.
#[derive(Debug, Clone)]
pub struct BasketPlan {
    /// `n_baskets x n_rows` averaging matrix.
    pub pool: Rc<Mat>,
    pub index: ItemBasketIndex,
}

impl BasketPlan {
    /// `rows_of_basket[b]` lists the embedding rows of basket `b`'s items
    /// (repeats allowed and weighted by multiplicity in the mean).
    pub fn new(rows_of_basket: &[Vec<usize>], n_rows: usize) -> Result<Self> {
        let mut pool = Mat::zeros((rows_of_basket.len(), n_rows));
        let mut groups = vec![Vec::new(); n_rows];
        for (b, rows) in rows_of_basket.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::EmptyBasket);
            }
            let w = 1.0 / rows.len() as f64;
            for &r in rows {
                pool[[b, r]] += w;
                if groups[r].last() != Some(&b) {
                    groups[r].push(b);
                }
            }
        }
        Ok(BasketPlan { pool: Rc::new(pool), index: ItemBasketIndex { groups: Rc::new(groups) } })
    }

    pub fn n_baskets(&self) -> usize {
        self.pool.nrows()
    }
}

/// Row layout of the ID embeddings touched by a batch.
#[derive(Debug, Clone)]
pub struct BatchItems {
    /// Item codes, ascending; row `k` of the batch ID table is `codes[k]`.
    pub codes: Rc<Vec<usize>>,
    local: BTreeMap<usize, usize>,
}

impl BatchItems {
    pub fn new<'a>(baskets: impl IntoIterator<Item = &'a Basket>) -> Self {
        let mut local = BTreeMap::new();
        for b in baskets {
            for it in &b.items {
                local.insert(it.item, 0);
            }
        }
        let codes: Vec<usize> = local.keys().copied().collect();
        for (k, c) in codes.iter().enumerate() {
            local.insert(*c, k);
        }
        BatchItems { codes: Rc::new(codes), local }
    }

    pub fn row(&self, item: usize) -> usize {
        self.local[&item]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// ID-row and price-row plans for a set of batch baskets.
pub fn plan_batch(baskets: &[&Basket], items: &BatchItems, n_prices: usize) -> Result<(BasketPlan, BasketPlan)> {
    let id_rows: Vec<Vec<usize>> = baskets.iter().map(|b| b.items.iter().map(|i| items.row(i.item)).collect()).collect();
    let price_rows: Vec<Vec<usize>> = baskets.iter().map(|b| b.items.iter().map(|i| i.price).collect()).collect();
    Ok((BasketPlan::new(&id_rows, items.len())?, BasketPlan::new(&price_rows, n_prices)?))
}

/// Basket vectors `V = tanh(P·H)`, one row per batch basket.
pub fn basket_vectors(tape: &Tape, h: Var, plan: &BasketPlan) -> Var {
    let pool = tape.constant_rc(Rc::clone(&plan.pool));
    tape.tanh(tape.matmul(pool, h))
}

/// Per-row attention summary `ṽ` of the baskets containing each row.
pub fn attend_baskets(tape: &Tape, v: Var, groups: Rc<Vec<Vec<usize>>>, w_alpha: Var, b: Var) -> Var {
    let scores = tape.matmul(tape.tanh(tape.matmul(v, w_alpha)), b);
    tape.segment_attend(scores, v, groups)
}

/// `h̃ = h + ṽ`; rows absent from every batch basket are unchanged.
pub fn augment(fwd: &Forward, h: Var, plan: &BasketPlan, params: &AugmentationParams) -> Var {
    let tape = &fwd.tape;
    let v = basket_vectors(tape, h, plan);
    let summary = attend_baskets(tape, v, Rc::clone(&plan.index.groups), fwd.p(params.w_alpha), fwd.p(params.b));
    tape.add(h, summary)
}

fn matrix(rows: &[Vec<f64>]) -> Result<Mat> {
    let d = rows.first().map_or(0, Vec::len);
    for r in rows {
        check_dim(d, r.len())?;
    }
    Ok(Array2::from_shape_vec((rows.len(), d), rows.iter().flatten().copied().collect()).unwrap())
}

/// `tanh` of the element-wise mean of the items' embeddings.
pub fn pool_basket(item_embs: &[Vec<f64>]) -> Result<Vec<f64>> {
    if item_embs.is_empty() {
        return Err(Error::EmptyBasket);
    }
    let h = matrix(item_embs)?;
    let tape = Tape::new();
    let plan = BasketPlan::new(&[(0..item_embs.len()).collect()], item_embs.len())?;
    let hv = tape.constant(h);
    let v = basket_vectors(&tape, hv, &plan);
    Ok(tape.value(v).row(0).to_vec())
}

/// Attention weights and summary over `j` basket vectors (`j x d`).
pub fn item_basket_attention(basket_vecs: &Mat, w_alpha: &Mat, b: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
    let (j, d) = basket_vecs.dim();
    if j == 0 {
        return Err(Error::EmptyBasket);
    }
    check_dim(d, w_alpha.nrows())?;
    check_dim(d, w_alpha.ncols())?;
    check_dim(d, b.nrows())?;
    check_dim(1, b.ncols())?;
    let tape = Tape::new();
    let v = tape.constant(basket_vecs.clone());
    let w = tape.constant(w_alpha.clone());
    let bv = tape.constant(b.clone());
    let scores = tape.matmul(tape.tanh(tape.matmul(v, w)), bv);
    let weights = crate::tape::softmax(&tape.value(scores).column(0).to_vec());
    let out = tape.segment_attend(scores, v, Rc::new(vec![(0..j).collect()]));
    Ok((weights, tape.value(out).row(0).to_vec()))
}

/// Value-level augmentation of an embedding table for a set of baskets
/// whose item rows are given by `rows_of_basket`.
pub fn augment_embeddings(h: &Mat, rows_of_basket: &[Vec<usize>], w_alpha: &Mat, b: &Mat) -> Result<Mat> {
    let plan = BasketPlan::new(rows_of_basket, h.nrows())?;
    let mut store = ParamStore::new();
    let params = AugmentationParams { w_alpha: store.add("w_alpha", w_alpha.clone()), b: store.add("b", b.clone()) };
    let fwd = Forward::new(&store);
    let hv = fwd.tape.constant(h.clone());
    let out = augment(&fwd, hv, &plan, &params);
    Ok((*fwd.tape.value(out)).clone())
}
