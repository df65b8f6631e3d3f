//! Full model wiring: encoder → augmentation → behavior → item scores.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augmentation::{augment, plan_batch, AugmentationParams, BatchItems};
use crate::behavior::{interest_preference, price_preference, AttentionParams, InterestParams};
use crate::dataio::Basket;
use crate::encoder::{encode, EmbeddingTables, EncoderParams, NeighborTables};
use crate::error::{check_dim, Error, Result};
use crate::hypergraph::{HeteroHypergraph, NodeType};
use crate::objective::{HyperParams, Wiring};
use crate::params::{Forward, ParamStore};
use crate::tape::{Mat, Tape, Var};

pub const PROB_EPS: f64 = 1e-12;

/// All learnable parameters plus the fixed graph context they run on.
#[derive(Debug, Clone)]
pub struct Model {
    pub hp: HyperParams,
    pub wiring: Wiring,
    pub store: ParamStore,
    pub tables: EmbeddingTables,
    pub encoder: EncoderParams,
    pub aug_id: AugmentationParams,
    pub aug_price: AugmentationParams,
    pub attention: AttentionParams,
    pub interest: InterestParams,
    neighbors: NeighborTables,
    item_levels: Rc<Vec<usize>>,
}

/// Tape handles produced by [`Model::forward`].
pub struct BatchOutput {
    /// `B x m_d` unnormalized scores.
    pub logits: Var,
    /// `B x d`
    pub phi_d: Var,
    /// `B x d`, absent without the price channel.
    pub phi_p: Option<Var>,
    /// Price-table accesses made after the encoder stage.
    pub behavior_price_reads: usize,
}

/// Chronological item codes of a history, truncated to the most recent
/// `max_len` entries. Items within a basket follow code order.
pub fn flatten_history(history: &[Basket], max_len: usize) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = history.iter().flat_map(|b| b.items.iter().map(|i| (i.item, i.price))).collect();
    let start = all.len().saturating_sub(max_len);
    all[start..].to_vec()
}

/// `y = φ_d·Z_dᵀ (+ φ_p·Z_pᵀ gathered at each item's price level)`.
pub fn item_scores(tape: &Tape, phi_d: Var, phi_p: Option<Var>, z_id: Var, z_price: Var, levels: &Rc<Vec<usize>>) -> Var {
    let y = tape.matmul_nt(phi_d, z_id);
    match phi_p {
        Some(p) => {
            let by_level = tape.matmul_nt(p, z_price);
            tape.add(y, tape.gather_cols(by_level, Rc::clone(levels)))
        }
        None => y,
    }
}

/// Multi-hot targets flattened row-major for a `B x m_d` probability matrix.
pub fn multi_hot(targets: &[&Basket], n_items: usize) -> Vec<f64> {
    let mut out = vec![0.0; targets.len() * n_items];
    for (r, b) in targets.iter().enumerate() {
        for it in &b.items {
            out[r * n_items + it.item] = 1.0;
        }
    }
    out
}

impl Model {
    /// Registers every parameter group in a fixed order from `hp.seed`.
    pub fn new(hp: &HyperParams, graph: &HeteroHypergraph, item_levels: Vec<usize>) -> Result<Model> {
        hp.validate()?;
        let wiring = crate::objective::build_variant(hp)?;
        check_dim(graph.n_items, item_levels.len())?;
        if let Some(&bad) = item_levels.iter().find(|&&l| l >= graph.n_prices) {
            return Err(Error::DimensionMismatch { expected: graph.n_prices, got: bad });
        }
        let d = hp.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut store = ParamStore::new();
        let tables = EmbeddingTables::register(&mut store, [graph.n_items, graph.n_categories, graph.n_prices], d, &mut rng);
        let encoder = EncoderParams::register(&mut store, d, hp.encoder_layers, &mut rng);
        let aug_id = AugmentationParams::register(&mut store, NodeType::Id, d, &mut rng);
        let aug_price = AugmentationParams::register(&mut store, NodeType::Price, d, &mut rng);
        let attention = AttentionParams::register(&mut store, d, hp.heads, &mut rng);
        let interest = InterestParams::register(&mut store, d, hp.max_seq_len, &mut rng);
        Ok(Model {
            hp: hp.clone(),
            wiring,
            store,
            tables,
            encoder,
            aug_id,
            aug_price,
            attention,
            interest,
            neighbors: NeighborTables::new(graph),
            item_levels: Rc::new(item_levels),
        })
    }

    /// Replaces all parameter values; names and shapes must match.
    pub fn load_params(&mut self, store: ParamStore) -> Result<()> {
        if store.names() != self.store.names() {
            return Err(Error::Format { what: "parameter set", reason: "parameter names differ".into() });
        }
        for (id, name, value) in store.iter() {
            if value.dim() != self.store.get(id).dim() {
                return Err(Error::Format { what: "parameter set", reason: format!("shape of {name} differs") });
            }
        }
        self.store = store;
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.item_levels.len()
    }

    pub fn item_levels(&self) -> &[usize] {
        &self.item_levels
    }

    /// Forward pass for a batch of histories. The augmentation batch is the
    /// union of all history baskets.
    pub fn forward(&self, fwd: &Forward, histories: &[&[Basket]]) -> Result<BatchOutput> {
        let tape = &fwd.tape;
        let mut batch_baskets: BTreeMap<(usize, usize), &Basket> = BTreeMap::new();
        for h in histories {
            if h.is_empty() {
                return Err(Error::EmptySequence);
            }
            for b in *h {
                batch_baskets.insert((b.user, b.seq_index), b);
            }
        }
        let baskets: Vec<&Basket> = batch_baskets.into_values().collect();
        let items = BatchItems::new(baskets.iter().copied());

        let use_price = self.wiring.price;
        let [h_id, _, h_price] = encode(fwd, &self.tables, &self.encoder, &self.neighbors, [true, false, use_price], Some(&items.codes));
        let mut h_id = h_id.expect("requested");

        let mut h_price = h_price;
        if self.wiring.augmentation {
            let (id_plan, price_plan) = plan_batch(&baskets, &items, self.neighbors.size(NodeType::Price))?;
            h_id = augment(fwd, h_id, &id_plan, &self.aug_id);
            if let Some(hp) = h_price {
                h_price = Some(augment(fwd, hp, &price_plan, &self.aug_price));
            }
        }

        let price_reads_before = self.price_param_reads(fwd);
        let mut price_gathers = 0;
        let mut phi_d_rows = Vec::with_capacity(histories.len());
        let mut phi_p_rows = Vec::with_capacity(histories.len());
        for h in histories {
            let seq = flatten_history(h, self.hp.max_seq_len);
            let rev: Vec<usize> = seq.iter().rev().map(|&(item, _)| items.row(item)).collect();
            let x_d = tape.gather_rows(h_id, Rc::new(rev));
            phi_d_rows.push(interest_preference(fwd, x_d, &self.interest));
            if let Some(hp) = h_price {
                let levels: Vec<usize> = seq.iter().map(|&(_, p)| p).collect();
                let x_p = tape.gather_rows(hp, Rc::new(levels));
                price_gathers += 1;
                phi_p_rows.push(price_preference(fwd, x_p, &self.attention, self.hp.price_pooling).phi);
            }
        }
        let phi_d = tape.vcat(&phi_d_rows);
        let phi_p = (!phi_p_rows.is_empty()).then(|| tape.vcat(&phi_p_rows));
        let z_id = fwd.p(self.tables.id);
        let z_price = if phi_p.is_some() { fwd.p(self.tables.price) } else { z_id };
        let logits = item_scores(tape, phi_d, phi_p, z_id, z_price, &self.item_levels);
        let behavior_price_reads = self.price_param_reads(fwd) - price_reads_before + price_gathers;
        Ok(BatchOutput { logits, phi_d, phi_p, behavior_price_reads })
    }

    fn price_param_reads(&self, fwd: &Forward) -> usize {
        let a = &self.attention;
        [self.tables.price, a.query, a.key, a.value, a.output].iter().map(|&p| fwd.reads(p)).sum()
    }

    /// Mean per-sample cross-entropy over the batch.
    pub fn loss(&self, fwd: &Forward, out: &BatchOutput, targets: &[&Basket]) -> Var {
        let tape = &fwd.tape;
        let probs = tape.softmax_rows(out.logits);
        let target = Rc::new(multi_hot(targets, self.n_items()));
        let total = tape.binary_cross_entropy(probs, target, PROB_EPS);
        tape.scale(total, 1.0 / targets.len() as f64)
    }

    /// Loss and parameter gradients for one batch.
    pub fn loss_and_gradients(&self, histories: &[&[Basket]], targets: &[&Basket]) -> Result<(f64, Vec<Mat>)> {
        let fwd = Forward::new(&self.store);
        let out = self.forward(&fwd, histories)?;
        let loss = self.loss(&fwd, &out, targets);
        let value = fwd.tape.scalar(loss);
        Ok((value, fwd.gradients(loss)))
    }

    pub fn batch_loss(&self, histories: &[&[Basket]], targets: &[&Basket]) -> Result<f64> {
        let fwd = Forward::new(&self.store);
        let out = self.forward(&fwd, histories)?;
        let loss = self.loss(&fwd, &out, targets);
        Ok(fwd.tape.scalar(loss))
    }

    /// Raw scores `y` over all items for one history.
    pub fn scores(&self, history: &[Basket]) -> Result<Vec<f64>> {
        let fwd = Forward::new(&self.store);
        let out = self.forward(&fwd, &[history])?;
        Ok(fwd.tape.value(out.logits).row(0).to_vec())
    }

    /// Next-basket probabilities `ŷ` over all items for one history.
    pub fn predict(&self, history: &[Basket]) -> Result<Vec<f64>> {
        Ok(crate::tape::softmax(&self.scores(history)?))
    }
}
