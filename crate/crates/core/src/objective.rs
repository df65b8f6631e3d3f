//! Scoring, the cross-entropy objective, ablation variants and training.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::Pooling;
use crate::dataio::{Basket, Dataset, Sample};
use crate::error::{check_dim, Error, Result};
use crate::hypergraph::HeteroHypergraph;
use crate::metrics;
use crate::model::{item_scores, Model, PROB_EPS};
use crate::params::Adam;
use crate::tape::{softmax, Mat, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub embed_dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub max_seq_len: usize,
    pub price_pooling: Pooling,
    pub lr: f64,
    /// Decoupled weight decay coefficient.
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping (0 = never).
    pub patience: usize,
    pub seed: u64,
    pub without_augmentation: bool,
    pub without_price: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            embed_dim: 128,
            heads: 4,
            encoder_layers: 1,
            max_seq_len: 50,
            price_pooling: Pooling::Last,
            lr: 1e-5,
            l2: 1e-3,
            batch_size: 8,
            epochs: 30,
            patience: 5,
            seed: 42,
            without_augmentation: false,
            without_price: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("max_seq_len", self.max_seq_len),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        match (self.without_augmentation, self.without_price) {
            (false, false) => Variant::Full,
            (true, false) => Variant::WithoutAugmentation,
            (false, true) => Variant::WithoutPrice,
            (true, true) => Variant::WithoutBoth,
        }
    }

    pub fn with_variant(&self, v: Variant) -> HyperParams {
        let (a, p) = match v {
            Variant::Full => (false, false),
            Variant::WithoutAugmentation => (true, false),
            Variant::WithoutPrice => (false, true),
            Variant::WithoutBoth => (true, true),
        };
        HyperParams { without_augmentation: a, without_price: p, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Full,
    WithoutAugmentation,
    WithoutPrice,
    WithoutBoth,
}

impl Variant {
    /// The three rows of the ablation report.
    pub const ABLATION: [Variant; 3] = [Variant::Full, Variant::WithoutAugmentation, Variant::WithoutPrice];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Full => "BDHH",
            Variant::WithoutAugmentation => "w/o A",
            Variant::WithoutPrice => "w/o P",
            Variant::WithoutBoth => "w/o A+P",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "bdhh" | "full" => Ok(Variant::Full),
            "w/oa" | "without_augmentation" => Ok(Variant::WithoutAugmentation),
            "w/op" | "without_price" => Ok(Variant::WithoutPrice),
            "w/oa+p" | "without_both" => Ok(Variant::WithoutBoth),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

/// Which stages the forward pass runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wiring {
    pub augmentation: bool,
    pub price: bool,
}

pub fn build_variant(hp: &HyperParams) -> Result<Wiring> {
    Ok(Wiring { augmentation: !hp.without_augmentation, price: !hp.without_price })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub y: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ScoreVector {
    pub fn from_scores(y: Vec<f64>) -> Self {
        let probs = softmax(&y);
        ScoreVector { y, probs }
    }
}

/// Multi-hot ground truth over the item vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidConfig("target entries must be 0 or 1".into()));
        }
        if !values.contains(&1.0) {
            return Err(Error::EmptyTruth);
        }
        Ok(TargetVector(values))
    }

    pub fn from_basket(basket: &Basket, n_items: usize) -> Result<Self> {
        let mut v = vec![0.0; n_items];
        for it in &basket.items {
            if it.item >= n_items {
                return Err(Error::DimensionMismatch { expected: n_items, got: it.item });
            }
            v[it.item] = 1.0;
        }
        TargetVector::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `y_i = φ_pᵀ z^p_{level(i)} + φ_dᵀ z^d_i` over all items.
pub fn score_items(phi_d: &[f64], phi_p: Option<&[f64]>, z_id: &Mat, z_price: &Mat, levels: &[usize]) -> Result<ScoreVector> {
    let d = phi_d.len();
    check_dim(d, z_id.ncols())?;
    check_dim(z_id.nrows(), levels.len())?;
    if let Some(p) = phi_p {
        check_dim(d, p.len())?;
        check_dim(d, z_price.ncols())?;
        if let Some(&bad) = levels.iter().find(|&&l| l >= z_price.nrows()) {
            return Err(Error::DimensionMismatch { expected: z_price.nrows(), got: bad });
        }
    }
    let tape = Tape::new();
    let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
    let pd = tape.constant(row(phi_d));
    let pp = phi_p.map(|p| tape.constant(row(p)));
    let zd = tape.constant(z_id.clone());
    let zp = tape.constant(z_price.clone());
    let y = item_scores(&tape, pd, pp, zd, zp, &Rc::new(levels.to_vec()));
    Ok(ScoreVector::from_scores(tape.value(y).row(0).to_vec()))
}

/// Binary cross-entropy summed over items, with probabilities clamped to
/// `[ε, 1 − ε]`.
pub fn loss(probs: &[f64], target: &TargetVector) -> Result<f64> {
    check_dim(target.0.len(), probs.len())?;
    let tape = Tape::new();
    let p = tape.constant(Array2::from_shape_vec((1, probs.len()), probs.to_vec()).expect("row shape"));
    let l = tape.binary_cross_entropy(p, Rc::new(target.0.clone()), PROB_EPS);
    Ok(tape.scalar(l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_ndcg10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_ndcg10: Option<f64>,
}

/// One optimizer step on a batch; returns the loss before the update.
pub fn train_step(model: &mut Model, opt: &mut Adam, histories: &[&[Basket]], targets: &[&Basket]) -> Result<f64> {
    let (loss, grads) = model.loss_and_gradients(histories, targets)?;
    if loss.is_finite() {
        opt.update(&mut model.store, &grads);
    }
    Ok(loss)
}

/// Mini-batch Adam over the training samples; keeps the parameters with the
/// best validation NDCG@10 and stops after `patience` epochs without gain.
/// Without validation samples the final parameters are kept.
pub fn train(dataset: &Dataset, train: &[Sample], val: &[Sample], graph: &HeteroHypergraph, hp: &HyperParams) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let seqs = &dataset.sequences;
    let mut model = Model::new(hp, graph, dataset.vocab.item_price_levels())?;
    let mut opt = Adam::new(&model.store, hp.lr, hp.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(1));
    let mut order: Vec<Sample> = train.to_vec();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, crate::params::ParamStore)> = None;
    let mut stale = 0;
    let mut step = 0;
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            step += 1;
            let histories: Vec<&[Basket]> = batch.iter().map(|s| s.history(seqs)).collect();
            let targets: Vec<&Basket> = batch.iter().map(|s| s.target_basket(seqs)).collect();
            let loss = train_step(&mut model, &mut opt, &histories, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, epoch, step });
            }
            total += loss * batch.len() as f64;
        }
        let mean_loss = total / order.len() as f64;
        let val_ndcg10 = if val.is_empty() { None } else { Some(metrics::mean_ndcg(&model, seqs, val, 10)?) };
        log::info!("epoch {epoch}: loss {mean_loss:.6} val ndcg@10 {val_ndcg10:?}");
        log.push(EpochLog { epoch, mean_loss, val_ndcg10 });
        if let Some(v) = val_ndcg10 {
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, epoch, model.store.clone()));
                stale = 0;
            } else {
                stale += 1;
                if hp.patience > 0 && stale >= hp.patience {
                    break;
                }
            }
        }
    }
    let last_epoch = log.len();
    let (best_epoch, best_val_ndcg10) = match best {
        Some((v, e, store)) => {
            model.store = store;
            (e, Some(v))
        }
        None => (last_epoch, None),
    };
    Ok(TrainOutcome { model, log, best_epoch, best_val_ndcg10 })
}
