//! Unified global hybrid encoder.
//!
//! Every node `z` of type `t` attends over its neighbors of each other type
//! `δ` (softmax of `α_{t,δ}·z_i`) to get feature vectors `f1`, `f2`, then
//! mixes them through a sigmoid gate:
//!
//! ```text
//! γ = σ([z, f1, f2]·W_gate + f1·W_δ1 + f2·W_δ2)
//! h = γ ⊙ f1 + (1 − γ) ⊙ f2 + z
//! ```
//!
//! `δ1, δ2` are the other two types in canonical order (ID, CATEGORY, PRICE).

use std::rc::Rc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::hypergraph::{HeteroHypergraph, NodeType};
use crate::params::{Forward, Init, ParamId, ParamStore};
use crate::tape::{Mat, Tape, Var};

/// Base embedding tables `z`, one per node type.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTables {
    pub d: usize,
    pub id: ParamId,
    pub category: ParamId,
    pub price: ParamId,
}

impl EmbeddingTables {
    pub fn register(store: &mut ParamStore, sizes: [usize; 3], d: usize, rng: &mut ChaCha8Rng) -> Self {
        let init = Init::Uniform { fan: d };
        EmbeddingTables {
            d,
            id: store.add_init("z.id", (sizes[0], d), init, rng),
            category: store.add_init("z.category", (sizes[1], d), init, rng),
            price: store.add_init("z.price", (sizes[2], d), init, rng),
        }
    }

    pub fn get(&self, t: NodeType) -> ParamId {
        match t {
            NodeType::Id => self.id,
            NodeType::Category => self.category,
            NodeType::Price => self.price,
        }
    }
}

/// Gate and attention weights for one node type in one layer.
#[derive(Debug, Clone, Copy)]
pub struct TypeParams {
    /// `3d x d`
    pub gate: ParamId,
    /// `d x d`, one per other type.
    pub cross: [ParamId; 2],
    /// `d x 1`, one per other type.
    pub attention: [ParamId; 2],
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    /// `layers[l][t.index()]`
    pub layers: Vec<[TypeParams; 3]>,
}

impl EncoderParams {
    pub fn register(store: &mut ParamStore, d: usize, n_layers: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                NodeType::ALL.map(|t| {
                    let [a, b] = t.others();
                    let name = |what: &str| format!("enc{l}.{}.{what}", t.name());
                    TypeParams {
                        gate: store.add_init(name("gate"), (3 * d, d), Init::Uniform { fan: 3 * d }, rng),
                        cross: [
                            store.add_init(name(&format!("cross.{}", a.name())), (d, d), Init::Uniform { fan: d }, rng),
                            store.add_init(name(&format!("cross.{}", b.name())), (d, d), Init::Uniform { fan: d }, rng),
                        ],
                        attention: [
                            store.add_init(name(&format!("attn.{}", a.name())), (d, 1), Init::Zeros, rng),
                            store.add_init(name(&format!("attn.{}", b.name())), (d, 1), Init::Zeros, rng),
                        ],
                    }
                })
            })
            .collect();
        EncoderParams { layers }
    }
}

/// Neighbor code lists for every (source type, other type) pair.
#[derive(Debug, Clone)]
pub struct NeighborTables {
    /// `tables[t.index()][j]` for `j`-th entry of `t.others()`.
    tables: [[Rc<Vec<Vec<usize>>>; 2]; 3],
    sizes: [usize; 3],
}

impl NeighborTables {
    pub fn new(graph: &HeteroHypergraph) -> Self {
        let tables = NodeType::ALL.map(|t| t.others().map(|o| Rc::new(graph.neighbor_table(t, o))));
        NeighborTables { tables, sizes: NodeType::ALL.map(|t| graph.n_nodes(t)) }
    }

    pub fn get(&self, t: NodeType, j: usize) -> &Rc<Vec<Vec<usize>>> {
        &self.tables[t.index()][j]
    }

    pub fn size(&self, t: NodeType) -> usize {
        self.sizes[t.index()]
    }
}

/// Softmax(`values·α`) weighted sum of each group's rows. Empty groups give
/// zero rows.
pub fn attend_neighbors(tape: &Tape, values: Var, alpha: Var, groups: Rc<Vec<Vec<usize>>>) -> Var {
    let scores = tape.matmul(values, alpha);
    tape.segment_attend(scores, values, groups)
}

/// Row-wise gated fusion of `z` (n x d) with feature rows `f1`, `f2`.
pub fn gate_fuse(tape: &Tape, z: Var, f1: Var, f2: Var, gate: Var, cross: [Var; 2]) -> Var {
    gate_fuse_with_gate(tape, z, f1, f2, gate, cross).0
}

/// [`gate_fuse`], also returning the gate `γ`.
pub fn gate_fuse_with_gate(tape: &Tape, z: Var, f1: Var, f2: Var, gate: Var, cross: [Var; 2]) -> (Var, Var) {
    let cat = tape.hcat(&[z, f1, f2]);
    let pre = tape.matmul(cat, gate);
    let pre = tape.add(pre, tape.matmul(f1, cross[0]));
    let pre = tape.add(pre, tape.matmul(f2, cross[1]));
    let gamma = tape.sigmoid(pre);
    let mixed = tape.add(tape.mul(gamma, f1), tape.mul(tape.one_minus(gamma), f2));
    (tape.add(mixed, z), gamma)
}

/// One encoder layer for node type `t`. With `rows` set, only those codes of
/// type `t` are computed (in that order).
pub fn encode_type(
    fwd: &Forward,
    layer: &[TypeParams; 3],
    inputs: &[Var; 3],
    neighbors: &NeighborTables,
    t: NodeType,
    rows: Option<&Rc<Vec<usize>>>,
) -> Var {
    let tape = &fwd.tape;
    let p = &layer[t.index()];
    let others = t.others();
    let features: Vec<Var> = (0..2)
        .map(|j| {
            let full = neighbors.get(t, j);
            let groups = match rows {
                Some(r) => Rc::new(r.iter().map(|&i| full[i].clone()).collect()),
                None => Rc::clone(full),
            };
            attend_neighbors(tape, inputs[others[j].index()], fwd.p(p.attention[j]), groups)
        })
        .collect();
    let z = match rows {
        Some(r) => tape.gather_rows(inputs[t.index()], Rc::clone(r)),
        None => inputs[t.index()],
    };
    gate_fuse(tape, z, features[0], features[1], fwd.p(p.gate), [fwd.p(p.cross[0]), fwd.p(p.cross[1])])
}

/// Runs all layers. Returns `None` for types the caller did not request in
/// the final layer; `id_rows` restricts the final ID output to those codes.
pub fn encode(
    fwd: &Forward,
    tables: &EmbeddingTables,
    params: &EncoderParams,
    neighbors: &NeighborTables,
    wanted: [bool; 3],
    id_rows: Option<&Rc<Vec<usize>>>,
) -> [Option<Var>; 3] {
    let mut inputs = NodeType::ALL.map(|t| fwd.p(tables.get(t)));
    let n = params.layers.len();
    if n == 0 {
        return NodeType::ALL.map(|t| {
            wanted[t.index()].then(|| match (t, id_rows) {
                (NodeType::Id, Some(r)) => fwd.tape.gather_rows(inputs[0], Rc::clone(r)),
                _ => inputs[t.index()],
            })
        });
    }
    for layer in &params.layers[..n - 1] {
        inputs = NodeType::ALL.map(|t| encode_type(fwd, layer, &inputs, neighbors, t, None));
    }
    let last = &params.layers[n - 1];
    NodeType::ALL.map(|t| {
        wanted[t.index()].then(|| {
            let rows = if t == NodeType::Id { id_rows } else { None };
            encode_type(fwd, last, &inputs, neighbors, t, rows)
        })
    })
}

/// Semantics-enhanced embeddings for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedEmbeddings {
    pub id: Mat,
    pub category: Mat,
    pub price: Mat,
}

impl EnhancedEmbeddings {
    pub fn get(&self, t: NodeType) -> &Mat {
        match t {
            NodeType::Id => &self.id,
            NodeType::Category => &self.category,
            NodeType::Price => &self.price,
        }
    }
}

/// Encodes every node of `graph` with the weights held in `store`.
pub fn encode_graph(
    graph: &HeteroHypergraph,
    store: &ParamStore,
    tables: &EmbeddingTables,
    params: &EncoderParams,
) -> Result<EnhancedEmbeddings> {
    for t in NodeType::ALL {
        check_dim(graph.n_nodes(t), store.get(tables.get(t)).nrows())?;
    }
    let neighbors = NeighborTables::new(graph);
    let fwd = Forward::new(store);
    let [id, category, price] = encode(&fwd, tables, params, &neighbors, [true; 3], None);
    let get = |v: Option<Var>| (*fwd.tape.value(v.unwrap())).clone();
    Ok(EnhancedEmbeddings { id: get(id), category: get(category), price: get(price) })
}

fn row(v: &[f64]) -> Mat {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()
}

/// Attention-weighted mean of `neighbors` with weights softmax(`alpha · z_i`).
/// Empty neighbor lists give the zero vector.
pub fn aggregate_feature(z_t: &[f64], neighbors: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    let d = z_t.len();
    check_dim(d, alpha.len())?;
    if neighbors.is_empty() {
        return Ok(vec![0.0; d]);
    }
    for n in neighbors {
        check_dim(d, n.len())?;
    }
    let tape = Tape::new();
    let flat: Vec<f64> = neighbors.iter().flatten().copied().collect();
    let values = tape.constant(Array2::from_shape_vec((neighbors.len(), d), flat).unwrap());
    let alpha = tape.constant(Array2::from_shape_vec((d, 1), alpha.to_vec()).unwrap());
    let out = attend_neighbors(&tape, values, alpha, Rc::new(vec![(0..neighbors.len()).collect()]));
    Ok(tape.value(out).row(0).to_vec())
}

/// Gate weights for [`gate_and_fuse`]: `gate` is `3d x d`, `cross` are `d x d`.
#[derive(Debug, Clone)]
pub struct GateWeights {
    pub gate: Mat,
    pub cross: [Mat; 2],
}

impl GateWeights {
    pub fn zeros(d: usize) -> Self {
        GateWeights { gate: Mat::zeros((3 * d, d)), cross: [Mat::zeros((d, d)), Mat::zeros((d, d))] }
    }
}

/// Returns `(h, γ)` for a single node.
pub fn gate_and_fuse(z: &[f64], f1: &[f64], f2: &[f64], w: &GateWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = z.len();
    check_dim(d, f1.len())?;
    check_dim(d, f2.len())?;
    check_dim(3 * d, w.gate.nrows())?;
    check_dim(d, w.gate.ncols())?;
    for c in &w.cross {
        if c.dim() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: c.nrows() });
        }
    }
    let tape = Tape::new();
    let (zv, f1v, f2v) = (tape.constant(row(z)), tape.constant(row(f1)), tape.constant(row(f2)));
    let gate = tape.constant(w.gate.clone());
    let cross = [tape.constant(w.cross[0].clone()), tape.constant(w.cross[1].clone())];
    let (h, gamma) = gate_fuse_with_gate(&tape, zv, f1v, f2v, gate, cross);
    Ok((tape.value(h).row(0).to_vec(), tape.value(gamma).row(0).to_vec()))
}
