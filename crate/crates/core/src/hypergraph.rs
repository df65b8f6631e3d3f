//! Heterogeneous hypergraph over item-ID, price-level and category nodes.
//!
//! Three hyperedge families are built from training baskets: one
//! item-feature edge per distinct item joining its (ID, price, category)
//! nodes, and one item-ID edge plus one item-price edge per basket.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dataio::{Basket, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    Id,
    Category,
    Price,
}

impl NodeType {
    /// Canonical feature order.
    pub const ALL: [NodeType; 3] = [NodeType::Id, NodeType::Category, NodeType::Price];

    /// The two other feature types, in canonical order.
    pub fn others(self) -> [NodeType; 2] {
        match self {
            NodeType::Id => [NodeType::Category, NodeType::Price],
            NodeType::Category => [NodeType::Id, NodeType::Price],
            NodeType::Price => [NodeType::Id, NodeType::Category],
        }
    }

    pub fn index(self) -> usize {
        match self {
            NodeType::Id => 0,
            NodeType::Category => 1,
            NodeType::Price => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Id => "id",
            NodeType::Category => "category",
            NodeType::Price => "price",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub code: usize,
}

impl NodeRef {
    pub fn new(node_type: NodeType, code: usize) -> Self {
        NodeRef { node_type, code }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    ItemFeature,
    ItemId,
    ItemPrice,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::ItemFeature, EdgeType::ItemId, EdgeType::ItemPrice];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    pub edge_type: EdgeType,
    /// Sorted and deduplicated.
    pub members: Vec<NodeRef>,
}

impl Hyperedge {
    pub fn new(edge_type: EdgeType, members: impl IntoIterator<Item = NodeRef>) -> Self {
        let members: BTreeSet<NodeRef> = members.into_iter().collect();
        Hyperedge { edge_type, members: members.into_iter().collect() }
    }

    fn is_well_typed(&self) -> bool {
        if self.members.is_empty() {
            return false;
        }
        match self.edge_type {
            EdgeType::ItemFeature => {
                self.members.len() == 3
                    && NodeType::ALL.iter().all(|t| self.members.iter().filter(|m| m.node_type == *t).count() == 1)
            }
            EdgeType::ItemId => self.members.iter().all(|m| m.node_type == NodeType::Id),
            EdgeType::ItemPrice => self.members.iter().all(|m| m.node_type == NodeType::Price),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroHypergraph {
    pub n_items: usize,
    pub n_prices: usize,
    pub n_categories: usize,
    pub edges: Vec<Hyperedge>,
    /// Per node type, per code: indices of incident edges (ascending).
    incidence: [Vec<Vec<usize>>; 3],
}

impl HeteroHypergraph {
    /// Builds the graph from an explicit edge list. Edges are kept in the
    /// given order; incidence is derived from membership.
    pub fn from_edges(n_items: usize, n_prices: usize, n_categories: usize, edges: Vec<Hyperedge>) -> Result<Self> {
        let sizes = [n_items, n_categories, n_prices];
        let mut incidence: [Vec<Vec<usize>>; 3] = [vec![Vec::new(); n_items], vec![Vec::new(); n_categories], vec![Vec::new(); n_prices]];
        for (e, edge) in edges.iter().enumerate() {
            if !edge.is_well_typed() {
                return Err(Error::Format { what: "hyperedge", reason: format!("edge {e} is ill-typed: {edge:?}") });
            }
            for m in &edge.members {
                let t = m.node_type.index();
                if m.code >= sizes[t] {
                    return Err(Error::UnknownNode(format!("{m:?}")));
                }
                incidence[t][m.code].push(e);
            }
        }
        Ok(HeteroHypergraph { n_items, n_prices, n_categories, edges, incidence })
    }

    pub fn n_nodes(&self, t: NodeType) -> usize {
        match t {
            NodeType::Id => self.n_items,
            NodeType::Category => self.n_categories,
            NodeType::Price => self.n_prices,
        }
    }

    pub fn contains(&self, node: NodeRef) -> bool {
        node.code < self.n_nodes(node.node_type)
    }

    pub fn incident_edges(&self, node: NodeRef) -> Result<&[usize]> {
        if !self.contains(node) {
            return Err(Error::UnknownNode(format!("{node:?}")));
        }
        Ok(&self.incidence[node.node_type.index()][node.code])
    }

    /// All `target` nodes sharing at least one hyperedge with `node`, in
    /// ascending code order, excluding `node` itself.
    pub fn neighbors(&self, node: NodeRef, target: NodeType) -> Result<Vec<NodeRef>> {
        let mut out = BTreeSet::new();
        for &e in self.incident_edges(node)? {
            for m in &self.edges[e].members {
                if m.node_type == target && *m != node {
                    out.insert(*m);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Neighbor codes of type `target` for every node of type `source`.
    pub fn neighbor_table(&self, source: NodeType, target: NodeType) -> Vec<Vec<usize>> {
        (0..self.n_nodes(source))
            .map(|c| {
                self.neighbors(NodeRef::new(source, c), target)
                    .expect("code in range")
                    .into_iter()
                    .map(|n| n.code)
                    .collect()
            })
            .collect()
    }

    pub fn edge_count(&self, t: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.edge_type == t).count()
    }

    /// `(|node types|, |edge types|)`; heterogeneous when the sum exceeds 2.
    pub fn type_counts(&self) -> (usize, usize) {
        (NodeType::ALL.len(), EdgeType::ALL.len())
    }

    /// Plain-text summary: node counts and per-family edge-size histograms.
    pub fn report(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes\tid={}\tprice={}\tcategory={}", self.n_items, self.n_prices, self.n_categories).unwrap();
        for t in EdgeType::ALL {
            let sizes: Vec<usize> = self.edges.iter().filter(|e| e.edge_type == t).map(|e| e.members.len()).collect();
            let mut hist = std::collections::BTreeMap::<usize, usize>::new();
            for s in &sizes {
                *hist.entry(*s).or_default() += 1;
            }
            let hist: Vec<String> = hist.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            writeln!(out, "edges\t{t:?}\tcount={}\tsizes={}", sizes.len(), hist.join(",")).unwrap();
        }
        out
    }
}

/// Builds the hypergraph from training baskets only.
pub fn build_hypergraph<'a, I>(train_baskets: I, vocab: &Vocabulary) -> Result<HeteroHypergraph>
where
    I: IntoIterator<Item = &'a Basket>,
{
    let mut items = BTreeSet::new();
    let mut basket_edges = Vec::new();
    let mut any = false;
    for b in train_baskets {
        any = true;
        for it in &b.items {
            if it.item >= vocab.n_items() || it.price >= vocab.n_price_levels || it.category >= vocab.n_categories() {
                return Err(Error::UnknownNode(format!("{it:?}")));
            }
            items.insert(*it);
        }
        basket_edges.push(Hyperedge::new(EdgeType::ItemId, b.items.iter().map(|i| NodeRef::new(NodeType::Id, i.item))));
        basket_edges.push(Hyperedge::new(
            EdgeType::ItemPrice,
            b.items.iter().map(|i| NodeRef::new(NodeType::Price, i.price)),
        ));
    }
    if !any {
        return Err(Error::EmptyTrainSet);
    }
    let mut edges: Vec<Hyperedge> = items
        .into_iter()
        .map(|i| {
            Hyperedge::new(
                EdgeType::ItemFeature,
                [
                    NodeRef::new(NodeType::Id, i.item),
                    NodeRef::new(NodeType::Price, i.price),
                    NodeRef::new(NodeType::Category, i.category),
                ],
            )
        })
        .collect();
    edges.extend(basket_edges);
    HeteroHypergraph::from_edges(vocab.n_items(), vocab.n_price_levels, vocab.n_categories(), edges)
}
