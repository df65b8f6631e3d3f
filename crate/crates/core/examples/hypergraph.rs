//! Builds the item hypergraph of the toy dataset and walks its neighbor
//! structure.

use bdhh::cli::graph_for;
use bdhh::hypergraph::{NodeRef, NodeType};
use bdhh::synthetic::toy_dataset;

fn main() -> bdhh::Result<()> {
    let ds = toy_dataset()?;
    let graph = graph_for(&ds)?;
    println!("{}", graph.report());
    for code in 0..ds.vocab.n_items() {
        let node = NodeRef::new(NodeType::Id, code);
        let item = &ds.vocab.items[code];
        let cats = graph.neighbors(node, NodeType::Category)?;
        let prices = graph.neighbors(node, NodeType::Price)?;
        println!(
            "{} edges={} category={:?} price_level={:?}",
            item.id,
            graph.incident_edges(node)?.len(),
            cats.iter().map(|n| ds.vocab.categories[n.code].as_str()).collect::<Vec<_>>(),
            prices.iter().map(|n| n.code).collect::<Vec<_>>(),
        );
    }
    for t in NodeType::ALL {
        for s in t.others() {
            println!("{} -> {}: {:?}", t.name(), s.name(), graph.neighbor_table(t, s));
        }
    }
    Ok(())
}
