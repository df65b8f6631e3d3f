//! Semantics-enhanced node embeddings from the heterogeneous encoder, plus
//! the single-node aggregation and gate used inside it.

use bdhh::cli::graph_for;
use bdhh::encoder::{aggregate_feature, encode_graph, gate_and_fuse, GateWeights};
use bdhh::hypergraph::NodeType;
use bdhh::model::Model;
use bdhh::objective::HyperParams;
use bdhh::synthetic::toy_dataset;

fn norm(row: ndarray::ArrayView1<f64>) -> f64 {
    row.mapv(|x| x * x).sum().sqrt()
}

fn main() -> bdhh::Result<()> {
    let ds = toy_dataset()?;
    let graph = graph_for(&ds)?;
    for layers in [1, 2] {
        let hp = HyperParams { embed_dim: 8, heads: 2, encoder_layers: layers, ..HyperParams::default() };
        let model = Model::new(&hp, &graph, ds.vocab.item_price_levels())?;
        let h = encode_graph(&graph, &model.store, &model.tables, &model.encoder)?;
        println!("encoder_layers={layers}");
        for t in NodeType::ALL {
            let z = model.store.get(model.tables.get(t));
            let e = h.get(t);
            for r in 0..e.nrows() {
                println!("  {}[{r}] |z|={:.3} |h|={:.3}", t.name(), norm(z.row(r)), norm(e.row(r)));
            }
        }
    }

    let z = [0.5, -0.2];
    let neighbors = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let f = aggregate_feature(&z, &neighbors, &[0.3, -0.1])?;
    println!("aggregated neighbor feature {f:?}");
    let (fused, gamma) = gate_and_fuse(&z, &f, &[0.0, 0.0], &GateWeights::zeros(2))?;
    println!("zero gate: gamma={gamma:?} h={fused:?}");
    Ok(())
}
