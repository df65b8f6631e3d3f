//! Trains the full model and both ablations on the same noisy planted data.

use bdhh::cli::{ablate, graph_for};
use bdhh::objective::HyperParams;
use bdhh::synthetic::{planted_dataset, PlantedConfig};

fn main() -> bdhh::Result<()> {
    let cfg = PlantedConfig { users: 30, baskets_per_user: 10, items: 60, noise_items: 2, ..PlantedConfig::default() };
    let ds = planted_dataset(&cfg)?;
    let graph = graph_for(&ds)?;
    let hp = HyperParams { embed_dim: 16, heads: 2, lr: 1e-2, epochs: 15, ..HyperParams::default() };
    let (report, ckpts) = ablate(&ds, &graph, &hp, "planted", "-")?;
    print!("{}", report.to_tsv());
    for (row, c) in report.rows.iter().zip(&ckpts) {
        println!("{:<8} best epoch {}", row.variant, c.best_epoch);
    }
    Ok(())
}
