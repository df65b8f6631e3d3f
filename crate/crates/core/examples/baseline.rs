//! Personal-frequency baseline against a trained model on a noisy planted
//! dataset.

use bdhh::cli::{baseline_report, evaluate_checkpoint, graph_for, train_checkpoint};
use bdhh::metrics::MetricsReport;
use bdhh::objective::HyperParams;
use bdhh::synthetic::{planted_dataset, PlantedConfig};

fn main() -> bdhh::Result<()> {
    let cfg = PlantedConfig { users: 30, baskets_per_user: 10, items: 60, noise_items: 2, ..PlantedConfig::default() };
    let ds = planted_dataset(&cfg)?;
    let graph = graph_for(&ds)?;

    let base = baseline_report(&ds, "planted", 0, "-");
    let hp = HyperParams { embed_dim: 16, heads: 2, lr: 1e-2, epochs: 15, ..HyperParams::default() };
    let (ckpt, _) = train_checkpoint(&ds, &graph, &hp, "-")?;
    let report = evaluate_checkpoint(&ds, &graph, &ckpt, "planted")?;

    println!("{}", MetricsReport::TSV_HEADER);
    print!("{}{}", base.tsv_rows(), report.tsv_rows());
    Ok(())
}
