//! Trains on a synthetic dataset where every user rebuys a fixed personal
//! item set, then reports test metrics against the frequency baseline.

use std::time::Instant;

use bdhh::cli::{baseline_report, evaluate_checkpoint, graph_for, train_checkpoint};
use bdhh::objective::HyperParams;
use bdhh::synthetic::{planted_dataset, PlantedConfig};

fn main() -> bdhh::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let ds = planted_dataset(&PlantedConfig::default())?;
    let graph = graph_for(&ds)?;
    println!("{}", graph.report());
    let mut hp = HyperParams { embed_dim: 32, lr: 1e-2, epochs: 50, ..HyperParams::default() };
    let mut args = std::env::args().skip(1);
    if let Some(lr) = args.next() {
        hp.lr = lr.parse().expect("learning rate");
    }
    if let Some(d) = args.next() {
        hp.embed_dim = d.parse().expect("embedding width");
    }
    let start = Instant::now();
    let (ckpt, outcome) = train_checkpoint(&ds, &graph, &hp, "planted")?;
    println!("trained {} epochs in {:.1?}, kept epoch {}", outcome.log.len(), start.elapsed(), outcome.best_epoch);
    print!("{}", evaluate_checkpoint(&ds, &graph, &ckpt, "planted")?.to_tsv());
    print!("{}", baseline_report(&ds, "planted", hp.seed, "planted").tsv_rows());
    Ok(())
}
