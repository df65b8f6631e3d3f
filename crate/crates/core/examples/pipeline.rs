//! The command pipeline driven from a config file: preprocess, train from
//! the coded dataset, then evaluate.

use std::fs;

use bdhh::cli::{run_command, validate_config, validate_config_with, Command, DATASET_FILE};
use bdhh::synthetic::{planted_records, PlantedConfig};

const CONFIG: &str = r#"
seed = 9
output_dir = "OUT"

[data]
input = "IN"
format = "custom"
schema = "SCHEMA"
tag = "planted"

[preprocess]
grouping = "day"
price_levels = 4

[model]
embed_dim = 16
heads = 2
max_seq_len = 16

[train]
lr = 1e-2
epochs = 5
"#;

const SCHEMA: &str = r#"
delimiter = ","
user = "user"
item = ["item"]
price = "price"
category = { column = "category" }
day = { column = "day", kind = "integer" }
"#;

fn main() -> bdhh::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = PlantedConfig { users: 12, baskets_per_user: 6, items: 30, set_size: 3, noise_items: 1, ..PlantedConfig::default() };
    let mut csv = String::from("user,day,item,price,category\n");
    for r in planted_records(&cfg) {
        csv.push_str(&format!("{},{},{},{:.2},{}\n", r.user_id, r.day, r.item_id, r.price, r.category));
    }
    let input = dir.path().join("tx.csv");
    let schema = dir.path().join("schema.toml");
    fs::write(&input, csv)?;
    fs::write(&schema, SCHEMA)?;
    let raw = CONFIG
        .replace("OUT", &dir.path().join("run").display().to_string())
        .replace("IN", &input.display().to_string())
        .replace("SCHEMA", &schema.display().to_string());

    let pre = validate_config(&raw)?;
    println!("config hash {}", pre.config_hash());
    for p in run_command(Command::Preprocess, &pre)? {
        println!("wrote {}", p.display());
    }

    let dataset = pre.resolved_output_dir().join(DATASET_FILE);
    let overrides = [("data.dataset".to_string(), format!("{:?}", dataset.display().to_string()))];
    let cfg = validate_config_with(&raw, &overrides)?;
    for cmd in [Command::Train, Command::Evaluate] {
        for p in run_command(cmd, &cfg)? {
            println!("wrote {}", p.display());
        }
    }
    print!("{}", fs::read_to_string(cfg.resolved_output_dir().join("report.tsv"))?);
    Ok(())
}
