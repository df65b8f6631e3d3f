use std::path::PathBuf;
use std::process::ExitCode;

use bdhh::cli::{error_record, run_command, validate_config_with, Command};
use bdhh::Error;
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, ValueEnum)]
enum Verb {
    Preprocess,
    Train,
    Evaluate,
    Ablate,
}

#[derive(Parser)]
#[command(name = "bdhh", version, about = "Price-aware next-basket recommendation")]
struct Args {
    command: Verb,
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// BDHH, "w/o A" or "w/o P".
    #[arg(long)]
    variant: Option<String>,
    /// Extra overrides as dotted `key=value`, e.g. `train.lr=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cmd = match args.command {
        Verb::Preprocess => Command::Preprocess,
        Verb::Train => Command::Train,
        Verb::Evaluate => Command::Evaluate,
        Verb::Ablate => Command::Ablate,
    };
    match run(cmd, &args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(Some(cmd), &e));
            ExitCode::from(2)
        }
    }
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn run(cmd: Command, args: &Args) -> bdhh::Result<Vec<PathBuf>> {
    let raw = match &args.config {
        Some(p) if !p.exists() => return Err(Error::MissingFile(p.clone())),
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| overrides.push((k.to_string(), v));
    if let Some(v) = &args.output_dir {
        push("output_dir", quoted(v));
    }
    if let Some(v) = args.seed {
        push("seed", v.to_string());
    }
    if let Some(v) = &args.input {
        push("data.input", quoted(v));
    }
    if let Some(v) = &args.dataset {
        push("data.dataset", quoted(v));
    }
    if let Some(v) = &args.checkpoint {
        push("data.checkpoint", quoted(v));
    }
    if let Some(v) = args.epochs {
        push("train.epochs", v.to_string());
    }
    if let Some(v) = &args.variant {
        push("model.variant", quoted(v));
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("expected KEY=VALUE, got `{kv}`")))?;
        push(k.trim(), v.trim().to_string());
    }
    let cfg = validate_config_with(&raw, &overrides)?;
    run_command(cmd, &cfg)
}
