//! Experiment driver: TOML run configuration and the `preprocess`, `train`,
//! `evaluate` and `ablate` commands.
//!
//! ```toml
//! seed = 42
//! output_dir = "runs/dunnhumby"
//!
//! [data]
//! input = "data/transaction_data.csv"
//! format = "dunnhumby"
//!
//! [model]
//! embed_dim = 128
//!
//! [train]
//! epochs = 30
//! ```

use std::fmt;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataio::{load_transactions, preprocess, training_baskets, Dataset, DatasetFormat, PreprocessConfig, SchemaManifest};
use crate::error::{Error, Result};
use crate::hypergraph::{build_hypergraph, HeteroHypergraph};
use crate::metrics::{evaluate, evaluate_baseline, MetricsReport, RunInfo, CUTOFFS, REPORT_VERSION};
use crate::objective::{train, EpochLog, HyperParams, TrainOutcome, Variant};
use crate::util::hash_hex;

/// Relative output directories are resolved under this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "BDHH_OUTPUT_ROOT";

pub const DATASET_FILE: &str = "dataset.tsv";
pub const STATS_FILE: &str = "dataset_stats.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const REPORT_STEM: &str = "report";
pub const BASELINE_STEM: &str = "baseline";
pub const ABLATION_STEM: &str = "ablation";
const LOCK_FILE: &str = ".bdhh.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Preprocess,
    Train,
    Evaluate,
    Ablate,
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preprocess" => Ok(Command::Preprocess),
            "train" => Ok(Command::Train),
            "evaluate" => Ok(Command::Evaluate),
            "ablate" => Ok(Command::Ablate),
            _ => Err(Error::InvalidConfig(format!("unknown command `{s}`"))),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatTag {
    Dunnhumby,
    Valuedshopper,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// Raw transaction file.
    pub input: Option<PathBuf>,
    pub format: FormatTag,
    /// Schema manifest for the `custom` format.
    pub schema: Option<PathBuf>,
    /// Preprocessed dataset file; used instead of `input` when set.
    pub dataset: Option<PathBuf>,
    /// Checkpoint for `evaluate` (default: the output directory's).
    pub checkpoint: Option<PathBuf>,
    /// Dataset label in reports (default: the format name).
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub hp: HyperParams,
    pub output_dir: PathBuf,
    pub seed: u64,
}

fn field<T: DeserializeOwned>(value: toml::Value, name: &str) -> Result<T> {
    value.try_into().map_err(|e: toml::de::Error| Error::TypeError { field: name.to_string(), message: e.message().to_string() })
}

fn section(value: toml::Value, name: &str) -> Result<toml::Table> {
    match value {
        toml::Value::Table(t) => Ok(t),
        other => Err(Error::TypeError { field: name.to_string(), message: format!("expected a table, found {}", other.type_str()) }),
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::TypeError { field: p.to_string(), message: "expected a table".into() }),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses and validates a run configuration, filling every unset value with
/// its default.
pub fn validate_config(raw: &str) -> Result<RunConfig> {
    validate_config_with(raw, &[])
}

/// As [`validate_config`], with `key=value` overrides applied on top of the
/// file (dotted keys, values in TOML syntax or bare strings).
pub fn validate_config_with(raw: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(raw).map_err(|e| Error::Format { what: "config", reason: e.message().to_string() })?;
    for (k, v) in overrides {
        set_path(&mut table, k, parse_override_value(v))?;
    }

    let mut seed = 42u64;
    let mut output_dir = PathBuf::from("runs");
    let mut data_t = toml::Table::new();
    let mut pre_t = toml::Table::new();
    let mut model_t = toml::Table::new();
    let mut train_t = toml::Table::new();
    for (k, v) in table {
        match k.as_str() {
            "seed" => seed = field(v, "seed")?,
            "output_dir" => output_dir = field(v, "output_dir")?,
            "data" => data_t = section(v, "data")?,
            "preprocess" => pre_t = section(v, "preprocess")?,
            "model" => model_t = section(v, "model")?,
            "train" => train_t = section(v, "train")?,
            _ => return Err(Error::UnknownKey(k)),
        }
    }

    let mut data = DataConfig { input: None, format: FormatTag::Dunnhumby, schema: None, dataset: None, checkpoint: None, tag: None };
    for (k, v) in data_t {
        let name = format!("data.{k}");
        match k.as_str() {
            "input" => data.input = Some(field(v, &name)?),
            "format" => data.format = field(v, &name)?,
            "schema" => data.schema = Some(field(v, &name)?),
            "dataset" => data.dataset = Some(field(v, &name)?),
            "checkpoint" => data.checkpoint = Some(field(v, &name)?),
            "tag" => data.tag = Some(field(v, &name)?),
            _ => return Err(Error::UnknownKey(name)),
        }
    }
    if data.format == FormatTag::Custom && data.schema.is_none() && data.dataset.is_none() {
        return Err(Error::InvalidConfig("format `custom` requires data.schema".into()));
    }

    let mut pre = match data.format {
        FormatTag::Dunnhumby => PreprocessConfig::dunnhumby(),
        FormatTag::Valuedshopper => PreprocessConfig::valuedshopper(),
        FormatTag::Custom => PreprocessConfig::default(),
    };
    for (k, v) in pre_t {
        let name = format!("preprocess.{k}");
        match k.as_str() {
            "grouping" => pre.grouping = field(v, &name)?,
            "price_levels" => pre.price_levels = field(v, &name)?,
            "min_item_count" => pre.min_item_count = field(v, &name)?,
            "max_baskets_per_user" => pre.max_baskets_per_user = field(v, &name)?,
            "sample_users" => pre.sample_users = field(v, &name)?,
            _ => return Err(Error::UnknownKey(name)),
        }
    }
    if pre.price_levels == 0 {
        return Err(Error::InvalidConfig("preprocess.price_levels must be positive".into()));
    }
    pre.seed = seed;

    let mut hp = HyperParams::default();
    for (k, v) in model_t {
        let name = format!("model.{k}");
        match k.as_str() {
            "embed_dim" => hp.embed_dim = field(v, &name)?,
            "heads" => hp.heads = field(v, &name)?,
            "encoder_layers" => hp.encoder_layers = field(v, &name)?,
            "max_seq_len" => hp.max_seq_len = field(v, &name)?,
            "price_pooling" => hp.price_pooling = field(v, &name)?,
            "without_augmentation" => hp.without_augmentation = field(v, &name)?,
            "without_price" => hp.without_price = field(v, &name)?,
            "variant" => {
                let tag: String = field(v, &name)?;
                hp = hp.with_variant(tag.parse()?);
            }
            _ => return Err(Error::UnknownKey(name)),
        }
    }
    for (k, v) in train_t {
        let name = format!("train.{k}");
        match k.as_str() {
            "lr" => hp.lr = field(v, &name)?,
            "l2" => hp.l2 = field(v, &name)?,
            "batch_size" => hp.batch_size = field(v, &name)?,
            "epochs" => hp.epochs = field(v, &name)?,
            "patience" => hp.patience = field(v, &name)?,
            _ => return Err(Error::UnknownKey(name)),
        }
    }
    hp.seed = seed;
    hp.validate()?;

    Ok(RunConfig { data, preprocess: pre, hp, output_dir, seed })
}

fn existing(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

impl RunConfig {
    /// Checks that every input the command reads exists.
    pub fn check_paths(&self, cmd: Command) -> Result<()> {
        let d = &self.data;
        if cmd != Command::Preprocess {
            if let Some(ds) = &d.dataset {
                existing(ds)?;
                if cmd == Command::Evaluate {
                    existing(&self.checkpoint_path())?;
                }
                return Ok(());
            }
        }
        let input = d.input.as_ref().ok_or_else(|| Error::InvalidConfig("data.input is required".into()))?;
        existing(input)?;
        if let Some(s) = &d.schema {
            existing(s)?;
        }
        if cmd == Command::Evaluate {
            existing(&self.checkpoint_path())?;
        }
        Ok(())
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.data.checkpoint.clone().unwrap_or_else(|| self.resolved_output_dir().join(CHECKPOINT_FILE))
    }

    pub fn dataset_tag(&self) -> String {
        self.data.tag.clone().unwrap_or_else(|| {
            match self.data.format {
                FormatTag::Dunnhumby => "dunnhumby",
                FormatTag::Valuedshopper => "valuedshopper",
                FormatTag::Custom => "custom",
            }
            .to_string()
        })
    }

    /// Hash over every setting that affects results (paths excluded).
    pub fn config_hash(&self) -> String {
        let v = serde_json::json!({
            "format": self.data.format,
            "preprocess": self.preprocess,
            "hp": self.hp,
            "seed": self.seed,
        });
        hash_hex(v.to_string().as_bytes())
    }

    fn dataset_format(&self) -> Result<DatasetFormat> {
        Ok(match self.data.format {
            FormatTag::Dunnhumby => DatasetFormat::Dunnhumby,
            FormatTag::Valuedshopper => DatasetFormat::Valuedshopper,
            FormatTag::Custom => {
                let path = self.data.schema.as_ref().ok_or_else(|| Error::InvalidConfig("data.schema is required".into()))?;
                existing(path)?;
                DatasetFormat::Custom(SchemaManifest::from_toml(&fs::read_to_string(path)?)?)
            }
        })
    }

    /// Loads the preprocessed dataset, or builds it from the raw input.
    pub fn load_dataset(&self) -> Result<Dataset> {
        if let Some(ds) = &self.data.dataset {
            existing(ds)?;
            return Dataset::load(ds);
        }
        let input = self.data.input.as_ref().ok_or_else(|| Error::InvalidConfig("data.input is required".into()))?;
        existing(input)?;
        preprocess(load_transactions(input, &self.dataset_format()?)?, &self.preprocess)
    }
}

/// Held while a command writes into an output directory.
pub struct OutputLock(PathBuf);

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn graph_for(dataset: &Dataset) -> Result<HeteroHypergraph> {
    build_hypergraph(training_baskets(&dataset.sequences), &dataset.vocab)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variant: String,
    pub checkpoint: String,
    pub best_epoch: usize,
    pub best_val_ndcg10: Option<f64>,
    pub epochs: Vec<EpochLog>,
}

/// Trains on the dataset's split and packs the best parameters.
pub fn train_checkpoint(dataset: &Dataset, graph: &HeteroHypergraph, hp: &HyperParams, config_hash: &str) -> Result<(Checkpoint, TrainOutcome)> {
    let split = dataset.split();
    let outcome = train(dataset, &split.train, &split.val, graph, hp)?;
    let ds_hash = hash_hex(dataset.to_text().as_bytes());
    let ckpt = Checkpoint::from_model(&outcome.model, &dataset.vocab, config_hash, &ds_hash, outcome.best_epoch);
    Ok((ckpt, outcome))
}

/// Test-split report for a checkpoint trained on `dataset`.
pub fn evaluate_checkpoint(dataset: &Dataset, graph: &HeteroHypergraph, ckpt: &Checkpoint, tag: &str) -> Result<MetricsReport> {
    if ckpt.vocab != dataset.vocab {
        return Err(Error::Format { what: "checkpoint", reason: "vocabulary differs from the dataset".into() });
    }
    let model = ckpt.to_model(graph)?;
    let id = ckpt.id();
    let info = RunInfo { dataset: tag, variant: ckpt.hp.variant().tag(), seed: ckpt.hp.seed, checkpoint: &id, config_hash: &ckpt.config_hash };
    evaluate(&model, &dataset.sequences, &dataset.split().test, &info)
}

pub fn baseline_report(dataset: &Dataset, tag: &str, seed: u64, config_hash: &str) -> MetricsReport {
    let info = RunInfo { dataset: tag, variant: "frequency", seed, checkpoint: "-", config_hash };
    evaluate_baseline(
        &dataset.sequences,
        &dataset.split().test,
        training_baskets(&dataset.sequences),
        dataset.vocab.n_items(),
        &info,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: u32,
    pub dataset: String,
    pub config_hash: String,
    pub seed: u64,
    /// One report per variant: BDHH, w/o A, w/o P.
    pub rows: Vec<MetricsReport>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.variant == v.tag())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variant");
        for k in CUTOFFS {
            out.push_str(&format!("\tndcg@{k}\thit@{k}\trecall@{k}"));
        }
        out.push_str("\tusers\tseed\tcheckpoint\tconfig_hash\n");
        for r in &self.rows {
            out.push_str(&r.variant);
            for m in &r.metrics {
                out.push_str(&format!("\t{:.6}\t{:.6}\t{:.6}", m.ndcg, m.hit, m.recall));
            }
            out.push_str(&format!("\t{}\t{}\t{}\t{}\n", r.users, r.seed, r.checkpoint, r.config_hash));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Trains and evaluates the full model and both single-component ablations.
pub fn ablate(dataset: &Dataset, graph: &HeteroHypergraph, hp: &HyperParams, tag: &str, config_hash: &str) -> Result<(AblationReport, Vec<Checkpoint>)> {
    let mut rows = Vec::new();
    let mut ckpts = Vec::new();
    for v in Variant::ABLATION {
        let (ckpt, _) = train_checkpoint(dataset, graph, &hp.with_variant(v), config_hash)?;
        rows.push(evaluate_checkpoint(dataset, graph, &ckpt, tag)?);
        ckpts.push(ckpt);
    }
    let report = AblationReport { version: REPORT_VERSION, dataset: tag.to_string(), config_hash: config_hash.to_string(), seed: hp.seed, rows };
    Ok((report, ckpts))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    artifacts.push(path);
    Ok(())
}

fn variant_slug(v: Variant) -> &'static str {
    match v {
        Variant::Full => "bdhh",
        Variant::WithoutAugmentation => "wo_a",
        Variant::WithoutPrice => "wo_p",
        Variant::WithoutBoth => "wo_ap",
    }
}

/// Runs one command and returns the paths it wrote.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.check_paths(cmd)?;
    let out = cfg.resolved_output_dir();
    let hash = cfg.config_hash();
    let tag = cfg.dataset_tag();
    let mut artifacts = Vec::new();
    match cmd {
        Command::Preprocess => {
            let dataset = cfg.load_dataset()?;
            let stats = serde_json::json!({
                "config_hash": hash,
                "dataset_config_hash": dataset.config_hash,
                "seed": cfg.seed,
                "dataset": tag,
                "stats": dataset.stats(),
            });
            let _lock = OutputLock::acquire(&out)?;
            write(&out, DATASET_FILE, dataset.to_text(), &mut artifacts)?;
            write(&out, STATS_FILE, serde_json::to_string_pretty(&stats).expect("json") + "\n", &mut artifacts)?;
        }
        Command::Train => {
            let dataset = cfg.load_dataset()?;
            let graph = graph_for(&dataset)?;
            log::info!("{}", graph.report());
            let (ckpt, outcome) = train_checkpoint(&dataset, &graph, &cfg.hp, &hash)?;
            let train_log = TrainLog {
                version: REPORT_VERSION,
                config_hash: hash.clone(),
                seed: cfg.seed,
                variant: cfg.hp.variant().tag().to_string(),
                checkpoint: ckpt.id(),
                best_epoch: outcome.best_epoch,
                best_val_ndcg10: outcome.best_val_ndcg10,
                epochs: outcome.log,
            };
            let _lock = OutputLock::acquire(&out)?;
            write(&out, CHECKPOINT_FILE, ckpt.to_bytes(), &mut artifacts)?;
            write(&out, TRAIN_LOG_FILE, serde_json::to_string_pretty(&train_log).expect("json") + "\n", &mut artifacts)?;
        }
        Command::Evaluate => {
            let dataset = cfg.load_dataset()?;
            let graph = graph_for(&dataset)?;
            let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
            let report = evaluate_checkpoint(&dataset, &graph, &ckpt, &tag)?;
            let baseline = baseline_report(&dataset, &tag, cfg.seed, &hash);
            let _lock = OutputLock::acquire(&out)?;
            write(&out, &format!("{REPORT_STEM}.tsv"), report.to_tsv(), &mut artifacts)?;
            write(&out, &format!("{REPORT_STEM}.json"), report.to_json(), &mut artifacts)?;
            write(&out, &format!("{BASELINE_STEM}.tsv"), baseline.to_tsv(), &mut artifacts)?;
            write(&out, &format!("{BASELINE_STEM}.json"), baseline.to_json(), &mut artifacts)?;
        }
        Command::Ablate => {
            let dataset = cfg.load_dataset()?;
            let graph = graph_for(&dataset)?;
            let (report, ckpts) = ablate(&dataset, &graph, &cfg.hp, &tag, &hash)?;
            let _lock = OutputLock::acquire(&out)?;
            for (v, c) in Variant::ABLATION.iter().zip(&ckpts) {
                write(&out, &format!("checkpoint_{}.bin", variant_slug(*v)), c.to_bytes(), &mut artifacts)?;
            }
            write(&out, &format!("{ABLATION_STEM}.tsv"), report.to_tsv(), &mut artifacts)?;
            write(&out, &format!("{ABLATION_STEM}.json"), report.to_json(), &mut artifacts)?;
        }
    }
    Ok(artifacts)
}

/// The machine-readable failure record printed by the binary.
pub fn error_record(cmd: Option<Command>, err: &Error) -> String {
    serde_json::json!({
        "status": "error",
        "command": cmd.map(|c| c.to_string()),
        "kind": err.kind(),
        "message": err.to_string(),
    })
    .to_string()
}
