//! Transaction ingestion, basket construction, price discretization and the
//! train/validation/test split.
//!
//! The pipeline is `load_transactions -> preprocess -> Dataset`, and a
//! [`Dataset`] serializes to a line-oriented text file (see
//! [`Dataset::to_text`]) that round-trips exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &str = "#bdhh-dataset";
pub const DATASET_VERSION: u32 = 1;

/// One purchased line from a raw log.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub user_id: String,
    pub day: u32,
    pub basket_key: Option<String>,
    pub item_id: String,
    /// Unit price in currency units.
    pub price: f64,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayKind {
    /// Already an integer day index.
    Integer,
    /// `YYYY-MM-DD`, converted to days since 1970-01-01.
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayColumn {
    pub column: String,
    pub kind: DayKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategorySource {
    Column(String),
    /// Join against a side table keyed by the (single) item column. A
    /// relative `file` is resolved next to the transaction file.
    Lookup { file: PathBuf, key: String, value: String },
}

/// Column layout of a delimiter-separated transaction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaManifest {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub user: String,
    #[serde(default)]
    pub basket: Option<String>,
    pub day: DayColumn,
    /// Columns joined with `:` to form the item identifier.
    pub item: Vec<String>,
    pub price: String,
    /// When present, `price / quantity` is used as the unit price.
    #[serde(default)]
    pub quantity: Option<String>,
    pub category: CategorySource,
}

fn default_delimiter() -> char {
    ','
}

impl SchemaManifest {
    /// "The Complete Journey" export: `transaction_data.csv` + `product.csv`.
    pub fn dunnhumby() -> Self {
        SchemaManifest {
            delimiter: ',',
            user: "household_key".into(),
            basket: Some("BASKET_ID".into()),
            day: DayColumn { column: "DAY".into(), kind: DayKind::Integer },
            item: vec!["PRODUCT_ID".into()],
            price: "SALES_VALUE".into(),
            quantity: Some("QUANTITY".into()),
            category: CategorySource::Lookup {
                file: PathBuf::from("product.csv"),
                key: "PRODUCT_ID".into(),
                value: "COMMODITY_DESC".into(),
            },
        }
    }

    /// Acquire Valued Shoppers `transactions.csv`. There is no product id
    /// column, so an item is the (category, company, brand) triple.
    pub fn valuedshopper() -> Self {
        SchemaManifest {
            delimiter: ',',
            user: "id".into(),
            basket: None,
            day: DayColumn { column: "date".into(), kind: DayKind::Date },
            item: vec!["category".into(), "company".into(), "brand".into()],
            price: "purchaseamount".into(),
            quantity: Some("purchasequantity".into()),
            category: CategorySource::Column("category".into()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::SchemaMismatch(format!("schema manifest: {e}")))
    }
}

/// Dataset-format tag accepted by [`load_transactions`].
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum DatasetFormat {
    Dunnhumby,
    Valuedshopper,
    Custom(SchemaManifest),
}

impl DatasetFormat {
    pub fn manifest(&self) -> SchemaManifest {
        match self {
            DatasetFormat::Dunnhumby => SchemaManifest::dunnhumby(),
            DatasetFormat::Valuedshopper => SchemaManifest::valuedshopper(),
            DatasetFormat::Custom(m) => m.clone(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DatasetFormat::Dunnhumby => "dunnhumby",
            DatasetFormat::Valuedshopper => "valuedshopper",
            DatasetFormat::Custom(_) => "custom",
        }
    }
}

fn open_csv(path: &Path, delimiter: char) -> Result<(csv::Reader<File>, Vec<String>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::SchemaMismatch(format!("{}: no header", path.display())));
    }
    Ok((reader, headers))
}

fn column(headers: &[String], name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::SchemaMismatch(format!("{}: missing column `{name}`", path.display())))
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn field(record: &csv::StringRecord, idx: usize) -> Result<&str> {
    record.get(idx).map(str::trim).ok_or_else(|| Error::MalformedRow {
        line: row_line(record),
        reason: format!("expected at least {} fields, found {}", idx + 1, record.len()),
    })
}

fn parse_day(raw: &str, kind: DayKind, line: u64) -> Result<u32> {
    let bad = |reason: String| Error::MalformedRow { line, reason };
    match kind {
        DayKind::Integer => raw.parse::<u32>().map_err(|e| bad(format!("day `{raw}`: {e}"))),
        DayKind::Date => {
            let date = chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .map_err(|e| bad(format!("date `{raw}`: {e}")))?;
            let epoch = chrono::NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
            u32::try_from((date - epoch).num_days()).map_err(|_| bad(format!("date `{raw}` precedes 1970-01-01")))
        }
    }
}

fn load_lookup(path: &Path, delimiter: char, key: &str, value: &str) -> Result<BTreeMap<String, String>> {
    let (mut reader, headers) = open_csv(path, delimiter)?;
    let k = column(&headers, key, path)?;
    let v = column(&headers, value, path)?;
    let mut map = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow { line: 0, reason: e.to_string() })?;
        map.insert(field(&row, k)?.to_string(), field(&row, v)?.to_string());
    }
    Ok(map)
}

/// Reads a transaction file. Rows with an empty, negative, or zero-quantity
/// price (returns, voids) are dropped; unparsable rows are errors.
pub fn load_transactions(path: &Path, format: &DatasetFormat) -> Result<Vec<TransactionRecord>> {
    let schema = format.manifest();
    let (mut reader, headers) = open_csv(path, schema.delimiter)?;
    let user = column(&headers, &schema.user, path)?;
    let day = column(&headers, &schema.day.column, path)?;
    let basket = schema.basket.as_deref().map(|b| column(&headers, b, path)).transpose()?;
    let items = schema
        .item
        .iter()
        .map(|c| column(&headers, c, path))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(Error::SchemaMismatch("no item columns declared".into()));
    }
    let price = column(&headers, &schema.price, path)?;
    let quantity = schema.quantity.as_deref().map(|q| column(&headers, q, path)).transpose()?;

    enum Cat {
        Col(usize),
        Table(BTreeMap<String, String>),
    }
    let category = match &schema.category {
        CategorySource::Column(c) => Cat::Col(column(&headers, c, path)?),
        CategorySource::Lookup { file, key, value } => {
            let side = if file.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(file)
            } else {
                file.clone()
            };
            Cat::Table(load_lookup(&side, schema.delimiter, key, value)?)
        }
    };

    let mut out = Vec::new();
    let mut dropped = 0usize;
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row_line(&row);
        if row.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let user_id = field(&row, user)?.to_string();
        let item_id = items
            .iter()
            .map(|&i| field(&row, i))
            .collect::<Result<Vec<_>>>()?
            .join(":");
        if user_id.is_empty() || item_id.is_empty() {
            return Err(Error::MalformedRow { line, reason: "empty user or item id".into() });
        }
        let day = parse_day(field(&row, day)?, schema.day.kind, line)?;
        let raw_price = field(&row, price)?;
        if raw_price.is_empty() {
            dropped += 1;
            continue;
        }
        let mut unit: f64 = raw_price
            .parse()
            .map_err(|e| Error::MalformedRow { line, reason: format!("price `{raw_price}`: {e}") })?;
        if let Some(q) = quantity {
            let raw_q = field(&row, q)?;
            let q: f64 = raw_q
                .parse()
                .map_err(|e| Error::MalformedRow { line, reason: format!("quantity `{raw_q}`: {e}") })?;
            if q <= 0.0 {
                dropped += 1;
                continue;
            }
            unit /= q;
        }
        if !unit.is_finite() || unit < 0.0 {
            dropped += 1;
            continue;
        }
        let category = match &category {
            Cat::Col(c) => field(&row, *c)?.to_string(),
            Cat::Table(t) => match t.get(&item_id) {
                Some(c) => c.clone(),
                None => {
                    dropped += 1;
                    continue;
                }
            },
        };
        let basket_key = basket.map(|b| field(&row, b).map(str::to_string)).transpose()?;
        out.push(TransactionRecord { user_id, day, basket_key, item_id, price: unit, category });
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows without a usable price or category", path.display());
    }
    Ok(out)
}

/// How records are grouped into baskets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Everything one user bought on one day.
    Day,
    /// The log's own transaction identifier (falls back to the day when absent).
    BasketKey,
}

/// One item occurrence inside a basket, fully coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemRef {
    pub item: usize,
    pub price: usize,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basket {
    pub user: usize,
    pub seq_index: usize,
    pub day: u32,
    /// Sorted by item code, deduplicated, never empty.
    pub items: Vec<ItemRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasketSequence {
    pub user: usize,
    pub baskets: Vec<Basket>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemInfo {
    pub id: String,
    pub price_level: usize,
    pub category: usize,
}

/// Code assignments for users, items, price levels and categories. Codes
/// follow the lexicographic order of the raw identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    pub users: Vec<String>,
    pub items: Vec<ItemInfo>,
    pub categories: Vec<String>,
    pub n_price_levels: usize,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
    category_index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new(users: Vec<String>, items: Vec<ItemInfo>, categories: Vec<String>, n_price_levels: usize) -> Result<Self> {
        let index = |names: &[String], what: &'static str| -> Result<BTreeMap<String, usize>> {
            let mut map = BTreeMap::new();
            for (i, n) in names.iter().enumerate() {
                if map.insert(n.clone(), i).is_some() {
                    return Err(Error::Format { what, reason: format!("duplicate entry `{n}`") });
                }
            }
            Ok(map)
        };
        let user_index = index(&users, "user vocabulary")?;
        let ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
        let item_index = index(&ids, "item vocabulary")?;
        let category_index = index(&categories, "category vocabulary")?;
        for it in &items {
            if it.price_level >= n_price_levels || it.category >= categories.len() {
                return Err(Error::Format { what: "item vocabulary", reason: format!("item `{}` has invalid codes", it.id) });
            }
        }
        Ok(Vocabulary { users, items, categories, n_price_levels, user_index, item_index, category_index })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn item_code(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn user_code(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn category_code(&self, label: &str) -> Option<usize> {
        self.category_index.get(label).copied()
    }

    pub fn item_ref(&self, item: usize) -> ItemRef {
        let info = &self.items[item];
        ItemRef { item, price: info.price_level, category: info.category }
    }

    /// Price level of every item, indexed by item code.
    pub fn item_price_levels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.price_level).collect()
    }
}

/// Level in `[0, n_levels)` for each input price, by equal-frequency bins over
/// the sorted distinct values. Equal prices always share a level.
pub fn equal_frequency_levels(prices: &[f64], n_levels: usize) -> Vec<usize> {
    assert!(n_levels >= 1);
    let mut distinct: Vec<f64> = prices.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let n = distinct.len();
    prices
        .iter()
        .map(|p| {
            let rank = distinct.partition_point(|d| d.total_cmp(p).is_lt());
            rank * n_levels / n
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Relative price level of an item within its category.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceAssignment {
    pub category: String,
    pub representative_price: f64,
    pub level: usize,
}

/// Assigns every item a price level: the item's median observed price is
/// binned by equal frequency among the items of its category. An item seen
/// under several categories keeps its most frequent one.
pub fn discretize_prices(records: &[TransactionRecord], n_levels: usize) -> Result<BTreeMap<String, PriceAssignment>> {
    if n_levels == 0 {
        return Err(Error::InvalidConfig("price levels must be >= 1".into()));
    }
    if records.is_empty() {
        return Err(Error::NoPrices);
    }
    let mut prices: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut cats: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for r in records {
        prices.entry(&r.item_id).or_default().push(r.price);
        *cats.entry(&r.item_id).or_default().entry(&r.category).or_default() += 1;
    }
    let mut by_category: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for (item, ps) in prices.iter_mut() {
        let counts = &cats[item];
        // max_by_key keeps the last maximum; iterate reversed so ties go to the smallest label.
        let cat = counts.iter().rev().max_by_key(|(_, &n)| n).map(|(c, _)| *c).unwrap();
        by_category.entry(cat).or_default().push((item, median(ps)));
    }
    let mut out = BTreeMap::new();
    for (cat, members) in by_category {
        let reps: Vec<f64> = members.iter().map(|m| m.1).collect();
        let levels = equal_frequency_levels(&reps, n_levels);
        for ((item, rep), level) in members.into_iter().zip(levels) {
            out.insert(
                item.to_string(),
                PriceAssignment { category: cat.to_string(), representative_price: rep, level },
            );
        }
    }
    Ok(out)
}

/// Vocabulary over the users, items and categories present in `records`.
pub fn build_vocabulary(records: &[TransactionRecord], prices: &BTreeMap<String, PriceAssignment>, n_levels: usize) -> Result<Vocabulary> {
    let users: Vec<String> = records.iter().map(|r| r.user_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let categories: Vec<String> = prices.values().map(|p| p.category.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let cat_code: BTreeMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let items = prices
        .iter()
        .map(|(id, p)| ItemInfo { id: id.clone(), price_level: p.level, category: cat_code[p.category.as_str()] })
        .collect();
    Vocabulary::new(users, items, categories, n_levels)
}

/// Groups records into per-user chronological basket sequences. Users with
/// fewer than two baskets are dropped; repeated items in a basket collapse.
pub fn build_baskets(records: &[TransactionRecord], grouping: Grouping, vocab: &Vocabulary) -> Result<Vec<BasketSequence>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    // user -> (day, key) -> items
    let mut groups: BTreeMap<usize, BTreeMap<(u32, String), BTreeSet<usize>>> = BTreeMap::new();
    for r in records {
        let (Some(user), Some(item)) = (vocab.user_code(&r.user_id), vocab.item_code(&r.item_id)) else {
            continue;
        };
        let key = match (grouping, &r.basket_key) {
            (Grouping::BasketKey, Some(k)) => k.clone(),
            _ => String::new(),
        };
        groups.entry(user).or_default().entry((r.day, key)).or_default().insert(item);
    }
    let mut out = Vec::new();
    for (user, baskets) in groups {
        if baskets.len() < 2 {
            continue;
        }
        let baskets = baskets
            .into_iter()
            .enumerate()
            .map(|(seq_index, ((day, _), items))| Basket {
                user,
                seq_index,
                day,
                items: items.into_iter().map(|i| vocab.item_ref(i)).collect(),
            })
            .collect();
        out.push(BasketSequence { user, baskets });
    }
    Ok(out)
}

/// A prediction instance: predict `baskets[target]` from `baskets[..target]`
/// of sequence number `sequence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sample {
    pub sequence: usize,
    pub target: usize,
}

impl Sample {
    pub fn history<'a>(&self, seqs: &'a [BasketSequence]) -> &'a [Basket] {
        &seqs[self.sequence].baskets[..self.target]
    }

    pub fn target_basket<'a>(&self, seqs: &'a [BasketSequence]) -> &'a Basket {
        &seqs[self.sequence].baskets[self.target]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Index of the validation target for a sequence of `len` baskets.
fn val_target(len: usize) -> Option<usize> {
    (len >= 3).then(|| len - 2)
}

/// Leave-last-out test, leave-second-to-last-out validation, and every
/// earlier prefix as a training sample.
pub fn split_dataset(sequences: &[BasketSequence]) -> DatasetSplit {
    let mut split = DatasetSplit::default();
    for (s, seq) in sequences.iter().enumerate() {
        let n = seq.baskets.len();
        debug_assert!(n >= 2);
        split.test.push(Sample { sequence: s, target: n - 1 });
        if let Some(v) = val_target(n) {
            split.val.push(Sample { sequence: s, target: v });
            split.train.extend((1..v).map(|t| Sample { sequence: s, target: t }));
        }
    }
    split
}

/// Baskets that are never a validation or test target.
pub fn training_baskets(sequences: &[BasketSequence]) -> Vec<&Basket> {
    sequences
        .iter()
        .flat_map(|seq| {
            let n = seq.baskets.len();
            let end = val_target(n).unwrap_or(n - 1);
            seq.baskets[..end].iter()
        })
        .collect()
}

/// Preprocessing filters applied between loading and coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub grouping: Grouping,
    pub price_levels: usize,
    /// Items occurring in fewer records are removed before coding.
    pub min_item_count: usize,
    /// Keep only each user's most recent baskets (0 = unlimited).
    pub max_baskets_per_user: usize,
    /// Sample this many users uniformly (0 = all).
    pub sample_users: usize,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            grouping: Grouping::Day,
            price_levels: 10,
            min_item_count: 1,
            max_baskets_per_user: 0,
            sample_users: 0,
            seed: 42,
        }
    }
}

impl PreprocessConfig {
    /// Filters tuned to land near the published Dunnhumby statistics.
    pub fn dunnhumby() -> Self {
        PreprocessConfig {
            grouping: Grouping::BasketKey,
            min_item_count: 50,
            max_baskets_per_user: 10,
            ..Self::default()
        }
    }

    /// Day baskets over a 10k-user sample.
    pub fn valuedshopper() -> Self {
        PreprocessConfig {
            grouping: Grouping::Day,
            min_item_count: 20,
            max_baskets_per_user: 10,
            sample_users: 10_000,
            ..Self::default()
        }
    }
}

/// A coded dataset ready for training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub sequences: Vec<BasketSequence>,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub price_levels: usize,
    pub categories: usize,
    pub baskets: usize,
    pub avg_items_per_basket: f64,
}

pub fn preprocess(records: Vec<TransactionRecord>, cfg: &PreprocessConfig) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut records = records;
    if cfg.sample_users > 0 {
        let mut users: Vec<&str> = records.iter().map(|r| r.user_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        if users.len() > cfg.sample_users {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            users.shuffle(&mut rng);
            let keep: BTreeSet<String> = users[..cfg.sample_users].iter().map(|u| u.to_string()).collect();
            records.retain(|r| keep.contains(&r.user_id));
        }
    }
    if cfg.min_item_count > 1 {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *counts.entry(&r.item_id).or_default() += 1;
        }
        let keep: BTreeSet<String> = counts
            .into_iter()
            .filter(|&(_, n)| n >= cfg.min_item_count)
            .map(|(i, _)| i.to_string())
            .collect();
        records.retain(|r| keep.contains(&r.item_id));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }

    // Basket the full filtered log first so truncation and the minimum-length
    // rule decide who survives, then code only the survivors.
    let prices = discretize_prices(&records, cfg.price_levels)?;
    let vocab = build_vocabulary(&records, &prices, cfg.price_levels)?;
    let mut sequences = build_baskets(&records, cfg.grouping, &vocab)?;
    if cfg.max_baskets_per_user > 0 {
        for seq in &mut sequences {
            let n = seq.baskets.len();
            if n > cfg.max_baskets_per_user {
                seq.baskets.drain(..n - cfg.max_baskets_per_user);
            }
        }
    }

    let kept_users: BTreeSet<usize> = sequences.iter().map(|s| s.user).collect();
    let kept_items: BTreeSet<usize> = sequences
        .iter()
        .flat_map(|s| s.baskets.iter().flat_map(|b| b.items.iter().map(|i| i.item)))
        .collect();
    let kept_user_ids: BTreeSet<&str> = kept_users.iter().map(|&u| vocab.users[u].as_str()).collect();
    let kept_item_ids: BTreeSet<&str> = kept_items.iter().map(|&i| vocab.items[i].id.as_str()).collect();
    let survivors: Vec<TransactionRecord> = records
        .iter()
        .filter(|r| kept_user_ids.contains(r.user_id.as_str()) && kept_item_ids.contains(r.item_id.as_str()))
        .cloned()
        .collect();
    let prices: BTreeMap<String, PriceAssignment> =
        prices.into_iter().filter(|(k, _)| kept_item_ids.contains(k.as_str())).collect();
    let vocab = build_vocabulary(&survivors, &prices, cfg.price_levels)?;
    let mut sequences = build_baskets(&survivors, cfg.grouping, &vocab)?;
    if cfg.max_baskets_per_user > 0 {
        for seq in &mut sequences {
            let n = seq.baskets.len();
            if n > cfg.max_baskets_per_user {
                seq.baskets.drain(..n - cfg.max_baskets_per_user);
            }
            for (i, b) in seq.baskets.iter_mut().enumerate() {
                b.seq_index = i;
            }
        }
    }
    let config_hash = crate::util::hash_hex(serde_json::to_string(cfg).unwrap().as_bytes());
    Ok(Dataset { vocab, sequences, config_hash, seed: cfg.seed })
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl Dataset {
    pub fn split(&self) -> DatasetSplit {
        split_dataset(&self.sequences)
    }

    pub fn stats(&self) -> DatasetStats {
        let baskets: usize = self.sequences.iter().map(|s| s.baskets.len()).sum();
        let lines: usize = self.sequences.iter().flat_map(|s| &s.baskets).map(|b| b.items.len()).sum();
        DatasetStats {
            users: self.sequences.len(),
            items: self.vocab.n_items(),
            price_levels: self.vocab.n_price_levels,
            categories: self.vocab.n_categories(),
            baskets,
            avg_items_per_basket: if baskets == 0 { 0.0 } else { lines as f64 / baskets as f64 },
        }
    }

    /// Serializes to the versioned text format:
    ///
    /// ```text
    /// #bdhh-dataset\t1
    /// config_hash\t<hex>
    /// seed\t<u64>
    /// price_levels\t<k>
    /// categories\t<n>      then n lines: <label>
    /// items\t<n>           then n lines: <id>\t<price level>\t<category code>
    /// users\t<n>           then n lines: <id>
    /// sequences\t<n>       then n lines: <user>\t<val target|->\t<test target>\t<basket>(|<basket>)*
    /// ```
    ///
    /// where a basket is `<day>:<item>,<item>,...`. Identifiers escape `\`,
    /// tab and newlines with a backslash.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let v = &self.vocab;
        writeln!(out, "{DATASET_MAGIC}\t{DATASET_VERSION}").unwrap();
        writeln!(out, "config_hash\t{}", self.config_hash).unwrap();
        writeln!(out, "seed\t{}", self.seed).unwrap();
        writeln!(out, "price_levels\t{}", v.n_price_levels).unwrap();
        writeln!(out, "categories\t{}", v.categories.len()).unwrap();
        for c in &v.categories {
            writeln!(out, "{}", escape(c)).unwrap();
        }
        writeln!(out, "items\t{}", v.items.len()).unwrap();
        for it in &v.items {
            writeln!(out, "{}\t{}\t{}", escape(&it.id), it.price_level, it.category).unwrap();
        }
        writeln!(out, "users\t{}", v.users.len()).unwrap();
        for u in &v.users {
            writeln!(out, "{}", escape(u)).unwrap();
        }
        writeln!(out, "sequences\t{}", self.sequences.len()).unwrap();
        for seq in &self.sequences {
            let n = seq.baskets.len();
            let val = val_target(n).map_or("-".to_string(), |t| t.to_string());
            let baskets: Vec<String> = seq
                .baskets
                .iter()
                .map(|b| {
                    let items: Vec<String> = b.items.iter().map(|i| i.item.to_string()).collect();
                    format!("{}:{}", b.day, items.join(","))
                })
                .collect();
            writeln!(out, "{}\t{}\t{}\t{}", seq.user, val, n - 1, baskets.join("|")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Dataset> {
        let bad = |reason: String| Error::Format { what: "dataset file", reason };
        let mut lines = text.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| bad(format!("unexpected end of file, expected {expect}")))
        };
        let header = |line: (usize, &str), key: &str| -> Result<String> {
            let (no, l) = line;
            let (k, v) = l.split_once('\t').ok_or_else(|| bad(format!("line {}: expected `{key}`", no + 1)))?;
            if k != key {
                return Err(bad(format!("line {}: expected `{key}`, found `{k}`", no + 1)));
            }
            Ok(v.to_string())
        };
        let num = |s: &str, no: usize| -> Result<usize> {
            s.parse::<usize>().map_err(|e| bad(format!("line {}: `{s}`: {e}", no + 1)))
        };

        let version = header(next("magic")?, DATASET_MAGIC)?;
        if version != DATASET_VERSION.to_string() {
            return Err(bad(format!("unsupported version {version}")));
        }
        let config_hash = header(next("config_hash")?, "config_hash")?;
        let seed_line = next("seed")?;
        let seed: u64 = header(seed_line, "seed")?.parse().map_err(|e| bad(format!("seed: {e}")))?;
        let l = next("price_levels")?;
        let n_price_levels = num(&header(l, "price_levels")?, l.0)?;

        let l = next("categories")?;
        let n = num(&header(l, "categories")?, l.0)?;
        let mut categories = Vec::with_capacity(n);
        for _ in 0..n {
            categories.push(unescape(next("category")?.1));
        }
        let l = next("items")?;
        let n = num(&header(l, "items")?, l.0)?;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, l) = next("item")?;
            let parts: Vec<&str> = l.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(format!("line {}: item needs 3 fields", no + 1)));
            }
            items.push(ItemInfo { id: unescape(parts[0]), price_level: num(parts[1], no)?, category: num(parts[2], no)? });
        }
        let l = next("users")?;
        let n = num(&header(l, "users")?, l.0)?;
        let mut users = Vec::with_capacity(n);
        for _ in 0..n {
            users.push(unescape(next("user")?.1));
        }
        let vocab = Vocabulary::new(users, items, categories, n_price_levels)?;

        let l = next("sequences")?;
        let n = num(&header(l, "sequences")?, l.0)?;
        let mut sequences = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, l) = next("sequence")?;
            let parts: Vec<&str> = l.split('\t').collect();
            if parts.len() != 4 {
                return Err(bad(format!("line {}: sequence needs 4 fields", no + 1)));
            }
            let user = num(parts[0], no)?;
            if user >= vocab.n_users() {
                return Err(bad(format!("line {}: user code {user} out of range", no + 1)));
            }
            let mut baskets = Vec::new();
            for (seq_index, b) in parts[3].split('|').enumerate() {
                let (day, items) = b.split_once(':').ok_or_else(|| bad(format!("line {}: basket `{b}`", no + 1)))?;
                let day: u32 = day.parse().map_err(|e| bad(format!("line {}: day: {e}", no + 1)))?;
                let mut refs = Vec::new();
                for code in items.split(',') {
                    let c = num(code, no)?;
                    if c >= vocab.n_items() {
                        return Err(bad(format!("line {}: item code {c} out of range", no + 1)));
                    }
                    refs.push(vocab.item_ref(c));
                }
                if refs.is_empty() {
                    return Err(bad(format!("line {}: empty basket", no + 1)));
                }
                baskets.push(Basket { user, seq_index, day, items: refs });
            }
            let len = baskets.len();
            if len < 2 {
                return Err(bad(format!("line {}: sequence shorter than 2 baskets", no + 1)));
            }
            let val = val_target(len).map_or("-".to_string(), |t| t.to_string());
            if parts[1] != val || parts[2] != (len - 1).to_string() {
                return Err(bad(format!("line {}: split assignment disagrees with sequence length", no + 1)));
            }
            sequences.push(BasketSequence { user, baskets });
        }
        if let Some((no, extra)) = lines.next() {
            if !extra.is_empty() {
                return Err(bad(format!("line {}: trailing content", no + 1)));
            }
        }
        Ok(Dataset { vocab, sequences, config_hash, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Dataset::from_text(&std::fs::read_to_string(path)?)
    }
}
