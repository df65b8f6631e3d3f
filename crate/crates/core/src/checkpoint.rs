//! Binary checkpoint container.
//!
//! Layout: `BDHHCKPT`, format version (u32 LE), header length (u64 LE), a
//! JSON header, then every tensor's values as f64 LE in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{ItemInfo, Vocabulary};
use crate::error::{Error, Result};
use crate::hypergraph::HeteroHypergraph;
use crate::model::Model;
use crate::objective::HyperParams;
use crate::params::ParamStore;
use crate::tape::Mat;
use crate::util::hash_hex;

pub const MAGIC: &[u8; 8] = b"BDHHCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hp: HyperParams,
    pub config_hash: String,
    pub dataset_hash: String,
    pub best_epoch: usize,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    users: Vec<String>,
    categories: Vec<String>,
    n_price_levels: usize,
    /// `(id, price level, category)`
    items: Vec<(String, usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    hp: HyperParams,
    seed: u64,
    config_hash: String,
    dataset_hash: String,
    best_epoch: usize,
    vocab: VocabRecord,
    tensors: Vec<TensorMeta>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", reason: reason.into() }
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: &Vocabulary, config_hash: &str, dataset_hash: &str, best_epoch: usize) -> Self {
        Checkpoint {
            hp: model.hp.clone(),
            config_hash: config_hash.to_string(),
            dataset_hash: dataset_hash.to_string(),
            best_epoch,
            vocab: vocab.clone(),
            params: model.store.clone(),
        }
    }

    /// Rebuilds the model over `graph`, which must come from the same dataset.
    pub fn to_model(&self, graph: &HeteroHypergraph) -> Result<Model> {
        let mut model = Model::new(&self.hp, graph, self.vocab.item_price_levels())?;
        model.load_params(self.params.clone())?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let v = &self.vocab;
        let header = Header {
            hp: self.hp.clone(),
            seed: self.hp.seed,
            config_hash: self.config_hash.clone(),
            dataset_hash: self.dataset_hash.clone(),
            best_epoch: self.best_epoch,
            vocab: VocabRecord {
                users: v.users.clone(),
                categories: v.categories.clone(),
                n_price_levels: v.n_price_levels,
                items: v.items.iter().map(|i| (i.id.clone(), i.price_level, i.category)).collect(),
            },
            tensors: self
                .params
                .iter()
                .map(|(_, name, m)| TensorMeta { name: name.to_string(), rows: m.nrows(), cols: m.ncols() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(json.len() + 20 + 8 * self.params.n_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, m) in self.params.iter() {
            for x in m.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(e.to_string()))?;
        let mut data = &body[hlen..];
        let mut params = ParamStore::new();
        for t in &header.tensors {
            let n = t.rows * t.cols;
            if data.len() < 8 * n {
                return Err(bad(format!("truncated tensor {}", t.name)));
            }
            let values: Vec<f64> = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[8 * n..];
            params.add(t.name.clone(), Mat::from_shape_vec((t.rows, t.cols), values).expect("shape matches length"));
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let vr = header.vocab;
        let items = vr
            .items
            .into_iter()
            .map(|(id, price_level, category)| ItemInfo { id, price_level, category })
            .collect();
        let vocab = Vocabulary::new(vr.users, items, vr.categories, vr.n_price_levels)?;
        let mut hp = header.hp;
        hp.seed = header.seed;
        Ok(Checkpoint {
            hp,
            config_hash: header.config_hash,
            dataset_hash: header.dataset_hash,
            best_epoch: header.best_epoch,
            vocab,
            params,
        })
    }

    /// Short content hash identifying this checkpoint.
    pub fn id(&self) -> String {
        hash_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
