//! Price-aware next-basket recommendation over a heterogeneous hypergraph of
//! item IDs, categories and price levels, with basket-guided embedding
//! augmentation and two user-behavior channels.
//!
//! The pipeline runs [`dataio`] → [`hypergraph`] → [`encoder`] →
//! [`augmentation`] → [`behavior`] → [`objective`], and [`metrics`] ranks the
//! result. [`cli`] wires the stages into reproducible commands.

pub mod augmentation;
pub mod behavior;
pub mod checkpoint;
pub mod cli;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod hypergraph;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod params;
pub mod synthetic;
pub mod tape;
pub mod util;

pub use error::{Error, Result};
