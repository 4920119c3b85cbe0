//! Geospatial embeddings with a mobility-graph backbone.
//!
//! The pipeline tokenizes coordinates into hexagonal grid cells, builds a
//! weighted co-visitation graph from event logs, pre-encodes it with
//! second-order LINE, propagates a learnable node table with LightGCN over a
//! top-k sampled subgraph, aligns the result with text / image / demographic
//! features under a symmetric InfoNCE objective, and evaluates the frozen
//! embeddings with ridge probes. A SIREN-featured MLP surrogate distills the
//! cell embeddings into a coordinate-queryable network.
//!
//! Modules map one-to-one onto pipeline stages; everything is deterministic
//! given the seeds carried in each stage's config.

pub mod alias;
pub mod align;
pub mod distill;
pub mod embed;
pub mod error;
pub mod graph;
pub mod hexgrid;
pub mod io;
pub mod lightgcn;
pub mod line;
pub mod nn;
pub mod probe;
pub mod rng;
pub mod synth;

pub use embed::EmbeddingTable;
pub use error::{Error, Result};
pub use graph::MobilityGraph;
pub use hexgrid::{CellId, GeoCoord, GridConfig};

use std::sync::atomic::{AtomicBool, Ordering};

static SINGLE_THREAD: AtomicBool = AtomicBool::new(false);

/// Force single-threaded execution of the dense kernels.
///
/// All code paths are bitwise deterministic either way; this exists so a
/// `--deterministic` run has no threading at all.
pub fn set_single_thread(on: bool) {
    if on {
        // matrixmultiply reads this once, at first use.
        std::env::set_var("MATMUL_NUM_THREADS", "1");
    }
    SINGLE_THREAD.store(on, Ordering::SeqCst);
}

pub fn single_thread() -> bool {
    SINGLE_THREAD.load(Ordering::SeqCst)
}
