//! Dual-layer graph index.
//!
//! The upper layer links one representative trajectory per grid cell to
//! similar, random and dissimilar peers. The lower layer links every
//! trajectory to its most similar spatial neighbors plus a few random
//! ones. Edges are directed and similarity between data trajectories is
//! the [`dtsm`](crate::dtsm) score.

mod cndi;
mod gari;
mod io;

use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{arg, Result};
use crate::model::{TrajId, TrajectoryStore};
use crate::spatial::{dataset_bounds, Grid, RTree};

pub use cndi::{build_cndi, candidates, choose, Candidates, CndiGraph};
pub use gari::{build_gari, partition_tertiles, GariGraph};
pub use io::{load_index, save_index, FORMAT_VERSION, MAGIC};

/// Why an edge was selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    Similar,
    Random,
    Dissimilar,
}

impl EdgeTag {
    fn code(self) -> u8 {
        match self {
            EdgeTag::Similar => 0,
            EdgeTag::Random => 1,
            EdgeTag::Dissimilar => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(EdgeTag::Similar),
            1 => Some(EdgeTag::Random),
            2 => Some(EdgeTag::Dissimilar),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeTag::Similar => "similar",
            EdgeTag::Random => "random",
            EdgeTag::Dissimilar => "dissimilar",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub to: TrajId,
    pub tag: EdgeTag,
}

/// Out-neighbor lookup shared by both layers.
pub trait Adjacency {
    /// `None` when `id` is not a node of this graph.
    fn out(&self, id: TrajId) -> Option<&[Edge]>;
}

/// Both layers plus everything needed to check them against a store.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexBundle {
    pub config: Config,
    pub grid: Grid,
    pub gari: GariGraph,
    pub cndi: CndiGraph,
    /// Trajectory count of the store the index was built over.
    pub store_len: u32,
    /// [`TrajectoryStore::fingerprint`] of that store.
    pub store_crc: u32,
}

impl IndexBundle {
    /// Fails with a load error when `store` is not the one the index was
    /// built from.
    pub fn verify_store(&self, store: &TrajectoryStore) -> Result<()> {
        if store.len() != self.store_len as usize || store.fingerprint() != self.store_crc {
            return Err(crate::error::LoadError::StoreMismatch.into());
        }
        Ok(())
    }

    /// Every structural invariant of both layers; the first violation is
    /// reported.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        self.gari.check_invariants(&self.config, self.store_len as usize)?;
        self.cndi.check_invariants(&self.config)?;
        if self.cndi.len() != self.store_len as usize {
            return Err(format!("lower layer has {} nodes for a store of {}", self.cndi.len(), self.store_len));
        }
        Ok(())
    }
}

/// Wall time of each build phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BuildTimings {
    /// Grid and R-tree.
    pub spatial: Duration,
    pub gari: Duration,
    pub cndi: Duration,
}

/// Builds both layers over `store`.
pub fn build_index(store: &TrajectoryStore, cfg: &Config) -> Result<IndexBundle> {
    build_index_timed(store, cfg).map(|(b, _)| b)
}

pub fn build_index_timed(store: &TrajectoryStore, cfg: &Config) -> Result<(IndexBundle, BuildTimings)> {
    cfg.validate()?;
    if store.is_empty() {
        return arg("cannot index an empty store");
    }
    let t0 = Instant::now();
    let grid = Grid::new(dataset_bounds(store)?, cfg.grid_m)?;
    let rtree = RTree::from_store(store);
    let t1 = Instant::now();
    let gari = gari::build_with(store, &grid, &rtree, cfg)?;
    let t2 = Instant::now();
    let cndi = build_cndi(store, &rtree, cfg)?;
    let timings = BuildTimings { spatial: t1 - t0, gari: t2 - t1, cndi: t2.elapsed() };
    let bundle =
        IndexBundle { config: cfg.clone(), grid, gari, cndi, store_len: store.len() as u32, store_crc: store.fingerprint() };
    Ok((bundle, timings))
}

const STREAM_GARI: u64 = 1 << 40;
const STREAM_CNDI: u64 = 2 << 40;

/// Per-node generator, independent of build order and thread count.
fn node_rng(seed: u64, stream: u64, id: TrajId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream | u64::from(id.0));
    rng
}

/// `(φ desc, id asc)`.
fn by_score_desc(a: &(u32, TrajId), b: &(u32, TrajId)) -> std::cmp::Ordering {
    b.0.cmp(&a.0).then(a.1.cmp(&b.1))
}
