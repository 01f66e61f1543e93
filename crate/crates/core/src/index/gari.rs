use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{by_score_desc, node_rng, Adjacency, Edge, EdgeTag, STREAM_GARI};
use crate::config::Config;
use crate::dtsm::dtsm_score;
use crate::error::{arg, Result};
use crate::model::{TrajId, TrajectoryStore};
use crate::spatial::{cell_representative, dataset_bounds, Grid, RTree};

/// Upper layer: grid representatives and their tagged out-edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GariGraph {
    nodes: Vec<TrajId>,
    adj: Vec<Vec<Edge>>,
    slot: BTreeMap<TrajId, usize>,
}

impl GariGraph {
    pub(crate) fn from_parts(nodes: Vec<TrajId>, adj: Vec<Vec<Edge>>) -> Self {
        let slot = nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        GariGraph { nodes, adj, slot }
    }

    /// Representatives in grid cell order.
    pub fn nodes(&self) -> &[TrajId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: TrajId) -> bool {
        self.slot.contains_key(&id)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub(crate) fn adjacency(&self) -> &[Vec<Edge>] {
        &self.adj
    }

    pub fn check_invariants(&self, cfg: &Config, store_len: usize) -> std::result::Result<(), String> {
        let cap = cfg.grid_m * cfg.grid_m;
        if self.nodes.len() > cap {
            return Err(format!("upper layer has {} nodes, more than {cap} cells", self.nodes.len()));
        }
        if self.slot.len() != self.nodes.len() {
            return Err("duplicate upper-layer node".into());
        }
        let want = cfg.gari_counts.total().min(self.nodes.len().saturating_sub(1));
        for (&id, edges) in self.nodes.iter().zip(&self.adj) {
            if id.index() >= store_len {
                return Err(format!("node {id} is not in the store"));
            }
            if edges.len() != want {
                return Err(format!("node {id} has {} edges, expected {want}", edges.len()));
            }
            let mut seen = HashSet::new();
            for e in edges {
                if e.to == id {
                    return Err(format!("self-loop on {id}"));
                }
                if !self.contains(e.to) {
                    return Err(format!("edge {id} -> {} leaves the upper layer", e.to));
                }
                if !seen.insert(e.to) {
                    return Err(format!("duplicate edge {id} -> {}", e.to));
                }
            }
        }
        Ok(())
    }
}

impl Adjacency for GariGraph {
    fn out(&self, id: TrajId) -> Option<&[Edge]> {
        self.slot.get(&id).map(|&i| self.adj[i].as_slice())
    }
}

/// Splits peers sorted best-first into top, middle and bottom thirds. The
/// remainder goes to the top third first, then the middle.
pub fn partition_tertiles<T>(sorted: &[T]) -> (&[T], &[T], &[T]) {
    let n = sorted.len();
    let base = n / 3;
    let r = n % 3;
    let a = base + usize::from(r > 0);
    let b = base + usize::from(r > 1);
    (&sorted[..a], &sorted[a..a + b], &sorted[a + b..])
}

pub fn build_gari(store: &TrajectoryStore, cfg: &Config) -> Result<GariGraph> {
    if store.is_empty() {
        return arg("cannot index an empty store");
    }
    let grid = Grid::new(dataset_bounds(store)?, cfg.grid_m)?;
    build_with(store, &grid, &RTree::from_store(store), cfg)
}

pub(super) fn build_with(store: &TrajectoryStore, grid: &Grid, rtree: &RTree, cfg: &Config) -> Result<GariGraph> {
    let nodes: Vec<TrajId> = grid.cells().filter_map(|c| cell_representative(grid, rtree, c)).collect();
    let n = nodes.len();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let scores = pairs
        .par_iter()
        .map(|&(i, j)| dtsm_score(store.traj(nodes[i]).points(), store.traj(nodes[j]).points(), cfg.alpha, cfg.ground))
        .collect::<Result<Vec<u32>>>()?;
    let mut phi = vec![0u32; n * n];
    for (&(i, j), s) in pairs.iter().zip(scores) {
        phi[i * n + j] = s;
    }

    let adj = (0..n)
        .map(|i| {
            let mut peers: Vec<(u32, TrajId)> = (0..n).filter(|&j| j != i).map(|j| (phi[i * n + j], nodes[j])).collect();
            peers.sort_by(by_score_desc);
            select(&peers, nodes[i], cfg)
        })
        .collect();
    Ok(GariGraph::from_parts(nodes, adj))
}

fn select(peers: &[(u32, TrajId)], node: TrajId, cfg: &Config) -> Vec<Edge> {
    let counts = cfg.gari_counts;
    let mut rng = node_rng(cfg.seed, STREAM_GARI, node);
    let (top, mid, bottom) = partition_tertiles(peers);
    let mut taken = vec![false; peers.len()];
    let mid_off = top.len();
    let bottom_off = top.len() + mid.len();

    let mut similar: Vec<usize> = (0..top.len().min(counts.similar)).collect();
    let mut random: Vec<usize> =
        sample(&mut rng, mid.len(), counts.random.min(mid.len())).into_iter().map(|i| mid_off + i).collect();
    let mut dissimilar: Vec<usize> = (0..bottom.len().min(counts.dissimilar)).map(|i| peers.len() - 1 - i).collect();
    debug_assert!(dissimilar.iter().all(|&i| i >= bottom_off));
    for &i in similar.iter().chain(&random).chain(&dissimilar) {
        taken[i] = true;
    }

    // Short tertiles are topped up from whatever is left, in the spirit of
    // each slot: best first, worst first, then uniformly.
    while similar.len() < counts.similar {
        let Some(i) = (0..peers.len()).find(|&i| !taken[i]) else { break };
        taken[i] = true;
        similar.push(i);
    }
    while dissimilar.len() < counts.dissimilar {
        let Some(i) = (0..peers.len()).rev().find(|&i| !taken[i]) else { break };
        taken[i] = true;
        dissimilar.push(i);
    }
    if random.len() < counts.random {
        let rest: Vec<usize> = (0..peers.len()).filter(|&i| !taken[i]).collect();
        let extra = (counts.random - random.len()).min(rest.len());
        random.extend(sample(&mut rng, rest.len(), extra).into_iter().map(|k| rest[k]));
    }

    let edge = |tag| move |&i: &usize| Edge { to: peers[i].1, tag };
    similar
        .iter()
        .map(edge(EdgeTag::Similar))
        .chain(random.iter().map(edge(EdgeTag::Random)))
        .chain(dissimilar.iter().map(edge(EdgeTag::Dissimilar)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GariCounts;
    use crate::model::Trajectory;

    #[test]
    fn tertiles_put_remainder_on_top() {
        let v: Vec<u32> = (0..7).collect();
        let (a, b, c) = partition_tertiles(&v);
        assert_eq!((a.len(), b.len(), c.len()), (3, 2, 2));
        let v: Vec<u32> = (0..2).collect();
        let (a, b, c) = partition_tertiles(&v);
        assert_eq!((a, b, c.len()), (&[0][..], &[1][..], 0));
    }

    #[test]
    fn single_representative_has_no_edges() {
        let store = TrajectoryStore::from_trajectories([Trajectory::from_xy("a", &[(0.0, 0.0), (1.0, 1.0)]).unwrap()]).unwrap();
        let g = build_gari(&store, &Config::new(0.5)).unwrap();
        assert_eq!(g.nodes(), &[TrajId(0)]);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn three_nodes_link_best_and_worst() {
        // Three trajectories in separate cells of a 2x2 grid. Pairs overlap
        // by different amounts, so each node has a distinct best and worst.
        let a = Trajectory::from_xy("a", &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]).unwrap();
        let b = Trajectory::from_xy("b", &[(2.0, 0.0), (3.0, 0.0), (5.0, 0.0), (8.0, 0.0)]).unwrap();
        let c = Trajectory::from_xy("c", &[(8.0, 0.0), (8.5, 10.0), (9.0, 10.0)]).unwrap();
        let store = TrajectoryStore::from_trajectories([a, b, c]).unwrap();
        let mut cfg = Config::new(0.1);
        cfg.grid_m = 2;
        cfg.gari_counts = GariCounts { similar: 1, random: 0, dissimilar: 1 };
        let g = build_gari(&store, &cfg).unwrap();
        assert_eq!(g.len(), 3);
        g.check_invariants(&cfg, 3).unwrap();

        let phi = |x: usize, y: usize| {
            crate::dtsm::dtsm_oracle(
                store.traj(TrajId(x as u32)).points(),
                store.traj(TrajId(y as u32)).points(),
                0.1,
                cfg.ground,
            )
            .unwrap()
            .score
        };
        assert_eq!((phi(0, 1), phi(1, 2), phi(0, 2)), (4, 2, 0));
        let out = |id: u32| -> Vec<(u32, EdgeTag)> { g.out(TrajId(id)).unwrap().iter().map(|e| (e.to.0, e.tag)).collect() };
        assert_eq!(out(0), vec![(1, EdgeTag::Similar), (2, EdgeTag::Dissimilar)]);
        assert_eq!(out(1), vec![(0, EdgeTag::Similar), (2, EdgeTag::Dissimilar)]);
        assert_eq!(out(2), vec![(1, EdgeTag::Similar), (0, EdgeTag::Dissimilar)]);
    }
}
