use std::collections::HashSet;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{by_score_desc, node_rng, Adjacency, Edge, EdgeTag, STREAM_CNDI};
use crate::config::{cndi_quotas, Config};
use crate::dtsm::dtsm_score;
use crate::error::{arg, Result};
use crate::model::{TrajId, TrajectoryStore};
use crate::spatial::{compute_mbr, RTree};

/// Lower layer: every trajectory with its tagged out-edges, indexed by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CndiGraph {
    adj: Vec<Vec<Edge>>,
}

impl CndiGraph {
    pub(crate) fn from_adjacency(adj: Vec<Vec<Edge>>) -> Self {
        CndiGraph { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn neighbors(&self, id: TrajId) -> &[Edge] {
        &self.adj[id.index()]
    }

    pub(crate) fn adjacency(&self) -> &[Vec<Edge>] {
        &self.adj
    }

    pub fn check_invariants(&self, cfg: &Config) -> std::result::Result<(), String> {
        let n = self.adj.len();
        let xi = cfg.xi.min(n.saturating_sub(1));
        let (want_similar, _) = cndi_quotas(xi, cfg.effective_delta());
        for (i, edges) in self.adj.iter().enumerate() {
            if edges.len() != xi {
                return Err(format!("node {i} has {} edges, expected {xi}", edges.len()));
            }
            let similar = edges.iter().filter(|e| e.tag == EdgeTag::Similar).count();
            if similar != want_similar {
                return Err(format!("node {i} has {similar} similar edges, expected {want_similar}"));
            }
            let mut seen = HashSet::new();
            for e in edges {
                if e.to.index() == i {
                    return Err(format!("self-loop on {i}"));
                }
                if e.to.index() >= n {
                    return Err(format!("edge {i} -> {} leaves the graph", e.to));
                }
                if e.tag == EdgeTag::Dissimilar {
                    return Err(format!("edge {i} -> {} has an upper-layer tag", e.to));
                }
                if !seen.insert(e.to) {
                    return Err(format!("duplicate edge {i} -> {}", e.to));
                }
            }
        }
        Ok(())
    }
}

impl Adjacency for CndiGraph {
    fn out(&self, id: TrajId) -> Option<&[Edge]> {
        self.adj.get(id.index()).map(Vec::as_slice)
    }
}

/// Candidate pools of one node, each sorted by `(φ desc, id asc)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    pub near: Vec<(u32, TrajId)>,
    pub random: Vec<(u32, TrajId)>,
}

pub fn build_cndi(store: &TrajectoryStore, rtree: &RTree, cfg: &Config) -> Result<CndiGraph> {
    if store.len() < 2 {
        return arg("the lower layer needs at least two trajectories");
    }
    let n = store.len();
    let xi = cfg.xi.min(n - 1);
    let quotas = cndi_quotas(xi, cfg.effective_delta());
    let adj = (0..n as u32)
        .into_par_iter()
        .map(|i| {
            let c = candidates(store, rtree, cfg, TrajId(i))?;
            Ok(choose(&c, quotas))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CndiGraph { adj })
}

/// Spatial neighbors by MBR center plus a seeded uniform sample of the
/// rest, each scored against `id`.
pub fn candidates(store: &TrajectoryStore, rtree: &RTree, cfg: &Config, id: TrajId) -> Result<Candidates> {
    let n = store.len();
    let own = store.traj(id);
    let near_ids = rtree.nearest_k(&compute_mbr(own), cfg.kappa_n, Some(id));

    let mut excluded = vec![false; n];
    excluded[id.index()] = true;
    for t in &near_ids {
        excluded[t.index()] = true;
    }
    let pool: Vec<TrajId> = (0..n as u32).map(TrajId).filter(|t| !excluded[t.index()]).collect();
    let mut rng = node_rng(cfg.seed, STREAM_CNDI, id);
    let random_ids: Vec<TrajId> =
        sample(&mut rng, pool.len(), cfg.kappa_r.min(pool.len())).into_iter().map(|k| pool[k]).collect();

    let score = |ids: Vec<TrajId>| -> Result<Vec<(u32, TrajId)>> {
        let mut v = ids
            .into_iter()
            .map(|t| Ok((dtsm_score(own.points(), store.traj(t).points(), cfg.alpha, cfg.ground)?, t)))
            .collect::<Result<Vec<_>>>()?;
        v.sort_by(by_score_desc);
        Ok(v)
    };
    Ok(Candidates { near: score(near_ids)?, random: score(random_ids)? })
}

/// Top of the spatial pool for similar slots and top of the random pool for
/// random slots. A pool that runs dry is backfilled from the other pool's
/// leftovers; backfilled edges keep the tag of the slot they fill.
pub fn choose(c: &Candidates, (similar, random): (usize, usize)) -> Vec<Edge> {
    let take_near = similar.min(c.near.len());
    let take_random = random.min(c.random.len());
    let edge = |tag| move |&(_, to): &(u32, TrajId)| Edge { to, tag };

    let mut out: Vec<Edge> = c.near[..take_near].iter().map(edge(EdgeTag::Similar)).collect();
    out.extend(c.random[take_random..].iter().take(similar - take_near).map(edge(EdgeTag::Similar)));
    out.extend(c.random[..take_random].iter().map(edge(EdgeTag::Random)));
    out.extend(c.near[take_near..].iter().take(random - take_random).map(edge(EdgeTag::Random)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Trajectory;

    fn pair(s: u32, id: u32) -> (u32, TrajId) {
        (s, TrajId(id))
    }

    #[test]
    fn choose_fills_quotas_and_backfills() {
        let c = Candidates { near: vec![pair(9, 1), pair(5, 2), pair(1, 3)], random: vec![pair(4, 7), pair(0, 8)] };
        let got: Vec<(u32, EdgeTag)> = choose(&c, (2, 1)).iter().map(|e| (e.to.0, e.tag)).collect();
        assert_eq!(got, vec![(1, EdgeTag::Similar), (2, EdgeTag::Similar), (7, EdgeTag::Random)]);

        let got: Vec<(u32, EdgeTag)> = choose(&c, (4, 1)).iter().map(|e| (e.to.0, e.tag)).collect();
        assert_eq!(
            got,
            vec![
                (1, EdgeTag::Similar),
                (2, EdgeTag::Similar),
                (3, EdgeTag::Similar),
                (8, EdgeTag::Similar),
                (7, EdgeTag::Random)
            ]
        );

        let got: Vec<(u32, EdgeTag)> = choose(&c, (1, 4)).iter().map(|e| (e.to.0, e.tag)).collect();
        assert_eq!(
            got,
            vec![(1, EdgeTag::Similar), (7, EdgeTag::Random), (8, EdgeTag::Random), (2, EdgeTag::Random), (3, EdgeTag::Random)]
        );
    }

    #[test]
    fn two_trajectories_point_at_each_other() {
        let store = TrajectoryStore::from_trajectories([
            Trajectory::from_xy("a", &[(0.0, 0.0), (1.0, 0.0)]).unwrap(),
            Trajectory::from_xy("b", &[(5.0, 5.0), (6.0, 5.0)]).unwrap(),
        ])
        .unwrap();
        let cfg = Config::new(0.5);
        let g = build_cndi(&store, &RTree::from_store(&store), &cfg).unwrap();
        assert_eq!(g.neighbors(TrajId(0))[0].to, TrajId(1));
        assert_eq!(g.neighbors(TrajId(1))[0].to, TrajId(0));
        g.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn single_trajectory_is_rejected() {
        let store = TrajectoryStore::from_trajectories([Trajectory::from_xy("a", &[(0.0, 0.0), (1.0, 0.0)]).unwrap()]).unwrap();
        assert!(build_cndi(&store, &RTree::from_store(&store), &Config::new(1.0)).is_err());
    }
}
