//! Online top-k search: climb the upper layer to an entry point, climb the
//! lower layer from there, then answer from every trajectory scored on the
//! way.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{arg, Error, Result};
use crate::index::{Adjacency, IndexBundle};
use crate::model::{Point, SubtrajRef, TrajId, TrajectoryStore};
use crate::similarity::{BoundScorer, RepScore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Timings {
    pub upper: Duration,
    pub lower: Duration,
    pub top_up: Duration,
    pub total: Duration,
}

/// Everything scored during one query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchRecord {
    pub visited: BTreeMap<TrajId, RepScore>,
    pub hops_gari: usize,
    pub hops_cndi: usize,
    /// Start of the upper-layer climb, or of the lower-layer climb when the
    /// upper layer is skipped.
    pub entry: Option<TrajId>,
    /// Where the lower-layer climb stopped.
    pub last: Option<TrajId>,
    pub timings: Timings,
}

impl SearchRecord {
    pub fn len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }

    pub fn score_of(&self, id: TrajId) -> Option<f64> {
        self.visited.get(&id).map(|r| r.score)
    }

    /// Scores every id not yet recorded, in parallel, and records them.
    fn score_all(&mut self, ids: &[TrajId], query: &[Point], store: &TrajectoryStore, scorer: &BoundScorer) -> Result<()> {
        let todo: Vec<TrajId> = ids.iter().copied().filter(|id| !self.visited.contains_key(id)).collect();
        let scored = todo.par_iter().map(|&id| scorer.score(query, store.get(id)?.points(), id)).collect::<Result<Vec<_>>>()?;
        for (id, s) in todo.into_iter().zip(scored) {
            self.visited.insert(id, s);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    /// Best representative subtrajectory per trajectory, scores descending.
    pub topk: Vec<SubtrajRef>,
    pub record: SearchRecord,
}

/// Greedy ascent: move to the best-scoring out-neighbor while it strictly
/// beats the current node. Ties between neighbors go to the smaller id.
/// Returns the node where the climb stopped and the number of moves.
pub fn climb(
    graph: &impl Adjacency,
    start: TrajId,
    query: &[Point],
    store: &TrajectoryStore,
    scorer: &BoundScorer,
    record: &mut SearchRecord,
) -> Result<(TrajId, usize)> {
    if graph.out(start).is_none() {
        return arg(format!("climb start {start} is not a graph node"));
    }
    record.score_all(&[start], query, store, scorer)?;
    let mut cur = start;
    let mut hops = 0;
    loop {
        let out: Vec<TrajId> = graph.out(cur).unwrap_or_default().iter().map(|e| e.to).collect();
        record.score_all(&out, query, store, scorer)?;
        let here = record.visited[&cur].score;
        let best = out.iter().map(|&id| (record.visited[&id].score, id)).max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        match best {
            Some((s, id)) if s > here => {
                cur = id;
                hops += 1;
            }
            _ => return Ok((cur, hops)),
        }
    }
}

/// Seeded per-query generator; depends on the query itself, not on its
/// position in a batch.
fn query_rng(seed: u64, query: &[Point]) -> ChaCha8Rng {
    let mut h = crc32fast::Hasher::new();
    for p in query {
        h.update(&p.lon.to_le_bytes());
        h.update(&p.lat.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(h.finalize()));
    rng
}

/// Descending score, then ascending id.
fn ranked(entries: impl IntoIterator<Item = (TrajId, RepScore)>, k: usize) -> Vec<SubtrajRef> {
    let mut v: Vec<(TrajId, RepScore)> = entries.into_iter().collect();
    v.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(_, r)| SubtrajRef { score: Some(r.score), ..r.best }).collect()
}

pub fn query_topk(
    query: &[Point],
    index: &IndexBundle,
    store: &TrajectoryStore,
    cfg: &Config,
    scorer: &BoundScorer,
) -> Result<QueryResult> {
    let t0 = Instant::now();
    let n = store.len();
    if query.is_empty() {
        return arg("empty query");
    }
    if index.cndi.is_empty() || n == 0 {
        return Err(Error::State("empty index".into()));
    }
    if index.cndi.len() != n {
        return Err(Error::State(format!("index covers {} trajectories, store has {n}", index.cndi.len())));
    }
    if cfg.k > n {
        return arg(format!("k = {} exceeds the {n} stored trajectories", cfg.k));
    }

    let mut rng = query_rng(cfg.seed, query);
    let mut record = SearchRecord::default();

    let lower_start = if cfg.ablation.no_gari || index.gari.is_empty() {
        let s = TrajId(rng.gen_range(0..n as u32));
        record.entry = Some(s);
        s
    } else {
        let nodes = index.gari.nodes();
        let s = nodes[rng.gen_range(0..nodes.len())];
        record.entry = Some(s);
        let (end, hops) = climb(&index.gari, s, query, store, scorer, &mut record)?;
        record.hops_gari = hops;
        end
    };
    let t1 = Instant::now();

    let (last, hops) = climb(&index.cndi, lower_start, query, store, scorer, &mut record)?;
    record.hops_cndi = hops;
    record.last = Some(last);
    let t2 = Instant::now();

    let topk = if cfg.ablation.no_record {
        let local: Vec<TrajId> = std::iter::once(last).chain(index.cndi.neighbors(last).iter().map(|e| e.to)).collect();
        ranked(local.iter().map(|id| (*id, record.visited[id])), cfg.k)
    } else {
        let floor = cfg.k.max(cfg.min_candidates()).min(n);
        top_up(index, last, floor, query, store, scorer, &mut record)?;
        ranked(record.visited.iter().map(|(&id, &r)| (id, r)), cfg.k)
    };
    let t3 = Instant::now();
    record.timings = Timings { upper: t1 - t0, lower: t2 - t1, top_up: t3 - t2, total: t3 - t0 };
    Ok(QueryResult { topk, record })
}

/// Breadth-first expansion over the lower layer from `from`, scoring
/// unrecorded neighbors until `floor` trajectories are recorded or the
/// reachable set is exhausted.
fn top_up(
    index: &IndexBundle,
    from: TrajId,
    floor: usize,
    query: &[Point],
    store: &TrajectoryStore,
    scorer: &BoundScorer,
    record: &mut SearchRecord,
) -> Result<()> {
    let mut queue = VecDeque::from([from]);
    let mut expanded = HashSet::from([from]);
    while record.len() < floor {
        let Some(cur) = queue.pop_front() else { break };
        let mut fresh = Vec::new();
        for e in index.cndi.neighbors(cur) {
            if expanded.insert(e.to) {
                queue.push_back(e.to);
            }
            if !record.visited.contains_key(&e.to) && !fresh.contains(&e.to) {
                fresh.push(e.to);
            }
        }
        fresh.truncate(floor - record.len());
        record.score_all(&fresh, query, store, scorer)?;
    }
    Ok(())
}

/// Ground truth: every trajectory scored.
pub fn exhaustive_topk(query: &[Point], store: &TrajectoryStore, cfg: &Config, scorer: &BoundScorer) -> Result<QueryResult> {
    let t0 = Instant::now();
    if query.is_empty() {
        return arg("empty query");
    }
    if cfg.k > store.len() {
        return arg(format!("k = {} exceeds the {} stored trajectories", cfg.k, store.len()));
    }
    let mut record = SearchRecord::default();
    let ids: Vec<TrajId> = store.ids().collect();
    record.score_all(&ids, query, store, scorer)?;
    let topk = ranked(record.visited.iter().map(|(&id, &r)| (id, r)), cfg.k);
    record.timings.total = t0.elapsed();
    Ok(QueryResult { topk, record })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::index::{Adjacency, Edge, EdgeTag};
    use crate::model::Trajectory;
    use crate::similarity::ScoreContext;

    struct Lines(Vec<Vec<Edge>>);

    impl Lines {
        fn new(adj: &[&[u32]]) -> Self {
            Lines(adj.iter().map(|v| v.iter().map(|&to| Edge { to: TrajId(to), tag: EdgeTag::Similar }).collect()).collect())
        }
    }

    impl Adjacency for Lines {
        fn out(&self, id: TrajId) -> Option<&[Edge]> {
            self.0.get(id.index()).map(Vec::as_slice)
        }
    }

    fn fixed_scores(scores: Vec<f64>) -> BoundScorer {
        let f = move |_: &[Point], data: &[Point], traj: TrajId, _: &ScoreContext| -> Result<RepScore> {
            Ok(RepScore { score: scores[traj.index()], distance: 0.0, best: SubtrajRef::new(traj, 0, data.len() - 1) })
        };
        BoundScorer::new(Arc::new(f), ScoreContext::from_config(&Config::new(1.0)))
    }

    fn dummy_store(n: usize) -> TrajectoryStore {
        TrajectoryStore::from_trajectories(
            (0..n).map(|i| Trajectory::from_xy(format!("{i}"), &[(i as f64, 0.0), (i as f64, 1.0)]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn climb_follows_a_monotone_chain() {
        let g = Lines::new(&[&[1], &[2], &[]]);
        let scorer = fixed_scores(vec![0.1, 0.5, 0.9]);
        let mut rec = SearchRecord::default();
        let (end, hops) = climb(&g, TrajId(0), &[Point::new(0.0, 0.0)], &dummy_store(3), &scorer, &mut rec).unwrap();
        assert_eq!((end, hops), (TrajId(2), 2));
        assert_eq!(rec.len(), 3);
    }

    #[test]
    fn climb_stops_at_local_max_and_on_plateaus() {
        let g = Lines::new(&[&[1, 2], &[0], &[0]]);
        let q = [Point::new(0.0, 0.0)];
        let mut rec = SearchRecord::default();
        let (end, _) = climb(&g, TrajId(0), &q, &dummy_store(3), &fixed_scores(vec![0.9, 0.5, 0.9]), &mut rec).unwrap();
        assert_eq!(end, TrajId(0));
        // Equal best neighbors: the smaller id wins.
        let g = Lines::new(&[&[2, 1], &[], &[]]);
        let mut rec = SearchRecord::default();
        let (end, _) = climb(&g, TrajId(0), &q, &dummy_store(3), &fixed_scores(vec![0.1, 0.7, 0.7]), &mut rec).unwrap();
        assert_eq!(end, TrajId(1));
    }

    #[test]
    fn climb_rejects_foreign_start() {
        let g = Lines::new(&[&[]]);
        let mut rec = SearchRecord::default();
        let r = climb(&g, TrajId(4), &[Point::new(0.0, 0.0)], &dummy_store(1), &fixed_scores(vec![0.0]), &mut rec);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let r = |id: u32, s: f64| (TrajId(id), RepScore { score: s, distance: 0.0, best: SubtrajRef::new(TrajId(id), 0, 0) });
        let got: Vec<u32> = ranked([r(3, 0.5), r(1, 0.5), r(2, 0.9), r(0, 0.1)], 3).iter().map(|s| s.traj.0).collect();
        assert_eq!(got, vec![2, 1, 3]);
    }
}
