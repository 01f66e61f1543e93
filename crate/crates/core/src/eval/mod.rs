//! Retrieval-quality metrics and the benchmark harness.
//!
//! Ground truth always comes from [`exhaustive_topk`]; the graph search is
//! never graded against itself.

mod metrics;
mod report;
mod synth;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use metrics::{hr_k, r10_at_50, rr};
pub use report::{write_dat, write_metrics_csv, write_summary_csv, write_sweep_csv};
pub use synth::{synth_corpus, two_cluster_corpus, Corpus, Planted, SynthSpec};

use crate::config::Config;
use crate::dtsm::dtsm;
use crate::error::{Error, Result};
use crate::index::{build_index, IndexBundle};
use crate::model::{Point, TrajId, Trajectory, TrajectoryStore};
use crate::search::{exhaustive_topk, query_topk, QueryResult};
use crate::similarity::{BoundScorer, ScorerRegistry};

/// Largest store the exhaustive ground truth runs on without `force`.
pub const DEFAULT_TRUTH_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Guard {
    pub cap: usize,
    pub force: bool,
}

impl Default for Guard {
    fn default() -> Self {
        Guard { cap: DEFAULT_TRUTH_CAP, force: false }
    }
}

impl Guard {
    pub fn check(&self, n: usize) -> Result<()> {
        if n > self.cap && !self.force {
            return Err(Error::Guard(format!(
                "exhaustive ground truth over {n} trajectories exceeds the cap of {}; raise the cap or force it",
                self.cap
            )));
        }
        Ok(())
    }
}

/// Full exhaustive ranking of the store for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub ranking: Vec<TrajId>,
    pub elapsed: Duration,
}

pub fn ground_truth(
    store: &TrajectoryStore,
    queries: &[Trajectory],
    cfg: &Config,
    scorer: &BoundScorer,
    guard: Guard,
) -> Result<Vec<GroundTruth>> {
    guard.check(store.len())?;
    let mut all = cfg.clone();
    all.k = store.len();
    queries
        .iter()
        .map(|q| {
            let t = Instant::now();
            let r = exhaustive_topk(q.points(), store, &all, scorer)?;
            Ok(GroundTruth { ranking: ids(&r), elapsed: t.elapsed() })
        })
        .collect()
}

/// A named search configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Method {
    pub name: String,
    pub config: Config,
}

impl Method {
    pub fn new(name: impl Into<String>, config: Config) -> Self {
        Method { name: name.into(), config }
    }

    /// The default search plus one method per ablation switch.
    pub fn with_ablations(base: &Config) -> Vec<Method> {
        let mut out = vec![Method::new("gtrss", base.clone())];
        for (name, set) in [
            ("no-gari", (|c: &mut Config| c.ablation.no_gari = true) as fn(&mut Config)),
            ("no-random", |c: &mut Config| c.ablation.no_random = true),
            ("no-record", |c: &mut Config| c.ablation.no_record = true),
        ] {
            let mut c = base.clone();
            set(&mut c);
            out.push(Method::new(name, c));
        }
        out
    }
}

pub const EXHAUSTIVE: &str = "exhaustive";

/// One `(query, method, k)` measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEval {
    pub query: usize,
    pub method: String,
    pub k: usize,
    pub hr: f64,
    pub rr: f64,
    /// `None` when the store is too small for a top-10 truth.
    pub r10_50: Option<f64>,
    pub time_ms: f64,
    pub visited: usize,
}

/// Per `(method, k)` means, in first-seen order.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: String,
    pub k: usize,
    pub queries: usize,
    pub hr: f64,
    pub rr: f64,
    pub r10_50: Option<f64>,
    pub time_ms: f64,
    pub visited: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<QueryEval>,
    pub summary: Vec<Summary>,
}

fn ids(r: &QueryResult) -> Vec<TrajId> {
    r.topk.iter().map(|s| s.traj).collect()
}

/// Every recorded trajectory, best first.
fn record_ranking(r: &QueryResult) -> Vec<TrajId> {
    let mut v: Vec<(f64, TrajId)> = r.record.visited.iter().map(|(&id, s)| (s.score, id)).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    v.into_iter().map(|(_, id)| id).collect()
}

/// Graph search for every query at every `k`, graded against `truths`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    store: &TrajectoryStore,
    queries: &[Trajectory],
    truths: &[GroundTruth],
    index: &IndexBundle,
    method: &Method,
    scorer: &BoundScorer,
    ks: &[usize],
) -> Result<Vec<QueryEval>> {
    let n = store.len();
    let mut rows = Vec::new();
    for (qi, (q, truth)) in queries.iter().zip(truths).enumerate() {
        for &k in ks {
            let mut cfg = method.config.clone();
            cfg.k = k;
            let t = Instant::now();
            let res = query_topk(q.points(), index, store, &cfg, scorer)?;
            let time_ms = t.elapsed().as_secs_f64() * 1e3;
            let pred = ids(&res);
            // Ablations may answer with fewer than k ids; missing slots count as misses.
            let mut padded = pred.clone();
            pad_misses(&mut padded, k);
            let hr = metrics::hr_k(&padded, &truth.ranking, k)?;
            let r10_50 = (n >= 10).then(|| {
                let top = record_ranking(&res);
                let mut padded: Vec<TrajId> = top.into_iter().take(50).collect();
                pad_misses(&mut padded, 50.min(n));
                metrics::r10_at_50(&padded, &truth.ranking[..10], n).unwrap_or(0.0)
            });
            rows.push(QueryEval {
                query: qi,
                method: method.name.clone(),
                k,
                hr,
                rr: if pred.is_empty() { 1.0 } else { metrics::rr(&pred, &truth.ranking)? },
                r10_50,
                time_ms,
                visited: res.record.len(),
            });
        }
    }
    Ok(rows)
}

/// Fills a short prediction with ids that cannot match any real one.
fn pad_misses(v: &mut Vec<TrajId>, len: usize) {
    let mut filler = u32::MAX;
    while v.len() < len {
        v.push(TrajId(filler));
        filler -= 1;
    }
}

/// The exhaustive baseline scored against itself: perfect quality, its
/// own timings.
pub fn exhaustive_rows(truths: &[GroundTruth], ks: &[usize], store_len: usize) -> Vec<QueryEval> {
    let mut rows = Vec::new();
    for (qi, t) in truths.iter().enumerate() {
        for &k in ks {
            rows.push(QueryEval {
                query: qi,
                method: EXHAUSTIVE.into(),
                k,
                hr: 1.0,
                rr: 0.0,
                r10_50: (store_len >= 10).then_some(1.0),
                time_ms: t.elapsed.as_secs_f64() * 1e3,
                visited: store_len,
            });
        }
    }
    rows
}

pub fn summarize(rows: &[QueryEval]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (method, k) in keys {
        let group: Vec<&QueryEval> = rows.iter().filter(|r| r.method == method && r.k == k).collect();
        let m = group.len() as f64;
        let mean = |f: &dyn Fn(&QueryEval) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / m;
        let r10 = if group.iter().all(|r| r.r10_50.is_some()) { Some(mean(&|r| r.r10_50.unwrap())) } else { None };
        out.push(Summary {
            method,
            k,
            queries: group.len(),
            hr: mean(&|r| r.hr),
            rr: mean(&|r| r.rr),
            r10_50: r10,
            time_ms: mean(&|r| r.time_ms),
            visited: mean(&|r| r.visited as f64),
        });
    }
    out
}

/// Fields that change what the index builder produces.
fn build_key(c: &Config) -> String {
    format!(
        "{}|{}|{}|{}|{:?}|{}|{}|{}|{:?}",
        c.alpha,
        c.grid_m,
        c.xi,
        c.effective_delta(),
        c.gari_counts,
        c.kappa_n,
        c.kappa_r,
        c.seed,
        c.ground
    )
}

/// Builds one index per distinct build configuration, computes ground
/// truth once and evaluates every method at every `k`.
pub fn run_benchmark(
    store: &TrajectoryStore,
    queries: &[Trajectory],
    methods: &[Method],
    ks: &[usize],
    registry: &ScorerRegistry,
    guard: Guard,
) -> Result<EvalReport> {
    let Some(first) = methods.first() else {
        return Err(Error::Argument("no methods to benchmark".into()));
    };
    let truth_scorer = registry.resolve(&first.config)?;
    let truths = ground_truth(store, queries, &first.config, &truth_scorer, guard)?;
    let mut rows = exhaustive_rows(&truths, ks, store.len());
    let mut built: Vec<(String, IndexBundle)> = Vec::new();
    for m in methods {
        let key = build_key(&m.config);
        if !built.iter().any(|(k, _)| *k == key) {
            built.push((key.clone(), build_index(store, &m.config)?));
        }
        let index = &built.iter().find(|(k, _)| *k == key).expect("just built").1;
        let scorer = registry.resolve(&m.config)?;
        rows.extend(evaluate(store, queries, &truths, index, m, &scorer, ks)?);
    }
    let summary = summarize(&rows);
    Ok(EvalReport { rows, summary })
}

/// One point of a parameter sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    pub hr: f64,
    pub rr: f64,
    pub r10_50: Option<f64>,
    pub time_ms: f64,
    pub visited: f64,
}

fn point(x: f64, rows: &[QueryEval]) -> SweepPoint {
    let s = &summarize(rows)[0];
    SweepPoint { x, hr: s.hr, rr: s.rr, r10_50: s.r10_50, time_ms: s.time_ms, visited: s.visited }
}

/// HR at `base.k` as the lower-layer neighbor count varies. Random-pool
/// size is raised when needed so that every point validates.
pub fn sweep_neighbors(
    store: &TrajectoryStore,
    queries: &[Trajectory],
    truths: &[GroundTruth],
    base: &Config,
    xis: &[usize],
    scorer: &BoundScorer,
) -> Result<Vec<SweepPoint>> {
    xis.iter()
        .map(|&xi| {
            let mut c = base.clone();
            c.xi = xi;
            c.kappa_r = c.kappa_r.max(xi.saturating_sub(c.kappa_n));
            let index = build_index(store, &c)?;
            let rows = evaluate(store, queries, truths, &index, &Method::new("gtrss", c.clone()), scorer, &[c.k])?;
            Ok(point(xi as f64, &rows))
        })
        .collect()
}

/// HR-k as `k` varies over one index.
pub fn sweep_k(
    store: &TrajectoryStore,
    queries: &[Trajectory],
    truths: &[GroundTruth],
    index: &IndexBundle,
    base: &Config,
    ks: &[usize],
    scorer: &BoundScorer,
) -> Result<Vec<SweepPoint>> {
    let m = Method::new("gtrss", base.clone());
    ks.iter().map(|&k| Ok(point(k as f64, &evaluate(store, queries, truths, index, &m, scorer, &[k])?))).collect()
}

/// Mean wall time per query of both searches at one store size.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalePoint {
    pub n: usize,
    pub build_ms: f64,
    pub gtrss_ms: f64,
    pub exhaustive_ms: f64,
    pub hr: f64,
}

impl ScalePoint {
    pub fn speedup(&self) -> f64 {
        if self.gtrss_ms > 0.0 {
            self.exhaustive_ms / self.gtrss_ms
        } else {
            f64::INFINITY
        }
    }
}

/// Builds a synthetic corpus per size and times both searches on it.
pub fn scalability(
    template: &SynthSpec,
    sizes: &[usize],
    base: &Config,
    registry: &ScorerRegistry,
    guard: Guard,
) -> Result<Vec<ScalePoint>> {
    sizes
        .iter()
        .map(|&n| {
            let mut spec = template.clone();
            spec.n_traj = n;
            let corpus = synth_corpus(&spec)?;
            scale_point(&corpus, base, registry, guard)
        })
        .collect()
}

pub fn scale_point(corpus: &Corpus, base: &Config, registry: &ScorerRegistry, guard: Guard) -> Result<ScalePoint> {
    let scorer = registry.resolve(base)?;
    let t = Instant::now();
    let index = build_index(&corpus.store, base)?;
    let build_ms = t.elapsed().as_secs_f64() * 1e3;
    let truths = ground_truth(&corpus.store, &corpus.queries, base, &scorer, guard)?;
    let rows =
        evaluate(&corpus.store, &corpus.queries, &truths, &index, &Method::new("gtrss", base.clone()), &scorer, &[base.k])?;
    let s = &summarize(&rows)[0];
    let exhaustive_ms = truths.iter().map(|t| t.elapsed.as_secs_f64() * 1e3).sum::<f64>() / truths.len().max(1) as f64;
    Ok(ScalePoint { n: corpus.store.len(), build_ms, gtrss_ms: s.time_ms, exhaustive_ms, hr: s.hr })
}

/// Milliseconds to compare `pairs` random trajectory pairs of each length.
/// Points are uniform in a unit square with `alpha` chosen for a sparse
/// match matrix.
pub fn dtsm_timing(lengths: &[usize], pairs: usize, alpha: f64, seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lengths
        .iter()
        .map(|&n| {
            let mut gen = || -> Vec<Point> { (0..n).map(|_| Point::new(rng.gen(), rng.gen())).collect() };
            let data: Vec<(Vec<Point>, Vec<Point>)> = (0..pairs).map(|_| (gen(), gen())).collect();
            let t = Instant::now();
            for (a, b) in &data {
                std::hint::black_box(dtsm(a, b, alpha, crate::model::Ground::Planar)?);
            }
            Ok((n, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect()
}
