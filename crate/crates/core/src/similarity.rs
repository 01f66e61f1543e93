//! Full-trajectory distances (DTW, EDR, ERP), the distance-to-similarity
//! map, and representative-subtrajectory scorers.
//!
//! A representative score of a data trajectory against a query is the
//! similarity of its best-matching contiguous slice. The built-in scorer
//! computes it exactly with an open-start alignment: one pass over the data
//! where every column may also begin a fresh slice. A second built-in,
//! `exacts-prefix`, runs one incremental alignment per start index and
//! early-abandons once the column minimum can no longer win; both return
//! the same slice, ties going to the smaller start and then the smaller end.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{arg, Error, Result};
use crate::model::{Ground, Point, SubtrajRef, TrajId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    #[default]
    Dtw,
    Edr,
    Erp,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Dtw => "dtw",
            MetricKind::Edr => "edr",
            MetricKind::Erp => "erp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dtw" => Ok(MetricKind::Dtw),
            "edr" => Ok(MetricKind::Edr),
            "erp" => Ok(MetricKind::Erp),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully parameterized trajectory distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric {
    pub kind: MetricKind,
    /// EDR match tolerance.
    pub eps: f64,
    /// ERP reference point.
    pub gap: Point,
    pub ground: Ground,
}

impl Metric {
    pub fn dtw() -> Self {
        Metric { kind: MetricKind::Dtw, eps: 1.0, gap: Point::new(0.0, 0.0), ground: Ground::Planar }
    }

    pub fn edr(eps: f64) -> Self {
        Metric { kind: MetricKind::Edr, eps, ..Self::dtw() }
    }

    pub fn erp(gap: Point) -> Self {
        Metric { kind: MetricKind::Erp, gap, ..Self::dtw() }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Metric { kind: cfg.metric, eps: cfg.edr_eps(), gap: cfg.erp_gap_point(), ground: cfg.ground }
    }

    pub fn distance(&self, a: &[Point], b: &[Point]) -> Result<f64> {
        match self.kind {
            MetricKind::Dtw => dtw_with(a, b, self.ground),
            MetricKind::Edr => {
                if !(self.eps > 0.0) {
                    return arg("EDR eps must be positive");
                }
                Ok(edr_with(a, b, self.eps, self.ground) as f64)
            }
            MetricKind::Erp => Ok(erp_with(a, b, &self.gap, self.ground)),
        }
    }

    #[inline]
    fn edr_match(&self, p: &Point, q: &Point) -> bool {
        edr_match(p, q, self.eps, self.ground)
    }
}

/// Dynamic time warping with planar ground distance.
pub fn dtw(a: &[Point], b: &[Point]) -> Result<f64> {
    dtw_with(a, b, Ground::Planar)
}

pub fn dtw_with(a: &[Point], b: &[Point], ground: Ground) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return arg("dtw requires non-empty trajectories");
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]),
            };
            cur[j] = ground.dist(p, q) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

#[inline]
fn edr_match(p: &Point, q: &Point, eps: f64, ground: Ground) -> bool {
    match ground {
        Ground::Planar => (p.lon - q.lon).abs() <= eps && (p.lat - q.lat).abs() <= eps,
        Ground::Haversine => ground.within(p, q, eps),
    }
}

/// Edit distance on real sequences: substitution is free when both
/// coordinate deltas are within `eps`, otherwise every edit costs 1.
pub fn edr(a: &[Point], b: &[Point], eps: f64) -> u32 {
    edr_with(a, b, eps, Ground::Planar)
}

pub fn edr_with(a: &[Point], b: &[Point], eps: f64, ground: Ground) -> u32 {
    let m = b.len();
    let mut prev: Vec<u32> = (0..=m as u32).collect();
    let mut cur = vec![0u32; m + 1];
    for (i, p) in a.iter().enumerate() {
        cur[0] = i as u32 + 1;
        for (j, q) in b.iter().enumerate() {
            let sub = prev[j] + u32::from(!edr_match(p, q, eps, ground));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Edit distance with real penalty: substitution costs the ground distance,
/// a gap costs the distance to the fixed `gap` point.
pub fn erp(a: &[Point], b: &[Point], gap: &Point) -> f64 {
    erp_with(a, b, gap, Ground::Planar)
}

pub fn erp_with(a: &[Point], b: &[Point], gap: &Point, ground: Ground) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0; m + 1];
    for j in 0..m {
        prev[j + 1] = prev[j] + ground.dist(&b[j], gap);
    }
    let mut cur = vec![0.0; m + 1];
    for p in a {
        let gp = ground.dist(p, gap);
        cur[0] = prev[0] + gp;
        for (j, q) in b.iter().enumerate() {
            let sub = prev[j] + ground.dist(p, q);
            let del_b = cur[j] + ground.dist(q, gap);
            let del_a = prev[j + 1] + gp;
            cur[j + 1] = sub.min(del_b).min(del_a);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Maps a non-negative distance to a similarity in (0, 1]. The distance is
/// divided by the query length first, so scores stay comparable across
/// queries of different length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimTransform {
    /// `1 / (1 + dist / m)`
    #[default]
    Reciprocal,
    /// `exp(-dist / m)`
    Exponential,
}

impl SimTransform {
    #[inline]
    pub fn apply(self, dist: f64, query_len: usize) -> f64 {
        let x = dist / query_len.max(1) as f64;
        match self {
            SimTransform::Reciprocal => 1.0 / (1.0 + x),
            SimTransform::Exponential => (-x).exp(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reciprocal" => Ok(SimTransform::Reciprocal),
            "exponential" | "exp" => Ok(SimTransform::Exponential),
            other => Err(Error::Config(format!("unknown sim_transform {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimTransform::Reciprocal => "reciprocal",
            SimTransform::Exponential => "exponential",
        }
    }
}

/// `1 / (1 + dist / query_len)`.
pub fn sim_transform(dist: f64, query_len: usize) -> f64 {
    SimTransform::Reciprocal.apply(dist, query_len)
}

/// The representative subtrajectory of one data trajectory and its score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepScore {
    pub score: f64,
    pub distance: f64,
    pub best: SubtrajRef,
}

/// Best slice of a data trajectory for a query: metric distance and the
/// 0-based inclusive slice bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceMatch {
    pub distance: f64,
    pub start: usize,
    pub end: usize,
}

impl SliceMatch {
    fn into_rep(self, traj: TrajId, query_len: usize, transform: SimTransform) -> RepScore {
        let score = transform.apply(self.distance, query_len);
        let mut best = SubtrajRef::new(traj, self.start, self.end);
        best.score = Some(score);
        RepScore { score, distance: self.distance, best }
    }
}

/// `(cost, start)` with lexicographic "better" = smaller cost, then
/// smaller start.
#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    start: usize,
}

impl Cell {
    const INF: Cell = Cell { cost: f64::INFINITY, start: usize::MAX };

    #[inline]
    fn better(self, other: Cell) -> Cell {
        if self.cost < other.cost || (self.cost == other.cost && self.start < other.start) {
            self
        } else {
            other
        }
    }

    #[inline]
    fn plus(self, c: f64) -> Cell {
        Cell { cost: self.cost + c, start: self.start }
    }
}

#[inline]
fn keep_best(best: &mut Option<SliceMatch>, cell: Cell, end: usize) {
    let replace = match best {
        None => true,
        Some(b) => cell.cost < b.distance || (cell.cost == b.distance && cell.start < b.start),
    };
    if replace {
        *best = Some(SliceMatch { distance: cell.cost, start: cell.start, end });
    }
}

/// Exact best slice of `data` for `query` under `metric`, over every
/// `0 <= start <= end < data.len()`, in `O(|query| * |data|)`.
pub fn best_slice(query: &[Point], data: &[Point], metric: &Metric) -> Result<SliceMatch> {
    if query.is_empty() || data.is_empty() {
        return arg("representative scoring requires non-empty trajectories");
    }
    Ok(match metric.kind {
        MetricKind::Dtw => open_start_dtw(query, data, metric.ground),
        MetricKind::Edr | MetricKind::Erp => open_start_edit(query, data, metric),
    })
}

fn open_start_dtw(query: &[Point], data: &[Point], ground: Ground) -> SliceMatch {
    let m = query.len();
    let mut prev = vec![Cell::INF; m];
    let mut cur = vec![Cell::INF; m];
    let mut best = None;
    for (b, p) in data.iter().enumerate() {
        let origin = Cell { cost: 0.0, start: b };
        for i in 0..m {
            let d = ground.dist(&query[i], p);
            cur[i] = if i == 0 {
                prev[0].plus(d).better(origin.plus(d))
            } else {
                prev[i - 1].plus(d).better(prev[i].plus(d)).better(cur[i - 1].plus(d))
            };
        }
        keep_best(&mut best, cur[m - 1], b);
        std::mem::swap(&mut prev, &mut cur);
    }
    best.expect("data is non-empty")
}

/// Shared by EDR and ERP. Rows index consumed query points (0..=m). Two
/// layers: `empty[i]` is the cost of gapping the first `i` query points
/// before any data point is consumed, and the column vectors hold paths
/// that already consumed at least one data point.
fn open_start_edit(query: &[Point], data: &[Point], metric: &Metric) -> SliceMatch {
    let m = query.len();
    let (gap_q, sub): (Vec<f64>, Box<dyn Fn(&Point, &Point) -> f64>) = match metric.kind {
        MetricKind::Edr => (vec![1.0; m], Box::new(|a, b| f64::from(u8::from(!metric.edr_match(a, b))))),
        _ => (query.iter().map(|q| metric.ground.dist(q, &metric.gap)).collect(), Box::new(|a, b| metric.ground.dist(a, b))),
    };
    let gap_d = |p: &Point| match metric.kind {
        MetricKind::Edr => 1.0,
        _ => metric.ground.dist(p, &metric.gap),
    };
    let mut empty = vec![0.0; m + 1];
    for i in 0..m {
        empty[i + 1] = empty[i] + gap_q[i];
    }

    let mut prev = vec![Cell::INF; m + 1];
    let mut cur = vec![Cell::INF; m + 1];
    let mut best = None;
    for (b, p) in data.iter().enumerate() {
        let gd = gap_d(p);
        let from_prev = |i: usize, prev: &[Cell], c: f64| prev[i].plus(c).better(Cell { cost: empty[i] + c, start: b });
        cur[0] = from_prev(0, &prev, gd);
        for i in 1..=m {
            let q = &query[i - 1];
            cur[i] = from_prev(i - 1, &prev, sub(q, p)).better(from_prev(i, &prev, gd)).better(cur[i - 1].plus(gap_q[i - 1]));
        }
        keep_best(&mut best, cur[m], b);
        std::mem::swap(&mut prev, &mut cur);
    }
    best.expect("data is non-empty")
}

/// Per-start variant: for every start the alignment column is extended one
/// data point at a time, reusing the shared prefix. A start is abandoned
/// once the column minimum reaches the best distance found so far, since
/// column minima never decrease as the slice grows.
pub fn best_slice_prefix(query: &[Point], data: &[Point], metric: &Metric) -> Result<SliceMatch> {
    if query.is_empty() || data.is_empty() {
        return arg("representative scoring requires non-empty trajectories");
    }
    let m = query.len();
    let ground = metric.ground;
    let mut best: Option<SliceMatch> = None;
    let beats = |best: &Option<SliceMatch>, c: f64| best.is_none_or(|b| c < b.distance);

    match metric.kind {
        MetricKind::Dtw => {
            let mut col = vec![0.0; m];
            for a in 0..data.len() {
                for (b, p) in data.iter().enumerate().skip(a) {
                    let mut up = f64::INFINITY;
                    let mut diag = f64::INFINITY;
                    for i in 0..m {
                        let d = ground.dist(&query[i], p);
                        let v = if b == a {
                            if i == 0 {
                                d
                            } else {
                                d + up
                            }
                        } else if i == 0 {
                            d + col[0]
                        } else {
                            d + diag.min(col[i]).min(up)
                        };
                        diag = col[i];
                        col[i] = v;
                        up = v;
                    }
                    if beats(&best, col[m - 1]) {
                        best = Some(SliceMatch { distance: col[m - 1], start: a, end: b });
                    }
                    let floor = col.iter().copied().fold(f64::INFINITY, f64::min);
                    if !beats(&best, floor) {
                        break;
                    }
                }
            }
        }
        MetricKind::Edr | MetricKind::Erp => {
            let edr = metric.kind == MetricKind::Edr;
            let gap = |p: &Point| if edr { 1.0 } else { ground.dist(p, &metric.gap) };
            let sub = |a: &Point, b: &Point| {
                if edr {
                    f64::from(u8::from(!metric.edr_match(a, b)))
                } else {
                    ground.dist(a, b)
                }
            };
            let mut init = vec![0.0; m + 1];
            for i in 0..m {
                init[i + 1] = init[i] + gap(&query[i]);
            }
            let mut col = vec![0.0; m + 1];
            for a in 0..data.len() {
                col.copy_from_slice(&init);
                for (b, p) in data.iter().enumerate().skip(a) {
                    let gp = gap(p);
                    let mut diag = col[0];
                    col[0] += gp;
                    for i in 1..=m {
                        let q = &query[i - 1];
                        let v = (diag + sub(q, p)).min(col[i] + gp).min(col[i - 1] + gap(q));
                        diag = col[i];
                        col[i] = v;
                    }
                    if beats(&best, col[m]) {
                        best = Some(SliceMatch { distance: col[m], start: a, end: b });
                    }
                    let floor = col.iter().copied().fold(f64::INFINITY, f64::min);
                    if !beats(&best, floor) {
                        break;
                    }
                }
            }
        }
    }
    Ok(best.expect("data is non-empty"))
}

/// Exact representative score of `data` (stored as `traj`) for `query`.
pub fn exact_s(query: &[Point], data: &[Point], traj: TrajId, metric: &Metric, transform: SimTransform) -> Result<RepScore> {
    Ok(best_slice(query, data, metric)?.into_rep(traj, query.len(), transform))
}

/// Parameters handed to every scorer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreContext {
    pub metric: Metric,
    pub transform: SimTransform,
}

impl ScoreContext {
    pub fn from_config(cfg: &Config) -> Self {
        ScoreContext { metric: Metric::from_config(cfg), transform: cfg.sim_transform }
    }
}

/// A representative-similarity scorer. External approximate scorers plug in
/// through [`ScorerRegistry::register`].
pub trait Scorer: Send + Sync {
    fn score(&self, query: &[Point], data: &[Point], traj: TrajId, ctx: &ScoreContext) -> Result<RepScore>;
}

impl<F> Scorer for F
where
    F: Fn(&[Point], &[Point], TrajId, &ScoreContext) -> Result<RepScore> + Send + Sync,
{
    fn score(&self, query: &[Point], data: &[Point], traj: TrajId, ctx: &ScoreContext) -> Result<RepScore> {
        self(query, data, traj, ctx)
    }
}

struct ExactS;

impl Scorer for ExactS {
    fn score(&self, query: &[Point], data: &[Point], traj: TrajId, ctx: &ScoreContext) -> Result<RepScore> {
        exact_s(query, data, traj, &ctx.metric, ctx.transform)
    }
}

struct ExactSPrefix;

impl Scorer for ExactSPrefix {
    fn score(&self, query: &[Point], data: &[Point], traj: TrajId, ctx: &ScoreContext) -> Result<RepScore> {
        Ok(best_slice_prefix(query, data, &ctx.metric)?.into_rep(traj, query.len(), ctx.transform))
    }
}

#[derive(Clone)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn Scorer>>,
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        let mut r = ScorerRegistry { scorers: BTreeMap::new() };
        r.register("exacts", ExactS);
        r.register("exacts-prefix", ExactSPrefix);
        r
    }
}

impl ScorerRegistry {
    pub fn register(&mut self, name: &str, scorer: impl Scorer + 'static) {
        self.scorers.insert(name.to_ascii_lowercase(), Arc::new(scorer));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scorers.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scorer>> {
        self.scorers.get(&name.to_ascii_lowercase()).cloned().ok_or_else(|| Error::Config(format!("unknown scorer {name:?}")))
    }

    /// Binds the configured scorer to its metric parameters.
    pub fn resolve(&self, cfg: &Config) -> Result<BoundScorer> {
        Ok(BoundScorer { scorer: self.get(&cfg.scorer)?, ctx: ScoreContext::from_config(cfg) })
    }
}

/// A scorer together with its context; what the search engine calls.
#[derive(Clone)]
pub struct BoundScorer {
    scorer: Arc<dyn Scorer>,
    ctx: ScoreContext,
}

impl BoundScorer {
    pub fn new(scorer: Arc<dyn Scorer>, ctx: ScoreContext) -> Self {
        BoundScorer { scorer, ctx }
    }

    pub fn context(&self) -> &ScoreContext {
        &self.ctx
    }

    #[inline]
    pub fn score(&self, query: &[Point], data: &[Point], traj: TrajId) -> Result<RepScore> {
        self.scorer.score(query, data, traj, &self.ctx)
    }
}

/// Representative similarity of `data` for `query`, dispatched through the
/// scorer named in `cfg`.
pub fn rep_similarity(
    query: &[Point],
    data: &[Point],
    traj: TrajId,
    cfg: &Config,
    registry: &ScorerRegistry,
) -> Result<RepScore> {
    registry.resolve(cfg)?.score(query, data, traj)
}
