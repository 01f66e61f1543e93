//! Synthetic trajectories: vehicles driving a square street lattice.
//!
//! Walks move between lattice intersections, mostly straight with
//! occasional turns and no U-turns, emitting a fixed number of points per
//! block. Trajectories that drive the same streets therefore share nearby
//! points, which is what real road-network data looks like to the
//! similarity measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{arg, Result};
use crate::model::{Point, TrajId, Trajectory, TrajectoryStore};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_traj: usize,
    /// Inclusive data trajectory length bounds, in points.
    pub len_range: (usize, usize),
    pub query_len_range: (usize, usize),
    pub n_queries: usize,
    /// Share of queries copied from a slice of some data trajectory.
    pub embed_rate: f64,
    /// Standard deviation of the per-coordinate Gaussian jitter added to
    /// query points, in coordinate units.
    pub noise: f64,
    pub seed: u64,
    /// Distance between neighboring intersections.
    pub spacing: f64,
    /// Points emitted per block.
    pub points_per_block: usize,
    /// Intersections per side; `None` sizes the lattice so that street
    /// usage per block stays roughly constant as `n_traj` grows.
    pub lattice: Option<usize>,
    /// Lower-left corner of the lattice.
    pub origin: (f64, f64),
    /// Chance of turning at an intersection.
    pub turn_prob: f64,
    /// Trips per shared route. Each data trajectory is a stretch of one of
    /// `n_traj / trips_per_route` route walks, so trips pile up on common
    /// corridors. 0 makes every trajectory an independent walk.
    pub trips_per_route: usize,
    /// Jitter on data points, same units as `noise`.
    pub data_noise: f64,
}

impl SynthSpec {
    /// Street-scale defaults in degrees: blocks of about 200 m, a point
    /// every 50 m, query jitter of about 5 m.
    pub fn new(n_traj: usize, n_queries: usize, seed: u64) -> Self {
        SynthSpec {
            n_traj,
            len_range: (90, 300),
            query_len_range: (30, 90),
            n_queries,
            embed_rate: 0.8,
            noise: 0.00005,
            seed,
            spacing: 0.002,
            points_per_block: 4,
            lattice: None,
            origin: (116.3, 39.9),
            turn_prob: 1.0,
            trips_per_route: 0,
            data_noise: 0.00002,
        }
    }

    pub fn lattice_side(&self) -> usize {
        self.lattice.unwrap_or_else(|| {
            // About one and a half passes per block on average.
            let blocks =
                self.n_traj as f64 * (self.len_range.0 + self.len_range.1) as f64 / 2.0 / self.points_per_block as f64 / 1.5;
            ((blocks / 2.0).sqrt().ceil() as usize).max(4)
        })
    }

    fn validate(&self) -> Result<()> {
        let ok_range = |(a, b): (usize, usize)| a >= 2 && a <= b;
        if !ok_range(self.len_range) || !ok_range(self.query_len_range) {
            return arg("length ranges must satisfy 2 <= min <= max");
        }
        if self.n_traj == 0 {
            return arg("corpus needs at least one trajectory");
        }
        if !(0.0..=1.0).contains(&self.embed_rate) {
            return arg("embed_rate must lie in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.data_noise >= 0.0 && self.data_noise.is_finite()) {
            return arg("noise must be finite and non-negative");
        }
        if !(self.spacing > 0.0) || self.points_per_block == 0 {
            return arg("spacing and points_per_block must be positive");
        }
        if !(0.0..=1.0).contains(&self.turn_prob) {
            return arg("turn_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Where a planted query was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Planted {
    pub traj: TrajId,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub store: TrajectoryStore,
    pub queries: Vec<Trajectory>,
    pub planted: Vec<Option<Planted>>,
}

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

struct Lattice {
    side: i64,
    spacing: f64,
    per_block: usize,
    origin: (f64, f64),
    turn_prob: f64,
}

impl Lattice {
    fn inside(&self, (x, y): (i64, i64)) -> bool {
        (0..self.side).contains(&x) && (0..self.side).contains(&y)
    }

    /// A walk of exactly `len` points starting at a random intersection.
    fn walk(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<Point> {
        let mut node = (rng.gen_range(0..self.side), rng.gen_range(0..self.side));
        let mut dir = rng.gen_range(0..4usize);
        let mut pts = Vec::with_capacity(len + self.per_block);
        pts.push(self.at(node, dir, 0));
        while pts.len() < len {
            if rng.gen_bool(self.turn_prob) {
                dir = if rng.gen_bool(0.5) { (dir + 1) % 4 } else { (dir + 3) % 4 };
            }
            let step = |d: usize| (node.0 + DIRS[d].0, node.1 + DIRS[d].1);
            if !self.inside(step(dir)) {
                let options: Vec<usize> =
                    [(dir + 1) % 4, (dir + 3) % 4, (dir + 2) % 4].into_iter().filter(|&d| self.inside(step(d))).collect();
                // Turns before U-turns: only a dead end reverses.
                let turns: Vec<usize> = options.iter().copied().filter(|&d| d != (dir + 2) % 4).collect();
                let pool = if turns.is_empty() { options } else { turns };
                dir = pool[rng.gen_range(0..pool.len())];
            }
            for s in 1..=self.per_block {
                pts.push(self.at(node, dir, s));
            }
            node = step(dir);
        }
        pts.truncate(len);
        pts
    }

    /// Point `s / per_block` of the way from `node` along `dir`.
    fn at(&self, node: (i64, i64), dir: usize, s: usize) -> Point {
        let f = s as f64 / self.per_block as f64;
        let x = node.0 as f64 + DIRS[dir].0 as f64 * f;
        let y = node.1 as f64 + DIRS[dir].1 as f64 * f;
        Point::new(self.origin.0 + x * self.spacing, self.origin.1 + y * self.spacing)
    }
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let lattice = Lattice {
        side: spec.lattice_side() as i64,
        spacing: spec.spacing,
        per_block: spec.points_per_block,
        origin: spec.origin,
        turn_prob: spec.turn_prob,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_traj.to_string().len();

    let routes: Vec<Vec<Point>> = match spec.n_traj.checked_div(spec.trips_per_route) {
        None => Vec::new(),
        Some(count) => (0..count.max(1)).map(|_| lattice.walk(&mut rng, 2 * spec.len_range.1)).collect(),
    };
    let data_jitter = Normal::new(0.0, spec.data_noise).expect("noise was validated");
    let mut store = TrajectoryStore::new();
    for i in 0..spec.n_traj {
        let len = rng.gen_range(spec.len_range.0..=spec.len_range.1);
        let clean = if routes.is_empty() {
            lattice.walk(&mut rng, len)
        } else {
            let route = &routes[rng.gen_range(0..routes.len())];
            let start = rng.gen_range(0..=route.len() - len);
            route[start..start + len].to_vec()
        };
        let pts = jittered(clean, spec.data_noise, &data_jitter, &mut rng);
        store.insert(Trajectory::new(format!("d{i:0width$}"), pts)?)?;
    }

    let jitter = Normal::new(0.0, spec.noise).expect("noise was validated");
    let qwidth = spec.n_queries.max(1).to_string().len();
    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut planted = Vec::with_capacity(spec.n_queries);
    for qi in 0..spec.n_queries {
        let qlen = rng.gen_range(spec.query_len_range.0..=spec.query_len_range.1);
        let embed = rng.gen_bool(spec.embed_rate);
        let (base, hint) = if embed {
            let host = TrajId(rng.gen_range(0..spec.n_traj as u32));
            let pts = store.traj(host).points();
            let take = qlen.min(pts.len());
            let start = rng.gen_range(0..=pts.len() - take);
            (pts[start..start + take].to_vec(), Some(Planted { traj: host, start, end: start + take - 1 }))
        } else {
            (lattice.walk(&mut rng, qlen), None)
        };
        let pts = jittered(base, spec.noise, &jitter, &mut rng);
        queries.push(Trajectory::new(format!("q{qi:0qwidth$}"), pts)?);
        planted.push(hint);
    }
    Ok(Corpus { store, queries, planted })
}

fn jittered(pts: Vec<Point>, sd: f64, dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<Point> {
    if sd == 0.0 {
        return pts;
    }
    pts.into_iter().map(|p| Point::new(p.lon + dist.sample(rng), p.lat + dist.sample(rng))).collect()
}

/// Two separate street lattices. Cluster `A` (labels `a…`) is wider and
/// straddles the middle of the combined bounds, so a single grid cell's
/// representative always comes from it; cluster `B` (labels `b…`) sits
/// off to one side. Ids alternate between clusters. Every query is a
/// noisy slice of a `B` trajectory.
pub fn two_cluster_corpus(per_cluster: usize, n_queries: usize, seed: u64) -> Result<Corpus> {
    if per_cluster == 0 {
        return arg("clusters need at least one trajectory");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = 0.002;
    let a = Lattice { side: 14, spacing, per_block: 4, origin: (0.0, 0.0), turn_prob: 0.3 };
    let b = Lattice { side: 6, spacing, per_block: 4, origin: (0.04, 0.0), turn_prob: 0.3 };
    let mut store = TrajectoryStore::new();
    let mut b_ids = Vec::new();
    for i in 0..per_cluster {
        for (name, lat) in [("a", &a), ("b", &b)] {
            let len = rng.gen_range(30..=60);
            let id = store.insert(Trajectory::new(format!("{name}{i:04}"), lat.walk(&mut rng, len))?)?;
            if name == "b" {
                b_ids.push(id);
            }
        }
    }
    let jitter = Normal::new(0.0, 0.00005).expect("constant");
    let mut queries = Vec::new();
    let mut planted = Vec::new();
    for qi in 0..n_queries {
        let host = b_ids[rng.gen_range(0..b_ids.len())];
        let pts = store.traj(host).points();
        let take = rng.gen_range(10..=20).min(pts.len());
        let start = rng.gen_range(0..=pts.len() - take);
        let q = pts[start..start + take]
            .iter()
            .map(|p| Point::new(p.lon + jitter.sample(&mut rng), p.lat + jitter.sample(&mut rng)))
            .collect();
        queries.push(Trajectory::new(format!("q{qi:03}"), q)?);
        planted.push(Some(Planted { traj: host, start, end: start + take - 1 }));
    }
    Ok(Corpus { store, queries, planted })
}
