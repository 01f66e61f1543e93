//! Trajectories, subtrajectory references and the in-memory trajectory store.
//!
//! Indices are 0-based and inclusive internally. Everything that leaves the
//! process (CSV files, CLI output) uses 1-based indices.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// A position with an optional timestamp. Timestamps are carried through
/// ingest and output but no algorithm reads them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub lon: f64,
    pub lat: f64,
    pub t: Option<f64>,
}

impl Point {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Point { lon, lat, t: None }
    }

    pub const fn with_time(lon: f64, lat: f64, t: f64) -> Self {
        Point { lon, lat, t: Some(t) }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
            && self.t.is_none_or(f64::is_finite)
    }
}

/// Planar Euclidean distance, coordinates taken as plane coordinates.
#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    (a.lon - b.lon).hypot(a.lat - b.lat)
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine(a: &Point, b: &Point) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Ground distance between two points. Every threshold (`alpha`, EDR
/// `eps`) is expressed in the unit of the selected ground distance:
/// coordinate degrees for `Planar`, meters for `Haversine`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ground {
    #[default]
    Planar,
    Haversine,
}

impl Ground {
    #[inline]
    pub fn dist(self, a: &Point, b: &Point) -> f64 {
        match self {
            Ground::Planar => distance(a, b),
            Ground::Haversine => haversine(a, b),
        }
    }

    /// True when `dist(a, b) <= threshold`. Avoids the square root on the
    /// planar path.
    #[inline]
    pub fn within(self, a: &Point, b: &Point, threshold: f64) -> bool {
        match self {
            Ground::Planar => {
                let dx = a.lon - b.lon;
                let dy = a.lat - b.lat;
                dx * dx + dy * dy <= threshold * threshold
            }
            Ground::Haversine => haversine(a, b) <= threshold,
        }
    }
}

/// Dense identifier of a trajectory inside a [`TrajectoryStore`]; equal to
/// its insertion order. All tie-breaks "by id" compare these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrajId(pub u32);

impl TrajId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    label: String,
    points: Vec<Point>,
}

impl Trajectory {
    /// Validates coordinates, timestamp monotonicity and length >= 2.
    pub fn new(label: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let label = label.into();
        if points.len() < 2 {
            return arg(format!("trajectory {label:?} has {} point(s); at least 2 are required", points.len()));
        }
        Self::check_points(&label, &points)?;
        Ok(Trajectory { label, points })
    }

    /// Like [`Trajectory::new`] but accepts a single point. Used for query
    /// fragments and test fixtures where a one-point sequence is meaningful.
    pub fn new_unchecked_len(label: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let label = label.into();
        if points.is_empty() {
            return arg(format!("trajectory {label:?} is empty"));
        }
        Self::check_points(&label, &points)?;
        Ok(Trajectory { label, points })
    }

    /// Convenience constructor from bare `(lon, lat)` pairs.
    pub fn from_xy(label: impl Into<String>, xy: &[(f64, f64)]) -> Result<Self> {
        Self::new_unchecked_len(label, xy.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    fn check_points(label: &str, points: &[Point]) -> Result<()> {
        if let Some(i) = points.iter().position(|p| !p.is_valid()) {
            return arg(format!("trajectory {label:?}: point {} is out of range", i + 1));
        }
        let timed = points.iter().filter(|p| p.t.is_some()).count();
        if timed != 0 && timed != points.len() {
            return arg(format!("trajectory {label:?}: timestamps present on only some points"));
        }
        if timed != 0 && points.windows(2).any(|w| w[0].t >= w[1].t) {
            return arg(format!("trajectory {label:?}: timestamps are not strictly increasing"));
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Borrowed view of points `start..=end` (0-based, inclusive).
    pub fn slice(&self, start: usize, end: usize) -> Result<&[Point]> {
        if start > end || end >= self.points.len() {
            return Err(Error::IndexOutOfRange { start, end, len: self.points.len() });
        }
        Ok(&self.points[start..=end])
    }
}

/// A contiguous slice `start..=end` (0-based, inclusive) of a stored
/// trajectory, optionally carrying a similarity score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubtrajRef {
    pub traj: TrajId,
    pub start: usize,
    pub end: usize,
    pub score: Option<f64>,
}

impl SubtrajRef {
    pub fn new(traj: TrajId, start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SubtrajRef { traj, start, end, score: None }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn resolve<'a>(&self, store: &'a TrajectoryStore) -> Result<&'a [Point]> {
        store.get(self.traj)?.slice(self.start, self.end)
    }
}

/// Immutable-after-ingest collection of trajectories keyed by [`TrajId`].
#[derive(Clone, Debug, Default)]
pub struct TrajectoryStore {
    trajs: Vec<Trajectory>,
    by_label: HashMap<String, TrajId>,
}

impl TrajectoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trajectories(trajs: impl IntoIterator<Item = Trajectory>) -> Result<Self> {
        let mut store = Self::new();
        for t in trajs {
            store.insert(t)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, t: Trajectory) -> Result<TrajId> {
        if self.by_label.contains_key(t.label()) {
            return arg(format!("duplicate trajectory id {:?}", t.label()));
        }
        let id = TrajId(u32::try_from(self.trajs.len()).map_err(|_| Error::Argument("trajectory store is full".into()))?);
        self.by_label.insert(t.label().to_owned(), id);
        self.trajs.push(t);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.trajs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajs.is_empty()
    }

    pub fn get(&self, id: TrajId) -> Result<&Trajectory> {
        self.trajs.get(id.index()).ok_or_else(|| Error::Argument(format!("unknown trajectory id {id}")))
    }

    /// Panicking accessor for ids that are known to come from this store.
    #[inline]
    pub fn traj(&self, id: TrajId) -> &Trajectory {
        &self.trajs[id.index()]
    }

    pub fn lookup(&self, label: &str) -> Option<TrajId> {
        self.by_label.get(label).copied()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = TrajId> + '_ {
        (0..self.trajs.len() as u32).map(TrajId)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (TrajId, &Trajectory)> + '_ {
        self.trajs.iter().enumerate().map(|(i, t)| (TrajId(i as u32), t))
    }

    /// CRC-32 over the canonical CSV encoding. Index files record it so a
    /// bundle is never paired with a store it was not built from.
    pub fn fingerprint(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        let mut buf = Vec::new();
        write_csv(&mut buf, self.trajs.iter()).expect("writing to a Vec cannot fail");
        h.update(&buf);
        h.finalize()
    }
}

/// Filters applied while ingesting raw CSV rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IngestFilter {
    pub min_len: usize,
    pub max_len: usize,
    pub dedup_consecutive: bool,
}

impl Default for IngestFilter {
    fn default() -> Self {
        IngestFilter { min_len: 2, max_len: usize::MAX, dedup_consecutive: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub read: usize,
    pub kept: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub invalid: usize,
    pub deduped_points: usize,
}

/// Reads `traj_id,seq,lon,lat[,t]` rows. A header line is skipped when its
/// `seq` column is not an integer. Rows of one trajectory must be
/// contiguous with strictly ascending `seq`. Non-numeric fields abort with
/// the offending line number; trajectories with out-of-range coordinates
/// or lengths outside the filter bounds are dropped and counted.
pub fn read_csv<R: Read>(reader: R, filter: IngestFilter) -> Result<(Vec<Trajectory>, IngestStats)> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);

    let mut stats = IngestStats::default();
    let mut out = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut cur: Option<(String, i64, Vec<Point>)> = None;

    let flush = |cur: Option<(String, i64, Vec<Point>)>, out: &mut Vec<Trajectory>, stats: &mut IngestStats| {
        let Some((label, _, mut points)) = cur else { return };
        stats.read += 1;
        if filter.dedup_consecutive {
            let before = points.len();
            points.dedup_by(|b, a| a.lon == b.lon && a.lat == b.lat);
            stats.deduped_points += before - points.len();
        }
        if points.len() < filter.min_len.max(2) {
            stats.too_short += 1;
        } else if points.len() > filter.max_len {
            stats.too_long += 1;
        } else {
            match Trajectory::new(label, points) {
                Ok(t) => {
                    stats.kept += 1;
                    out.push(t);
                }
                Err(_) => stats.invalid += 1,
            }
        }
    };

    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), msg: e.to_string() })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 && record.len() != 5 {
            return Err(Error::Parse { line, msg: format!("expected 4 or 5 fields, found {}", record.len()) });
        }
        let seq: i64 = match record[1].parse() {
            Ok(s) => s,
            Err(_) if line == 1 => continue,
            Err(_) => return Err(Error::Parse { line, msg: format!("seq {:?} is not an integer", &record[1]) }),
        };
        let num = |i: usize, what: &str| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("{what} {:?} is not a number", &record[i]) })
        };
        let lon = num(2, "lon")?;
        let lat = num(3, "lat")?;
        let t = if record.len() == 5 && !record[4].is_empty() { Some(num(4, "t")?) } else { None };
        let point = Point { lon, lat, t };
        let label = &record[0];

        match &mut cur {
            Some((l, last_seq, pts)) if l == label => {
                if seq <= *last_seq {
                    return Err(Error::Parse { line, msg: format!("seq {seq} does not ascend (previous {last_seq})") });
                }
                *last_seq = seq;
                pts.push(point);
            }
            _ => {
                if let Some(first) = seen.get(label) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("rows for trajectory {label:?} are not contiguous (first seen on line {first})"),
                    });
                }
                seen.insert(label.to_owned(), line);
                flush(cur.take(), &mut out, &mut stats);
                cur = Some((label.to_owned(), seq, vec![point]));
            }
        }
    }
    flush(cur.take(), &mut out, &mut stats);
    Ok((out, stats))
}

/// Writes trajectories in the ingest format with 1-based `seq`. Floats use
/// Rust's shortest round-trip formatting, so reading back is exact.
pub fn write_csv<'a, W: Write>(mut w: W, trajs: impl IntoIterator<Item = &'a Trajectory>) -> Result<()> {
    for t in trajs {
        for (i, p) in t.points().iter().enumerate() {
            match p.t {
                Some(ts) => writeln!(w, "{},{},{},{},{}", t.label(), i + 1, p.lon, p.lat, ts)?,
                None => writeln!(w, "{},{},{},{}", t.label(), i + 1, p.lon, p.lat)?,
            }
        }
    }
    Ok(())
}
