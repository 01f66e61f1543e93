//! Bounding rectangles, a bulk-loaded R-tree over trajectory MBRs and the
//! uniform grid used to pick representatives.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{arg, Result};
use crate::model::{Point, TrajId, Trajectory, TrajectoryStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mbr {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Mbr {
    pub const EMPTY: Mbr = Mbr { x_min: f64::INFINITY, y_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_max: f64::NEG_INFINITY };

    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Mbr { x_min, y_min, x_max, y_max }
    }

    pub fn of_points(points: &[Point]) -> Self {
        points.iter().fold(Mbr::EMPTY, |m, p| m.expand_point(p.lon, p.lat))
    }

    pub fn is_empty(&self) -> bool {
        self.x_min > self.x_max
    }

    fn expand_point(self, x: f64, y: f64) -> Self {
        Mbr { x_min: self.x_min.min(x), y_min: self.y_min.min(y), x_max: self.x_max.max(x), y_max: self.y_max.max(y) }
    }

    pub fn union(&self, o: &Mbr) -> Mbr {
        Mbr {
            x_min: self.x_min.min(o.x_min),
            y_min: self.y_min.min(o.y_min),
            x_max: self.x_max.max(o.x_max),
            y_max: self.y_max.max(o.y_max),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn intersects(&self, o: &Mbr) -> bool {
        self.x_min <= o.x_max && o.x_min <= self.x_max && self.y_min <= o.y_max && o.y_min <= self.y_max
    }

    /// Smallest distance from `(x, y)` to any point of the rectangle.
    pub fn dist_to_point(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x_min - x).max(0.0).max(x - self.x_max);
        let dy = (self.y_min - y).max(0.0).max(y - self.y_max);
        dx.hypot(dy)
    }

    /// Smallest distance between the two rectangles (0 when they overlap).
    pub fn min_dist(&self, o: &Mbr) -> f64 {
        let dx = (self.x_min - o.x_max).max(0.0).max(o.x_min - self.x_max);
        let dy = (self.y_min - o.y_max).max(0.0).max(o.y_min - self.y_max);
        dx.hypot(dy)
    }
}

pub fn compute_mbr(t: &Trajectory) -> Mbr {
    Mbr::of_points(t.points())
}

pub fn dataset_bounds(store: &TrajectoryStore) -> Result<Mbr> {
    if store.is_empty() {
        return arg("dataset bounds of an empty store");
    }
    Ok(store.iter().fold(Mbr::EMPTY, |m, (_, t)| m.union(&compute_mbr(t))))
}

fn center_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// `M x M` uniform partition of the dataset bounds. Points on the maximum
/// edge fall into the last row/column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub bounds: Mbr,
    pub m: usize,
}

impl Grid {
    pub fn new(bounds: Mbr, m: usize) -> Result<Self> {
        if m == 0 {
            return arg("grid side count must be >= 1");
        }
        if bounds.is_empty() {
            return arg("grid over empty bounds");
        }
        Ok(Grid { bounds, m })
    }

    pub fn cell_w(&self) -> f64 {
        (self.bounds.x_max - self.bounds.x_min) / self.m as f64
    }

    pub fn cell_h(&self) -> f64 {
        (self.bounds.y_max - self.bounds.y_min) / self.m as f64
    }

    fn axis_index(v: f64, lo: f64, width: f64, m: usize) -> usize {
        if !(width > 0.0) {
            return 0;
        }
        let i = ((v - lo) / width).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(m - 1)
        }
    }

    /// `(column, row)` of the cell holding `(x, y)`.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        (
            Self::axis_index(x, self.bounds.x_min, self.cell_w(), self.m),
            Self::axis_index(y, self.bounds.y_min, self.cell_h(), self.m),
        )
    }

    pub fn cell_rect(&self, cell: (usize, usize)) -> Mbr {
        let (w, h) = (self.cell_w(), self.cell_h());
        let x0 = self.bounds.x_min + w * cell.0 as f64;
        let y0 = self.bounds.y_min + h * cell.1 as f64;
        let x1 = if cell.0 + 1 == self.m { self.bounds.x_max } else { x0 + w };
        let y1 = if cell.1 + 1 == self.m { self.bounds.y_max } else { y0 + h };
        Mbr::new(x0, y0, x1, y1)
    }

    pub fn cell_center(&self, cell: (usize, usize)) -> (f64, f64) {
        self.cell_rect(cell).center()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m).flat_map(move |i| (0..self.m).map(move |j| (i, j)))
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(Vec<(Mbr, TrajId)>),
    Inner(Vec<(Mbr, Box<Node>)>),
}

/// Static R-tree over `(Mbr, TrajId)` entries, bulk-loaded with
/// sort-tile-recursive packing.
#[derive(Clone, Debug)]
pub struct RTree {
    root: Option<(Mbr, Node)>,
    len: usize,
    fanout: usize,
}

pub const DEFAULT_FANOUT: usize = 16;

impl RTree {
    pub fn bulk_load(entries: Vec<(Mbr, TrajId)>, fanout: usize) -> Self {
        let fanout = fanout.max(2);
        let len = entries.len();
        if entries.is_empty() {
            return RTree { root: None, len, fanout };
        }
        let mut level: Vec<(Mbr, Node)> =
            str_pack(entries, fanout).into_iter().map(|group| (bound(group.iter().map(|e| &e.0)), Node::Leaf(group))).collect();
        while level.len() > 1 {
            level = str_pack(level, fanout)
                .into_iter()
                .map(|group| {
                    let mbr = bound(group.iter().map(|e| &e.0));
                    (mbr, Node::Inner(group.into_iter().map(|(m, n)| (m, Box::new(n))).collect()))
                })
                .collect();
        }
        RTree { root: level.pop(), len, fanout }
    }

    pub fn from_store(store: &TrajectoryStore) -> Self {
        Self::bulk_load(store.iter().map(|(id, t)| (compute_mbr(t), id)).collect(), DEFAULT_FANOUT)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    /// Entries whose MBR intersects `rect`, sorted by id.
    pub fn range(&self, rect: &Mbr) -> Vec<(Mbr, TrajId)> {
        let mut out = Vec::new();
        if let Some((m, root)) = &self.root {
            if m.intersects(rect) {
                collect_range(root, rect, &mut out);
            }
        }
        out.sort_by_key(|e| e.1);
        out
    }

    /// The `k` entries whose MBR centers are closest to the center of
    /// `probe`, skipping `exclude`. Ties break by id.
    pub fn nearest_k(&self, probe: &Mbr, k: usize, exclude: Option<TrajId>) -> Vec<TrajId> {
        let Some((root_mbr, root)) = &self.root else { return Vec::new() };
        if k == 0 {
            return Vec::new();
        }
        let c = probe.center();
        let mut heap = BinaryHeap::new();
        heap.push(Item { d: root_mbr.dist_to_point(c.0, c.1), kind: ItemKind::Node(root) });
        let mut found: Vec<(f64, TrajId)> = Vec::new();
        while let Some(Item { d, kind }) = heap.pop() {
            if found.len() >= k && d > found[k - 1].0 {
                break;
            }
            match kind {
                ItemKind::Entry(id) => {
                    found.push((d, id));
                    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                }
                ItemKind::Node(Node::Leaf(entries)) => {
                    for (m, id) in entries {
                        if Some(*id) != exclude {
                            heap.push(Item { d: center_dist(m.center(), c), kind: ItemKind::Entry(*id) });
                        }
                    }
                }
                ItemKind::Node(Node::Inner(children)) => {
                    for (m, child) in children {
                        heap.push(Item { d: m.dist_to_point(c.0, c.1), kind: ItemKind::Node(child) });
                    }
                }
            }
        }
        found.truncate(k);
        found.into_iter().map(|(_, id)| id).collect()
    }
}

fn bound<'a>(it: impl Iterator<Item = &'a Mbr>) -> Mbr {
    it.fold(Mbr::EMPTY, |a, m| a.union(m))
}

fn str_pack<T>(mut items: Vec<(Mbr, T)>, fanout: usize) -> Vec<Vec<(Mbr, T)>> {
    let n = items.len();
    let leaves = n.div_ceil(fanout);
    let slices = (leaves as f64).sqrt().ceil().max(1.0) as usize;
    let per_slice = slices * fanout;
    items.sort_by(|a, b| a.0.center().0.total_cmp(&b.0.center().0));
    let mut groups = Vec::with_capacity(leaves);
    let mut rest = items;
    while !rest.is_empty() {
        let tail = rest.split_off(per_slice.min(rest.len()));
        let mut slice = std::mem::replace(&mut rest, tail);
        slice.sort_by(|a, b| a.0.center().1.total_cmp(&b.0.center().1));
        while !slice.is_empty() {
            let tail = slice.split_off(fanout.min(slice.len()));
            groups.push(std::mem::replace(&mut slice, tail));
        }
    }
    groups
}

fn collect_range(node: &Node, rect: &Mbr, out: &mut Vec<(Mbr, TrajId)>) {
    match node {
        Node::Leaf(entries) => out.extend(entries.iter().filter(|e| e.0.intersects(rect)).copied()),
        Node::Inner(children) => {
            for (m, child) in children {
                if m.intersects(rect) {
                    collect_range(child, rect, out);
                }
            }
        }
    }
}

enum ItemKind<'a> {
    Node(&'a Node),
    Entry(TrajId),
}

struct Item<'a> {
    d: f64,
    kind: ItemKind<'a>,
}

impl PartialEq for Item<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Item<'_> {}
impl PartialOrd for Item<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item<'_> {
    // Min-heap on distance.
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d)
    }
}

/// Linear-scan equivalent of [`RTree::nearest_k`].
pub fn nearest_k_scan(entries: &[(Mbr, TrajId)], probe: &Mbr, k: usize, exclude: Option<TrajId>) -> Vec<TrajId> {
    let c = probe.center();
    let mut all: Vec<(f64, TrajId)> =
        entries.iter().filter(|e| Some(e.1) != exclude).map(|e| (center_dist(e.0.center(), c), e.1)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|e| e.1).collect()
}

/// The trajectory whose MBR center lies in `cell` and is closest to the
/// cell center; ties by id. Candidates come from an R-tree range query
/// (a centered MBR must intersect its cell).
pub fn cell_representative(grid: &Grid, rtree: &RTree, cell: (usize, usize)) -> Option<TrajId> {
    let rect = grid.cell_rect(cell);
    let cc = grid.cell_center(cell);
    // Slack for centers that round into the cell from just outside its rectangle.
    let pad = 1e-9 * (grid.cell_w() + grid.cell_h() + 1.0);
    let probe = Mbr::new(rect.x_min - pad, rect.y_min - pad, rect.x_max + pad, rect.y_max + pad);
    rtree
        .range(&probe)
        .into_iter()
        .filter(|(m, _)| {
            let (x, y) = m.center();
            grid.cell_of(x, y) == cell
        })
        .map(|(m, id)| (center_dist(m.center(), cc), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Linear-scan equivalent of [`cell_representative`].
pub fn cell_representative_scan(grid: &Grid, entries: &[(Mbr, TrajId)], cell: (usize, usize)) -> Option<TrajId> {
    let cc = grid.cell_center(cell);
    entries
        .iter()
        .filter(|(m, _)| {
            let (x, y) = m.center();
            grid.cell_of(x, y) == cell
        })
        .map(|(m, id)| (center_dist(m.center(), cc), *id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(xy: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_xy("t", xy).unwrap()
    }

    #[test]
    fn mbr_examples() {
        let m = compute_mbr(&traj(&[(2.0, 3.0), (2.0, 3.0)]));
        assert_eq!(m, Mbr::new(2.0, 3.0, 2.0, 3.0));
        assert_eq!(compute_mbr(&traj(&[(0.0, 0.0), (3.0, 4.0)])), Mbr::new(0.0, 0.0, 3.0, 4.0));
    }

    #[test]
    fn bounds_examples() {
        assert!(dataset_bounds(&TrajectoryStore::new()).is_err());
        let a = traj(&[(0.0, 0.0), (1.0, 1.0)]);
        let b = Trajectory::from_xy("b", &[(5.0, -2.0), (6.0, 3.0)]).unwrap();
        let s = TrajectoryStore::from_trajectories([a.clone()]).unwrap();
        assert_eq!(dataset_bounds(&s).unwrap(), compute_mbr(&a));
        let s = TrajectoryStore::from_trajectories([a, b]).unwrap();
        assert_eq!(dataset_bounds(&s).unwrap(), Mbr::new(0.0, -2.0, 6.0, 3.0));
    }

    #[test]
    fn grid_clamps_max_edge() {
        let g = Grid::new(Mbr::new(0.0, 0.0, 10.0, 10.0), 5).unwrap();
        assert_eq!(g.cell_of(10.0, 10.0), (4, 4));
        assert_eq!(g.cell_of(0.0, 0.0), (0, 0));
        assert_eq!(g.cell_of(3.9, 6.0), (1, 3));
        let flat = Grid::new(Mbr::new(1.0, 1.0, 1.0, 4.0), 3).unwrap();
        assert_eq!(flat.cell_of(1.0, 4.0), (0, 2));
    }

    #[test]
    fn representative_examples() {
        let g = Grid::new(Mbr::new(0.0, 0.0, 10.0, 10.0), 2).unwrap();
        let entries = vec![
            (Mbr::new(1.0, 1.0, 2.0, 2.0), TrajId(0)),
            (Mbr::new(2.0, 2.0, 3.0, 3.0), TrajId(1)),
            (Mbr::new(6.0, 6.0, 9.0, 9.0), TrajId(2)),
        ];
        let t = RTree::bulk_load(entries.clone(), 2);
        assert_eq!(cell_representative(&g, &t, (1, 0)), None);
        assert_eq!(cell_representative(&g, &t, (1, 1)), Some(TrajId(2)));
        assert_eq!(cell_representative(&g, &t, (0, 0)), Some(TrajId(1)));
    }

    #[test]
    fn nearest_examples() {
        let entries: Vec<_> = (0..6).map(|i| (Mbr::new(i as f64, 0.0, i as f64 + 1.0, 1.0), TrajId(i))).collect();
        let t = RTree::bulk_load(entries.clone(), 2);
        let mut all = t.nearest_k(&entries[0].0, 5, Some(TrajId(0)));
        all.sort();
        assert_eq!(all, (1..6).map(TrajId).collect::<Vec<_>>());
        assert_eq!(t.nearest_k(&entries[3].0, 1, Some(TrajId(3))), vec![TrajId(2)]);
        assert_eq!(t.nearest_k(&entries[3].0, 100, None).len(), 6);
    }

    fn arb_entries() -> impl Strategy<Value = Vec<(Mbr, TrajId)>> {
        prop::collection::vec((0i32..50, 0i32..50, 0i32..6, 0i32..6), 1..500).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, w, h))| {
                    let (x, y) = (x as f64, y as f64);
                    (Mbr::new(x, y, x + w as f64, y + h as f64), TrajId(i as u32))
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rtree_knn_matches_scan(entries in arb_entries(), k in 1usize..20, probe in 0usize..500, fanout in 2usize..20) {
            let t = RTree::bulk_load(entries.clone(), fanout);
            let p = probe % entries.len();
            let ex = Some(entries[p].1);
            prop_assert_eq!(t.nearest_k(&entries[p].0, k, ex), nearest_k_scan(&entries, &entries[p].0, k, ex));
        }

        #[test]
        fn rtree_range_finds_every_entry(entries in arb_entries()) {
            let t = RTree::bulk_load(entries.clone(), 4);
            for e in &entries {
                prop_assert!(t.range(&e.0).iter().any(|f| f.1 == e.1));
            }
        }

        #[test]
        fn grid_partition_is_total(entries in arb_entries(), m in 1usize..8) {
            let bounds = bound(entries.iter().map(|e| &e.0));
            let g = Grid::new(bounds, m).unwrap();
            let t = RTree::bulk_load(entries.clone(), 8);
            let mut population = 0;
            for cell in g.cells() {
                population += entries.iter().filter(|e| {
                    let (x, y) = e.0.center();
                    g.cell_of(x, y) == cell
                }).count();
                prop_assert_eq!(cell_representative(&g, &t, cell), cell_representative_scan(&g, &entries, cell));
            }
            prop_assert_eq!(population, entries.len());
        }

        #[test]
        fn mbr_is_tight(xy in prop::collection::vec((-100.0..100.0f64, -80.0..80.0f64), 2..30)) {
            let m = compute_mbr(&traj(&xy));
            prop_assert!(xy.iter().all(|&(x, y)| m.contains_point(x, y)));
            prop_assert!(xy.iter().any(|p| p.0 == m.x_min));
            prop_assert!(xy.iter().any(|p| p.0 == m.x_max));
            prop_assert!(xy.iter().any(|p| p.1 == m.y_min));
            prop_assert!(xy.iter().any(|p| p.1 == m.y_max));
        }
    }
}
