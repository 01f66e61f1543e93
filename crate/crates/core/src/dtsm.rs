//! Most-similar subtrajectory pair between two data trajectories.
//!
//! Points are compared through a ±1 match matrix (`+1` when the pair lies
//! within `alpha`). An alignment starts on a matched pair, charged `+2`,
//! and then walks forward through the matrix. A walk state is the pair
//! most recently charged; from state `(a, b)` the four pairs
//!
//! ```text
//! P11 = (a, b)    P12 = (a, b+1)
//! P21 = (a+1, b)  P22 = (a+1, b+1)
//! ```
//!
//! select one of six conditions:
//!
//! | cond | P11 | P12 | P21 | P22 | choices (cost -> next state)            |
//! |------|-----|-----|-----|-----|-----------------------------------------|
//! | C1   | +   |     |     |     | `sub(P22)` -> P22                       |
//! | C2   | -   | +   | -   |     | `sub(P12) + 1` -> P12                   |
//! | C3   | -   | -   | +   |     | `sub(P21) + 1` -> P21                   |
//! | C4   | -   | +   | +   |     | C2 or C3 choice                         |
//! | C5   | -   | -   | -   | +   | `sub(P22)` -> P22                       |
//! | C6   | -   | -   | -   | -   | `sub(P12) + 1` -> P12, `sub(P21) + 1` -> P21 |
//!
//! where `sub` is `+2` for a matched pair and `-2` otherwise, and the `+1`
//! cancels the earlier penalty of the point being re-paired. Pairs outside
//! the matrix count as unmatched; a choice whose target is outside the
//! matrix is dropped. The walk may stop at any state, so the continuation
//! value is `V(a, b) = max(0, max_choice(cost + V(next)))`. Advances move
//! strictly forward, so no point is ever matched twice.
//!
//! Starts on unmatched pairs are skipped: their walk can only reach a
//! matched state after paying at least as much as it gains on the way, so
//! starting fresh at that state is never worse.

use crate::error::{arg, Result};
use crate::model::{Ground, Point};
use crate::spatial::Mbr;

/// Binary point-correspondence matrix, row-major, `true` meaning `+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl MatchMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                cells.push(f(i, j));
            }
        }
        MatchMatrix { rows, cols, cells }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `+1` / `-1` entry. Panics when out of range.
    pub fn get(&self, i: usize, j: usize) -> i8 {
        if self.is_match(i, j) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn is_match(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.cols + j]
    }

    /// Out-of-range pairs read as unmatched.
    #[inline]
    pub fn matched(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols && self.cells[i * self.cols + j]
    }

    #[inline]
    fn in_range(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols
    }

    pub fn match_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

pub fn build_match_matrix(d1: &[Point], d2: &[Point], alpha: f64, ground: Ground) -> MatchMatrix {
    MatchMatrix::from_fn(d1.len(), d2.len(), |i, j| ground.within(&d1[i], &d2[j], alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub cost: i32,
    pub next: (usize, usize),
}

/// At most two choices; unused slots are `None`.
pub type Choices = [Option<Step>; 2];

#[inline]
fn subcost(m: &MatchMatrix, i: usize, j: usize) -> i32 {
    if m.matched(i, j) {
        2
    } else {
        -2
    }
}

/// Condition at state `(a, b)` and the choices it allows, with choices
/// targeting pairs outside the matrix removed.
pub fn step_cost_and_advance(a: usize, b: usize, m: &MatchMatrix) -> (Condition, Choices) {
    let p11 = m.matched(a, b);
    let p12 = m.matched(a, b + 1);
    let p21 = m.matched(a + 1, b);
    let p22 = m.matched(a + 1, b + 1);

    let step = |cost: i32, i: usize, j: usize| m.in_range(i, j).then_some(Step { cost, next: (i, j) });
    let diag = || step(subcost(m, a + 1, b + 1), a + 1, b + 1);
    let right = || step(subcost(m, a, b + 1) + 1, a, b + 1);
    let down = || step(subcost(m, a + 1, b) + 1, a + 1, b);

    match (p11, p12, p21, p22) {
        (true, ..) => (Condition::C1, [diag(), None]),
        (false, true, false, _) => (Condition::C2, [right(), None]),
        (false, false, true, _) => (Condition::C3, [down(), None]),
        (false, true, true, _) => (Condition::C4, [right(), down()]),
        (false, false, false, true) => (Condition::C5, [diag(), None]),
        (false, false, false, false) => (Condition::C6, [right(), down()]),
    }
}

/// Continuation values for every state, filled bottom-up. `end` holds the
/// lexicographically smallest stopping state among optimal walks, and
/// `next` the chosen successor (`None` = stop).
pub struct ContinuationTable {
    cols: usize,
    value: Vec<i32>,
    end: Vec<(u32, u32)>,
    next: Vec<Option<(u32, u32)>>,
}

impl ContinuationTable {
    pub fn build(m: &MatchMatrix) -> Self {
        let (rows, cols) = (m.rows, m.cols);
        let n = rows * cols;
        let mut t = ContinuationTable { cols, value: vec![0; n], end: vec![(0, 0); n], next: vec![None; n] };
        for a in (0..rows).rev() {
            for b in (0..cols).rev() {
                let idx = a * cols + b;
                let mut best_v = 0;
                let mut best_end = (a as u32, b as u32);
                let mut best_next = None;
                let (_, choices) = step_cost_and_advance(a, b, m);
                for s in choices.into_iter().flatten() {
                    let ni = s.next.0 * cols + s.next.1;
                    let v = s.cost + t.value[ni];
                    let e = t.end[ni];
                    if v > best_v || (v == best_v && e < best_end) {
                        best_v = v;
                        best_end = e;
                        best_next = Some((s.next.0 as u32, s.next.1 as u32));
                    }
                }
                t.value[idx] = best_v;
                t.end[idx] = best_end;
                t.next[idx] = best_next;
            }
        }
        t
    }

    #[inline]
    pub fn value(&self, a: usize, b: usize) -> i32 {
        self.value[a * self.cols + b]
    }

    pub fn end(&self, a: usize, b: usize) -> (usize, usize) {
        let (k, l) = self.end[a * self.cols + b];
        (k as usize, l as usize)
    }

    /// States visited by the optimal walk from `(a, b)`, including both ends.
    pub fn trace(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        let mut path = vec![(a, b)];
        let mut cur = (a, b);
        while let Some((i, j)) = self.next[cur.0 * self.cols + cur.1] {
            cur = (i as usize, j as usize);
            path.push(cur);
        }
        path
    }
}

/// `V(a, b)`: best extra score obtainable after state `(a, b)`.
pub fn best_continuation(a: usize, b: usize, m: &MatchMatrix) -> Result<i32> {
    if a >= m.rows || b >= m.cols {
        return arg(format!("state ({a}, {b}) outside a {}x{} matrix", m.rows, m.cols));
    }
    Ok(ContinuationTable::build(m).value(a, b))
}

/// Inclusive 0-based index range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DtsmResult {
    pub score: u32,
    /// Most similar subtrajectory pair `(in d1, in d2)`.
    pub pair: Option<(Span, Span)>,
    /// Walk states from the start pair to the end pair.
    pub path: Vec<(usize, usize)>,
}

impl DtsmResult {
    fn empty() -> Self {
        DtsmResult { score: 0, pair: None, path: Vec::new() }
    }
}

/// Maximum subtrajectory-pair score between `d1` and `d2` for threshold
/// `alpha`. Ties go to the smallest start `(i, j)`, then the smallest end.
pub fn dtsm(d1: &[Point], d2: &[Point], alpha: f64, ground: Ground) -> Result<DtsmResult> {
    if d1.is_empty() || d2.is_empty() {
        return arg("dtsm requires non-empty trajectories");
    }
    if !(alpha > 0.0) {
        return arg("alpha must be positive");
    }
    // Cheap reject: no pair can be within alpha when the boxes are farther apart.
    if ground == Ground::Planar && Mbr::of_points(d1).min_dist(&Mbr::of_points(d2)) > alpha {
        return Ok(DtsmResult::empty());
    }
    let m = build_match_matrix(d1, d2, alpha, ground);
    Ok(dtsm_matrix(&m))
}

/// Score only, without the matched pair. Uses two matrix rows of memory, so
/// it is the variant for bulk index construction.
pub fn dtsm_score(d1: &[Point], d2: &[Point], alpha: f64, ground: Ground) -> Result<u32> {
    if d1.is_empty() || d2.is_empty() {
        return arg("dtsm requires non-empty trajectories");
    }
    if !(alpha > 0.0) {
        return arg("alpha must be positive");
    }
    if ground == Ground::Planar && Mbr::of_points(d1).min_dist(&Mbr::of_points(d2)) > alpha {
        return Ok(0);
    }
    let cols = d2.len();
    // One trailing sentinel column reads as unmatched / out of range.
    let mut cur = vec![false; cols + 1];
    let mut below = vec![false; cols + 1];
    let mut vcur = vec![0i32; cols + 1];
    let mut vbelow = vec![0i32; cols + 1];
    let mut best = 0i32;
    for a in (0..d1.len()).rev() {
        let last_row = a + 1 == d1.len();
        let p = &d1[a];
        for (b, q) in d2.iter().enumerate() {
            cur[b] = ground.within(p, q, alpha);
        }
        for b in (0..cols).rev() {
            let last_col = b + 1 == cols;
            let (p11, p12, p21, p22) = (cur[b], cur[b + 1], below[b], below[b + 1]);
            let sub = |m: bool| if m { 2 } else { -2 };
            let diag = (!last_row && !last_col).then(|| sub(p22) + vbelow[b + 1]);
            let right = (!last_col).then(|| sub(p12) + 1 + vcur[b + 1]);
            let down = (!last_row).then(|| sub(p21) + 1 + vbelow[b]);
            let pick = match (p11, p12, p21, p22) {
                (true, ..) => diag,
                (false, true, false, _) => right,
                (false, false, true, _) => down,
                (false, false, false, true) => diag,
                _ => right.max(down),
            };
            let v = pick.unwrap_or(0).max(0);
            vcur[b] = v;
            if p11 {
                best = best.max(2 + v);
            }
        }
        std::mem::swap(&mut cur, &mut below);
        std::mem::swap(&mut vcur, &mut vbelow);
    }
    Ok(best as u32)
}

/// Score from a prebuilt match matrix.
pub fn dtsm_matrix(m: &MatchMatrix) -> DtsmResult {
    if m.match_count() == 0 {
        return DtsmResult::empty();
    }
    let table = ContinuationTable::build(m);
    let mut best: Option<(i32, usize, usize)> = None;
    for i in 0..m.rows {
        for j in 0..m.cols {
            if !m.is_match(i, j) {
                continue;
            }
            let s = 2 + table.value(i, j);
            if best.is_none_or(|(b, ..)| s > b) {
                best = Some((s, i, j));
            }
        }
    }
    let (score, i, j) = best.expect("at least one matched pair");
    let (k, l) = table.end(i, j);
    DtsmResult {
        score: score as u32,
        pair: Some((Span { start: i, end: k }, Span { start: j, end: l })),
        path: table.trace(i, j),
    }
}

/// Re-scores a walk: every transition must be a legal choice from the
/// preceding state. Returns `None` for an illegal walk.
pub fn replay_path(m: &MatchMatrix, path: &[(usize, usize)]) -> Option<i32> {
    let (&(i, j), rest) = path.split_first()?;
    if !m.matched(i, j) {
        return None;
    }
    let mut total = 2;
    let mut cur = (i, j);
    for &next in rest {
        let (_, choices) = step_cost_and_advance(cur.0, cur.1, m);
        let step = choices.into_iter().flatten().find(|s| s.next == next)?;
        total += step.cost;
        cur = next;
    }
    Some(total)
}

/// Largest trajectory length the exhaustive oracle accepts.
pub const ORACLE_MAX_LEN: usize = 12;

/// Exhaustive reference: enumerates every walk from every start pair with
/// no memoization and no pruning. Conditions are re-derived here from the
/// raw matrix rather than through [`step_cost_and_advance`].
pub fn dtsm_oracle(d1: &[Point], d2: &[Point], alpha: f64, ground: Ground) -> Result<DtsmResult> {
    if d1.is_empty() || d2.is_empty() {
        return arg("dtsm requires non-empty trajectories");
    }
    if d1.len() > ORACLE_MAX_LEN || d2.len() > ORACLE_MAX_LEN {
        return arg(format!("oracle is limited to trajectories of at most {ORACLE_MAX_LEN} points"));
    }
    let m = build_match_matrix(d1, d2, alpha, ground);
    Ok(oracle_matrix(&m))
}

pub fn oracle_matrix(m: &MatchMatrix) -> DtsmResult {
    let mut best: Option<(i32, (usize, usize, usize, usize), Vec<(usize, usize)>)> = None;
    for i in 0..m.rows {
        for j in 0..m.cols {
            // A start on an unmatched pair scores 0 and is never reported.
            if !m.is_match(i, j) {
                continue;
            }
            let mut path = vec![(i, j)];
            enumerate_walks(m, &mut path, 2, &mut |score, path| {
                let &(k, l) = path.last().unwrap();
                let key = (i, j, k, l);
                let better = match &best {
                    None => true,
                    Some((s, bk, _)) => score > *s || (score == *s && key < *bk),
                };
                if better {
                    best = Some((score, key, path.to_vec()));
                }
            });
        }
    }
    match best {
        None => DtsmResult::empty(),
        Some((score, (i, j, k, l), path)) => {
            DtsmResult { score: score.max(0) as u32, pair: Some((Span { start: i, end: k }, Span { start: j, end: l })), path }
        }
    }
}

/// Best score over all walks from `(i, j)` under the reset rule: an
/// unmatched start scores 0.
pub fn oracle_best_from(m: &MatchMatrix, i: usize, j: usize) -> i32 {
    if !m.matched(i, j) {
        return 0;
    }
    oracle_best_from_unreset(m, i, j)
}

/// Best score over all walks from `(i, j)` charging the start's own
/// `±2` instead of resetting unmatched starts to 0.
pub fn oracle_best_from_unreset(m: &MatchMatrix, i: usize, j: usize) -> i32 {
    let mut best = i32::MIN;
    let mut path = vec![(i, j)];
    enumerate_walks(m, &mut path, subcost(m, i, j), &mut |s, _| best = best.max(s));
    best
}

fn enumerate_walks(m: &MatchMatrix, path: &mut Vec<(usize, usize)>, score: i32, visit: &mut dyn FnMut(i32, &[(usize, usize)])) {
    visit(score, path);
    let (a, b) = *path.last().unwrap();
    let sim = |i: usize, j: usize| i < m.rows && j < m.cols && m.get(i, j) == 1;
    let sub = |i: usize, j: usize| if sim(i, j) { 2 } else { -2 };

    let mut branches: Vec<(i32, usize, usize)> = Vec::with_capacity(2);
    let c1 = sim(a, b);
    let c2 = !sim(a, b) && sim(a, b + 1) && !sim(a + 1, b);
    let c3 = !sim(a, b) && !sim(a, b + 1) && sim(a + 1, b);
    let c4 = !sim(a, b) && sim(a, b + 1) && sim(a + 1, b);
    let c5 = !sim(a, b) && !sim(a, b + 1) && !sim(a + 1, b) && sim(a + 1, b + 1);
    let c6 = !sim(a, b) && !sim(a, b + 1) && !sim(a + 1, b) && !sim(a + 1, b + 1);
    if c1 || c5 {
        branches.push((sub(a + 1, b + 1), a + 1, b + 1));
    }
    if c2 || c4 || c6 {
        branches.push((sub(a, b + 1) + 1, a, b + 1));
    }
    if c3 || c4 || c6 {
        branches.push((sub(a + 1, b) + 1, a + 1, b));
    }
    for (cost, i, j) in branches {
        if i < m.rows && j < m.cols {
            path.push((i, j));
            enumerate_walks(m, path, score + cost, visit);
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> MatchMatrix {
        let r: Vec<Vec<bool>> = rows.iter().map(|s| s.chars().map(|c| c == '+').collect()).collect();
        MatchMatrix::from_fn(r.len(), r[0].len(), |i, j| r[i][j])
    }

    fn line(n: usize, y: f64) -> Vec<Point> {
        (0..n).map(|i| Point::new(i as f64, y)).collect()
    }

    #[test]
    fn match_matrix_examples() {
        let t = line(5, 0.0);
        let m = build_match_matrix(&t, &t, 0.5, Ground::Planar);
        for i in 0..5 {
            assert_eq!(m.get(i, i), 1);
        }
        let far = line(5, 100.0);
        let m = build_match_matrix(&t, &far, 0.5, Ground::Planar);
        assert_eq!(m.match_count(), 0);
    }

    #[test]
    fn step_examples() {
        let all = grid(&["+++", "+++", "+++"]);
        let (c, ch) = step_cost_and_advance(0, 0, &all);
        assert_eq!(c, Condition::C1);
        assert_eq!(ch, [Some(Step { cost: 2, next: (1, 1) }), None]);

        // P11 -, P12 +, P21 -
        let c2 = grid(&["-+", "--"]);
        let (c, ch) = step_cost_and_advance(0, 0, &c2);
        assert_eq!(c, Condition::C2);
        assert_eq!(ch[0], Some(Step { cost: 3, next: (0, 1) }));

        let c6 = grid(&["--", "--"]);
        let (c, ch) = step_cost_and_advance(0, 0, &c6);
        assert_eq!(c, Condition::C6);
        assert_eq!(ch, [Some(Step { cost: -1, next: (0, 1) }), Some(Step { cost: -1, next: (1, 0) })]);

        let c5 = grid(&["--", "-+"]);
        assert_eq!(step_cost_and_advance(0, 0, &c5).0, Condition::C5);
        let c4 = grid(&["-+", "+-"]);
        let (c, ch) = step_cost_and_advance(0, 0, &c4);
        assert_eq!(c, Condition::C4);
        assert_eq!(ch.iter().flatten().count(), 2);
        let c3 = grid(&["--", "+-"]);
        assert_eq!(step_cost_and_advance(0, 0, &c3).1[0], Some(Step { cost: 3, next: (1, 0) }));
    }

    #[test]
    fn continuation_examples() {
        let m = grid(&["+-", "-+"]);
        assert_eq!(best_continuation(1, 1, &m).unwrap(), 0);
        for len in 1..8 {
            let m = MatchMatrix::from_fn(len, len, |_, _| true);
            assert_eq!(best_continuation(0, 0, &m).unwrap(), 2 * (len as i32 - 1));
        }
        let m = grid(&["+---", "----", "----", "----"]);
        assert_eq!(best_continuation(0, 0, &m).unwrap(), 0);
        assert!(best_continuation(4, 0, &m).is_err());
    }

    #[test]
    fn identity_scores_two_per_point() {
        for n in 1..9 {
            let t = line(n, 0.0);
            let r = dtsm(&t, &t, 0.5, Ground::Planar).unwrap();
            assert_eq!(r.score, 2 * n as u32);
            let o = dtsm_oracle(&t, &t, 0.5, Ground::Planar).unwrap();
            assert_eq!(r, o);
        }
    }

    #[test]
    fn disjoint_scores_zero() {
        let r = dtsm(&line(6, 0.0), &line(6, 50.0), 1.0, Ground::Planar).unwrap();
        assert_eq!(r, DtsmResult { score: 0, pair: None, path: vec![] });
        let o = dtsm_oracle(&line(6, 0.0), &line(6, 50.0), 1.0, Ground::Planar).unwrap();
        assert_eq!(o.score, 0);
    }

    #[test]
    fn shared_run_of_four() {
        // d1 = x x pa pb pc pd x x ; d2 = pa pb pc pd y y y y
        let shared = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        let mut d1 = vec![Point::new(-50.0, 10.0), Point::new(-40.0, 10.0)];
        d1.extend(shared.iter().map(|&(x, y)| Point::new(x, y)));
        d1.extend([Point::new(60.0, -10.0), Point::new(70.0, -10.0)]);
        let mut d2: Vec<Point> = shared.iter().map(|&(x, y)| Point::new(x, y)).collect();
        d2.extend((0..4).map(|i| Point::new(30.0 + 10.0 * i as f64, 40.0)));
        let m = build_match_matrix(&d1, &d2, 0.5, Ground::Planar);
        for i in 0..4 {
            assert_eq!(m.get(2 + i, i), 1);
        }
        assert_eq!(m.match_count(), 4);

        let r = dtsm(&d1, &d2, 0.5, Ground::Planar).unwrap();
        assert_eq!(r.score, 8);
        assert_eq!(r.pair, Some((Span { start: 2, end: 5 }, Span { start: 0, end: 3 })));
        assert_eq!(replay_path(&m, &r.path), Some(8));
        assert_eq!(dtsm_oracle(&d1, &d2, 0.5, Ground::Planar).unwrap(), r);
    }

    #[test]
    fn shift_recovers_through_c2() {
        // Diagonal, one extra point on the d2 side, diagonal again.
        let m = grid(&["+----", "-+---", "--+--", "---++", "----+"]);
        let r = dtsm_matrix(&m);
        assert_eq!(r, oracle_matrix(&m));
        assert_eq!(replay_path(&m, &r.path), Some(r.score as i32));
    }

    #[test]
    fn oracle_guard() {
        let t = line(13, 0.0);
        assert!(dtsm_oracle(&t, &t, 0.5, Ground::Planar).is_err());
        assert!(dtsm(&[], &t, 0.5, Ground::Planar).is_err());
        assert!(dtsm(&t, &t, 0.0, Ground::Planar).is_err());
    }

    #[test]
    fn replay_rejects_illegal_walks() {
        let m = grid(&["++", "++"]);
        assert_eq!(replay_path(&m, &[(0, 0), (1, 1)]), Some(4));
        assert_eq!(replay_path(&m, &[(0, 0), (0, 1)]), None);
        assert_eq!(replay_path(&grid(&["-"]), &[(0, 0)]), None);
    }
}
