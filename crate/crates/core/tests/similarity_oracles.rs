//! Distances and representative scoring checked against brute-force
//! enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subtraj::similarity::{best_slice, best_slice_prefix, dtw, edr, erp, exact_s, SliceMatch};
use subtraj::{Metric, MetricKind, Point, SimTransform, TrajId};

fn random_points(rng: &mut ChaCha8Rng, n: usize, integer: bool) -> Vec<Point> {
    (0..n)
        .map(|_| {
            if integer {
                Point::new(rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64)
            } else {
                Point::new(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0))
            }
        })
        .collect()
}

fn d(a: &Point, b: &Point) -> f64 {
    (a.lon - b.lon).hypot(a.lat - b.lat)
}

/// Minimum over every monotone warping path, enumerated explicitly.
fn dtw_paths(a: &[Point], b: &[Point]) -> f64 {
    fn go(a: &[Point], b: &[Point], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + d(&a[i], &b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            go(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            go(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            go(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Every edit script (substitute / delete / insert) from the front.
fn edit_scripts(a: &[Point], b: &[Point], sub: &dyn Fn(&Point, &Point) -> f64, gap: &dyn Fn(&Point) -> f64) -> f64 {
    match (a.split_first(), b.split_first()) {
        (None, None) => 0.0,
        (Some((p, ra)), None) => gap(p) + edit_scripts(ra, b, sub, gap),
        (None, Some((q, rb))) => gap(q) + edit_scripts(a, rb, sub, gap),
        (Some((p, ra)), Some((q, rb))) => {
            let s = sub(p, q) + edit_scripts(ra, rb, sub, gap);
            let x = gap(p) + edit_scripts(ra, b, sub, gap);
            let y = gap(q) + edit_scripts(a, rb, sub, gap);
            s.min(x).min(y)
        }
    }
}

#[test]
fn dtw_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let a = {
            let n = rng.gen_range(1..6);
            random_points(&mut rng, n, false)
        };
        let b = {
            let n = rng.gen_range(1..6);
            random_points(&mut rng, n, false)
        };
        let got = dtw(&a, &b).unwrap();
        assert!((got - dtw_paths(&a, &b)).abs() < 1e-9);
        assert!((got - dtw(&b, &a).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn edr_matches_script_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1.0;
    for _ in 0..300 {
        let a = {
            let n = rng.gen_range(0..6);
            random_points(&mut rng, n, false)
        };
        let b = {
            let n = rng.gen_range(0..6);
            random_points(&mut rng, n, false)
        };
        let sub = |p: &Point, q: &Point| {
            if (p.lon - q.lon).abs() <= eps && (p.lat - q.lat).abs() <= eps {
                0.0
            } else {
                1.0
            }
        };
        let want = edit_scripts(&a, &b, &sub, &|_| 1.0);
        assert_eq!(edr(&a, &b, eps) as f64, want);
    }
}

#[test]
fn erp_matches_alignment_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Point::new(1.0, 2.0);
    for _ in 0..300 {
        let a = {
            let n = rng.gen_range(0..5);
            random_points(&mut rng, n, false)
        };
        let b = {
            let n = rng.gen_range(0..5);
            random_points(&mut rng, n, false)
        };
        let want = edit_scripts(&a, &b, &d, &|p| d(p, &g));
        assert!((erp(&a, &b, &g) - want).abs() < 1e-9);
    }
}

/// Every slice scored independently; ties to smaller start, then end.
fn naive_best(q: &[Point], data: &[Point], metric: &Metric) -> SliceMatch {
    let mut best: Option<SliceMatch> = None;
    for a in 0..data.len() {
        for b in a..data.len() {
            let dist = metric.distance(q, &data[a..=b]).unwrap();
            if best.is_none_or(|x| dist < x.distance) {
                best = Some(SliceMatch { distance: dist, start: a, end: b });
            }
        }
    }
    best.unwrap()
}

fn metrics() -> [Metric; 3] {
    [Metric::dtw(), Metric::edr(0.8), Metric::erp(Point::new(0.5, 0.5))]
}

#[test]
fn exact_s_matches_naive_slices_exhaustively() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in 1..=8 {
        for n in 1..=12 {
            for rep in 0..6 {
                let integer = rep % 2 == 0;
                let q = random_points(&mut rng, m, integer);
                let data = random_points(&mut rng, n, integer);
                for metric in metrics() {
                    let want = naive_best(&q, &data, &metric);
                    assert_eq!(best_slice(&q, &data, &metric).unwrap(), want, "{:?} m={m} n={n}", metric.kind);
                    assert_eq!(best_slice_prefix(&q, &data, &metric).unwrap(), want, "{:?} m={m} n={n}", metric.kind);
                }
            }
        }
    }
}

#[test]
fn exact_s_score_dominates_every_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let q = {
            let n = rng.gen_range(1..7);
            random_points(&mut rng, n, false)
        };
        let data = {
            let n = rng.gen_range(1..11);
            random_points(&mut rng, n, false)
        };
        for metric in metrics() {
            let r = exact_s(&q, &data, TrajId(7), &metric, SimTransform::Reciprocal).unwrap();
            let again = exact_s(&q, &data, TrajId(7), &metric, SimTransform::Reciprocal).unwrap();
            assert_eq!(r, again);
            for a in 0..data.len() {
                for b in a..data.len() {
                    let s = SimTransform::Reciprocal.apply(metric.distance(&q, &data[a..=b]).unwrap(), q.len());
                    assert!(r.score >= s);
                }
            }
            let slice = &data[r.best.start..=r.best.end];
            assert_eq!(SimTransform::Reciprocal.apply(metric.distance(&q, slice).unwrap(), q.len()), r.score);
            assert_eq!(r.best.traj, TrajId(7));
            if metric.kind == MetricKind::Edr {
                assert_eq!(r.distance.fract(), 0.0);
            }
        }
    }
}

#[test]
fn sim_transform_is_strictly_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in [SimTransform::Reciprocal, SimTransform::Exponential] {
        for _ in 0..1000 {
            let m = rng.gen_range(1..100);
            let x: f64 = rng.gen_range(0.0..50.0);
            let y: f64 = rng.gen_range(0.0..50.0);
            if x < y {
                assert!(t.apply(x, m) > t.apply(y, m));
            }
            let s = t.apply(x, m);
            assert!(s > 0.0 && s <= 1.0);
        }
    }
}
