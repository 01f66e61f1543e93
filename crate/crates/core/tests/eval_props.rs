use proptest::prelude::*;
use proptest::sample::subsequence;
use subtraj::eval::{
    ground_truth, hr_k, r10_at_50, rr, run_benchmark, synth_corpus, two_cluster_corpus, write_dat, write_metrics_csv,
    write_summary_csv, Guard, Method, SynthSpec,
};
use subtraj::{Config, Error, ScorerRegistry, TrajId};

fn ids(v: &[u32]) -> Vec<TrajId> {
    v.iter().copied().map(TrajId).collect()
}

fn ranking(n: u32) -> Vec<TrajId> {
    (0..n).map(TrajId).collect()
}

proptest! {
    #[test]
    fn hr_ignores_order_within_the_prefix(picks in subsequence((0u32..40).collect::<Vec<_>>(), 10), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let truth = ranking(40);
        let pred = ids(&picks);
        let mut shuffled = pred.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = hr_k(&pred, &truth, 10).unwrap();
        prop_assert_eq!(a, hr_k(&shuffled, &truth, 10).unwrap());
        prop_assert_eq!(rr(&pred, &truth).unwrap(), rr(&shuffled, &truth).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn rr_grows_when_a_prediction_sinks(picks in subsequence((0u32..60).collect::<Vec<_>>(), 1..10), which in any::<prop::sample::Index>()) {
        let truth = ranking(60);
        let pred = ids(&picks);
        let i = which.index(pred.len());
        // Replace one id by the best-ranked id that is worse than it and unused.
        let worse = (pred[i].0 + 1..60).find(|x| !picks.contains(x));
        if let Some(w) = worse {
            let mut sunk = pred.clone();
            sunk[i] = TrajId(w);
            prop_assert!(rr(&sunk, &truth).unwrap() > rr(&pred, &truth).unwrap());
        }
        let v = rr(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn perfect_predictions_score_perfectly(k in 1usize..30, extra in 0u32..30) {
        let truth = ranking(k as u32 + extra);
        prop_assert_eq!(hr_k(&truth[..k], &truth, k).unwrap(), 1.0);
        prop_assert_eq!(rr(&truth[..k], &truth).unwrap(), 0.0);
    }
}

#[test]
fn r10_at_50_counts_the_true_top_ten_only() {
    let truth = ranking(100);
    let pred: Vec<TrajId> = (5..55).map(TrajId).collect();
    assert_eq!(r10_at_50(&pred, &truth[..10], 100).unwrap(), 0.5);
    assert!(r10_at_50(&pred[..49], &truth[..10], 100).is_err());
    assert_eq!(r10_at_50(&truth[..20], &truth[..10], 20).unwrap(), 1.0);
}

#[test]
fn truth_guard_refuses_large_stores_unless_forced() {
    let c = two_cluster_corpus(10, 2, 1).unwrap();
    let cfg = Config::new(0.0003);
    let scorer = ScorerRegistry::default().resolve(&cfg).unwrap();
    let tight = Guard { cap: 5, force: false };
    assert!(matches!(ground_truth(&c.store, &c.queries, &cfg, &scorer, tight), Err(Error::Guard(_))));
    let forced = Guard { cap: 5, force: true };
    let t = ground_truth(&c.store, &c.queries, &cfg, &scorer, forced).unwrap();
    assert!(t.iter().all(|g| g.ranking.len() == 20));
}

fn report_bytes(seed: u64) -> Vec<u8> {
    let mut spec = SynthSpec::new(60, 4, seed);
    spec.len_range = (10, 30);
    spec.query_len_range = (5, 10);
    let c = synth_corpus(&spec).unwrap();
    let mut cfg = Config::new(0.0003);
    cfg.xi = 5;
    cfg.seed = seed;
    let reg = ScorerRegistry::default();
    let report = run_benchmark(&c.store, &c.queries, &Method::with_ablations(&cfg), &[5, 10], &reg, Guard::default()).unwrap();
    let mut out = Vec::new();
    write_metrics_csv(&mut out, &report.rows, false).unwrap();
    write_summary_csv(&mut out, &report.summary, false).unwrap();
    let rows: Vec<Vec<f64>> = report.summary.iter().map(|s| vec![s.k as f64, s.hr, s.rr]).collect();
    write_dat(&mut out, &["k", "hr", "rr"], &rows).unwrap();
    out
}

#[test]
fn seeded_reports_are_byte_identical() {
    let a = report_bytes(17);
    assert_eq!(a, report_bytes(17));
    assert_ne!(a, report_bytes(18));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("query_id,method,k,hr,rr,r10_50,time_ms\n"));
    for method in ["exhaustive", "gtrss", "no-gari", "no-random", "no-record"] {
        assert!(text.contains(&format!("\n{method},5,4,")), "summary row for {method}");
    }
}
