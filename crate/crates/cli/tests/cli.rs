use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subtraj"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic corpus plus its ingested store and index.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(two_cluster: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let c = root.join("c");
        if two_cluster {
            ok(&["synth", "--out-dir", s(&c), "--two-cluster", "40", "--n-queries", "6", "--seed", "4"]);
        } else {
            ok(&["synth", "--out-dir", s(&c), "--n", "120", "--n-queries", "6", "--seed", "4"]);
        }
        let f = Fixture { _dir: dir, root };
        ok(&["ingest", "--input", s(&c.join("data.csv")), "--out", s(&f.store()), "--min-len", "2"]);
        ok(&["build", "--store", s(&f.store()), "--index", s(&f.index()), "--alpha", "0.0003", "--xi", "6"]);
        f
    }

    fn store(&self) -> PathBuf {
        self.root.join("store.csv")
    }
    fn index(&self) -> PathBuf {
        self.root.join("index.bin")
    }
    fn queries(&self) -> PathBuf {
        self.root.join("c/queries.csv")
    }
}

#[test]
fn ingest_counts_drops_and_reports_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let store = dir.path().join("store.csv");
    let mut text = String::from("traj_id,seq,lon,lat\n");
    for i in 0..5 {
        text += &format!("a,{i},{}.0,0.0\n", i);
    }
    text += "b,0,0.0,0.0\nb,1,1.0,0.0\n";
    fs::write(&raw, &text).unwrap();
    let out = ok(&["ingest", "--input", s(&raw), "--out", s(&store), "--min-len", "3"]);
    assert!(out.contains("N = 1"), "{out}");
    assert!(out.contains("too short 1"), "{out}");
    assert_eq!(fs::read_to_string(&store).unwrap().lines().count(), 5);

    fs::write(&raw, "a,0,0.0,0.0\na,1,east,0.0\n").unwrap();
    let out = run(&["ingest", "--input", s(&raw), "--out", s(&store)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn rebuilds_are_byte_identical_and_xi_is_clamped() {
    let f = Fixture::new(false);
    let again = f.root.join("again.bin");
    ok(&["build", "--store", s(&f.store()), "--index", s(&again), "--alpha", "0.0003", "--xi", "6", "--threads", "2"]);
    assert_eq!(fs::read(f.index()).unwrap(), fs::read(&again).unwrap());

    let out =
        run(&["build", "--store", s(&f.store()), "--index", s(&again), "--alpha", "0.0003", "--xi", "500", "--kappa-n", "500"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds N - 1"));
}

#[test]
fn query_rows_follow_k() {
    let f = Fixture::new(false);
    let out = ok(&["query", "--index", s(&f.index()), "--store", s(&f.store()), "--queries", s(&f.queries()), "--k", "1"]);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "query,rank,traj_id,start,end,score,visited,hops,ms");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("1")));

    let out = ok(&["query", "--index", s(&f.index()), "--store", s(&f.store()), "--queries", s(&f.queries()), "--k", "4"]);
    assert_eq!(out.lines().count(), 1 + 6 * 4);
}

#[test]
fn no_gari_changes_search_telemetry() {
    let f = Fixture::new(true);
    let (index, store, queries) = (f.index(), f.store(), f.queries());
    let telemetry = |extra: &[&str]| -> Vec<(String, String)> {
        let mut args =
            vec!["query", "--index", s(&index), "--store", s(&store), "--queries", s(&queries), "--k", "1", "--no-timings"];
        args.extend_from_slice(extra);
        ok(&args)
            .lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                (c[6].to_string(), c[7].to_string())
            })
            .collect()
    };
    assert_ne!(telemetry(&[]), telemetry(&["--ablate", "no-gari"]));
}

#[test]
fn query_rejects_a_foreign_or_damaged_index() {
    let f = Fixture::new(false);
    let other = f.root.join("other.csv");
    let text = fs::read_to_string(f.store()).unwrap();
    let first: Vec<&str> = text.lines().take(text.lines().count() - 20).collect();
    fs::write(&other, first.join("\n") + "\n").unwrap();
    let out = run(&["query", "--index", s(&f.index()), "--store", s(&other), "--queries", s(&f.queries())]);
    assert_eq!(out.status.code(), Some(2));

    let mut bytes = fs::read(f.index()).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad = f.root.join("bad.bin");
    fs::write(&bad, &bytes).unwrap();
    let out = run(&["query", "--index", s(&bad), "--store", s(&f.store()), "--queries", s(&f.queries())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn eval_writes_reports_deterministically() {
    let f = Fixture::new(false);
    let a = f.root.join("ra");
    let b = f.root.join("rb");
    for d in [&a, &b] {
        ok(&[
            "eval",
            "--store",
            s(&f.store()),
            "--queries",
            s(&f.queries()),
            "--report-dir",
            s(d),
            "--alpha",
            "0.0003",
            "--xi",
            "6",
            "--ks",
            "5,10",
            "--no-timings",
        ]);
    }
    for name in ["metrics.csv", "summary.csv", "fig9.dat"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    let out = run(&[
        "eval",
        "--store",
        s(&f.store()),
        "--queries",
        s(&f.queries()),
        "--report-dir",
        s(&a),
        "--alpha",
        "0.0003",
        "--truth-cap",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}

#[test]
fn sweep_populates_the_figure_files() {
    let f = Fixture::new(false);
    let d = f.root.join("sweep");
    ok(&[
        "sweep",
        "--store",
        s(&f.store()),
        "--queries",
        s(&f.queries()),
        "--report-dir",
        s(&d),
        "--alpha",
        "0.0003",
        "--xis",
        "2,5",
        "--ks",
        "1,5",
        "--lengths",
        "10,20",
        "--pairs",
        "2",
        "--sizes",
        "60",
        "--no-timings",
    ]);
    for name in ["sweep_xi.csv", "sweep_k.csv", "fig6.dat", "fig8.dat", "fig9.dat", "fig10.dat"] {
        assert!(d.join(name).exists(), "{name}");
    }
    let fig8 = fs::read_to_string(d.join("fig8.dat")).unwrap();
    assert_eq!(fig8.lines().count(), 3);
    assert!(fig8.starts_with("# xi hr rr"));
}

#[test]
fn config_file_keys_are_checked_and_overridable() {
    let f = Fixture::new(false);
    let cfg = f.root.join("c.toml");
    fs::write(&cfg, "alpha = 0.0003\nxi = 3\nfrobnicate = 1\n").unwrap();
    let out = run(&["build", "--config", s(&cfg), "--store", s(&f.store()), "--index", s(&f.root.join("x.bin"))]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, format!("alpha = 0.0003\nxi = 3\nstore = {:?}\nindex = {:?}\n", s(&f.store()), s(&f.root.join("x.bin"))))
        .unwrap();
    let three = ok(&["build", "--config", s(&cfg)]);
    let six = ok(&["build", "--config", s(&cfg), "--xi", "6"]);
    assert!(three.contains(&format!("{} edges", 120 * 3)), "{three}");
    assert!(six.contains(&format!("{} edges", 120 * 6)), "{six}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["build", "--store", "x", "--index", "y"]).status.code(), Some(1));
    assert_eq!(run(&["query", "--ablate", "no-such"]).status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}
