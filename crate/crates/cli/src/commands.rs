use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Subcommand;
use subtraj::eval::{
    dtsm_timing, ground_truth, run_benchmark, scalability, sweep_k, sweep_neighbors, synth_corpus, two_cluster_corpus, write_dat,
    write_metrics_csv, write_summary_csv, write_sweep_csv, Corpus, Guard, Method, SweepPoint, SynthSpec, DEFAULT_TRUTH_CAP,
};
use subtraj::index::{build_index, build_index_timed, load_index, save_index};
use subtraj::model::{read_csv, write_csv, IngestFilter};
use subtraj::search::query_topk;
use subtraj::{Config, ScorerRegistry, Trajectory, TrajectoryStore};

use crate::settings::{ConfigArgs, Settings};
use crate::CliError;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a raw `traj_id,seq,lon,lat[,t]` CSV into a store file.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Store file to write; defaults to `store` from the config file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 90)]
        min_len: usize,
        #[arg(long, default_value_t = 300)]
        max_len: usize,
        /// Keep consecutive repeated points.
        #[arg(long)]
        keep_duplicates: bool,
    },
    /// Write a synthetic corpus: `data.csv`, `queries.csv`, `planted.csv`.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        n_queries: usize,
        /// Lattice side; sized from `n` by default.
        #[arg(long)]
        lattice: Option<usize>,
        /// Emit the two-cluster corpus with this many trajectories per cluster instead.
        #[arg(long, conflicts_with_all = ["n", "lattice"])]
        two_cluster: Option<usize>,
    },
    /// Build the index over a store.
    Build {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Top-k search for every trajectory in a query file.
    Query {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        /// CSV output; stdout by default.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write 0 in the `ms` column.
        #[arg(long)]
        no_timings: bool,
    },
    /// Score the search and its ablations against exhaustive ground truth.
    Eval {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        report_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
        ks: Vec<usize>,
        #[command(flatten)]
        guard: GuardArgs,
        #[arg(long)]
        no_timings: bool,
    },
    /// Parameter sweeps and timing experiments.
    Sweep {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        report_dir: Option<PathBuf>,
        /// Lower-layer neighbor counts.
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20")]
        xis: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        ks: Vec<usize>,
        /// Trajectory lengths for the similarity timing.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        /// α for the timing pairs, whose points are uniform in a unit square.
        #[arg(long, default_value_t = 0.05)]
        timing_alpha: f64,
        /// Synthetic store sizes for the scalability series; skipped when empty.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[command(flatten)]
        guard: GuardArgs,
        #[arg(long)]
        no_timings: bool,
    },
}

#[derive(clap::Args, Debug)]
pub struct GuardArgs {
    /// Largest store the exhaustive ground truth may scan.
    #[arg(long, default_value_t = DEFAULT_TRUTH_CAP)]
    truth_cap: usize,
    /// Run the ground truth past the cap.
    #[arg(long)]
    force: bool,
}

impl GuardArgs {
    fn guard(&self) -> Guard {
        Guard { cap: self.truth_cap, force: self.force }
    }
}

pub fn run(cmd: Command, flags: &ConfigArgs) -> Result<(), CliError> {
    let s = Settings::load(flags)?;
    if let Some(t) = s.threads() {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cmd {
        Command::Ingest { input, out, min_len, max_len, keep_duplicates } => {
            let input = s.path(&input, |f| &f.data, "input")?;
            let out = s.path(&out, |f| &f.store, "out")?;
            let filter = IngestFilter { min_len, max_len, dedup_consecutive: !keep_duplicates };
            ingest(&input, &out, filter)
        }
        Command::Synth { out_dir, n, n_queries, lattice, two_cluster } => {
            let seed = s.flags.seed.or(s.file.seed).unwrap_or(0);
            let corpus = match two_cluster {
                Some(per) => two_cluster_corpus(per, n_queries, seed)?,
                None => {
                    let mut spec = SynthSpec::new(n, n_queries, seed);
                    spec.lattice = lattice;
                    synth_corpus(&spec)?
                }
            };
            write_corpus(&out_dir, &corpus)
        }
        Command::Build { store, index } => {
            let store_path = s.path(&store, |f| &f.store, "store")?;
            let index_path = s.path(&index, |f| &f.index, "index")?;
            build(&s, &store_path, &index_path)
        }
        Command::Query { index, store, queries, out, no_timings } => {
            let index = s.path(&index, |f| &f.index, "index")?;
            let store = s.path(&store, |f| &f.store, "store")?;
            let queries = s.path(&queries, |f| &f.queries, "queries")?;
            query(&s, &index, &store, &queries, out.as_deref(), !no_timings)
        }
        Command::Eval { store, queries, report_dir, ks, guard, no_timings } => {
            let store = load_store(&s.path(&store, |f| &f.store, "store")?)?;
            let queries = load_trajs(&s.path(&queries, |f| &f.queries, "queries")?)?;
            let dir = s.path(&report_dir, |f| &f.report_dir, "report-dir")?;
            eval(&s.config()?, &store, &queries, &dir, &ks, guard.guard(), !no_timings)
        }
        Command::Sweep { store, queries, report_dir, xis, ks, lengths, pairs, timing_alpha, sizes, guard, no_timings } => {
            let store = load_store(&s.path(&store, |f| &f.store, "store")?)?;
            let queries = load_trajs(&s.path(&queries, |f| &f.queries, "queries")?)?;
            let dir = s.path(&report_dir, |f| &f.report_dir, "report-dir")?;
            let plan = SweepPlan { xis, ks, lengths, pairs, timing_alpha, sizes, guard: guard.guard(), timings: !no_timings };
            sweep(&s.config()?, &store, &queries, &dir, &plan)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_path(path: &Path) -> impl Fn(subtraj::Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Reads a file written by `ingest` or `synth`; nothing may be dropped.
fn load_trajs(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let filter = IngestFilter { min_len: 2, max_len: usize::MAX, dedup_consecutive: false };
    let (trajs, stats) = read_csv(open(path)?, filter).map_err(with_path(path))?;
    if stats.kept != stats.read {
        return Err(CliError::Data(format!(
            "{}: {} of {} trajectories are invalid; run it through `ingest` first",
            path.display(),
            stats.read - stats.kept,
            stats.read
        )));
    }
    Ok(trajs)
}

fn load_store(path: &Path) -> Result<TrajectoryStore, CliError> {
    TrajectoryStore::from_trajectories(load_trajs(path)?).map_err(with_path(path))
}

fn write_trajs(path: &Path, trajs: &[Trajectory]) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_csv(&mut w, trajs)?;
    w.flush()?;
    Ok(())
}

fn ingest(input: &Path, out: &Path, filter: IngestFilter) -> Result<(), CliError> {
    let (trajs, stats) = read_csv(open(input)?, filter).map_err(with_path(input))?;
    // Duplicate labels are caught here, before anything is written.
    TrajectoryStore::from_trajectories(trajs.iter().cloned()).map_err(with_path(input))?;
    write_trajs(out, &trajs)?;
    let mut o = io::stdout().lock();
    writeln!(o, "N = {}", stats.kept)?;
    writeln!(
        o,
        "read {}, too short {}, too long {}, invalid {}, repeated points removed {}",
        stats.read, stats.too_short, stats.too_long, stats.invalid, stats.deduped_points
    )?;
    for (lo, hi, count) in histogram(trajs.iter().map(Trajectory::len), 10) {
        writeln!(o, "len {lo:>6}-{hi:<6} {count}")?;
    }
    Ok(())
}

/// Equal-width bins over the observed range, inclusive bounds.
fn histogram(lens: impl Iterator<Item = usize>, bins: usize) -> Vec<(usize, usize, usize)> {
    let lens: Vec<usize> = lens.collect();
    let (Some(&lo), Some(&hi)) = (lens.iter().min(), lens.iter().max()) else { return Vec::new() };
    let width = (hi - lo) / bins + 1;
    let mut out: Vec<(usize, usize, usize)> =
        (0..bins).map(|b| (lo + b * width, lo + (b + 1) * width - 1, 0)).take_while(|r| r.0 <= hi).collect();
    for l in lens {
        out[(l - lo) / width].2 += 1;
    }
    out
}

fn write_corpus(dir: &Path, c: &Corpus) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let data: Vec<Trajectory> = c.store.iter().map(|(_, t)| t.clone()).collect();
    write_trajs(&dir.join("data.csv"), &data)?;
    write_trajs(&dir.join("queries.csv"), &c.queries)?;
    let mut w = create(&dir.join("planted.csv"))?;
    writeln!(w, "query,traj_id,start,end")?;
    for (q, p) in c.queries.iter().zip(&c.planted) {
        if let Some(p) = p {
            writeln!(w, "{},{},{},{}", q.label(), c.store.traj(p.traj).label(), p.start, p.end)?;
        }
    }
    w.flush()?;
    println!("wrote {} trajectories and {} queries to {}", data.len(), c.queries.len(), dir.display());
    Ok(())
}

fn warn_xi(cfg: &Config, n: usize) {
    if n > 0 && cfg.xi > n - 1 {
        eprintln!("warning: xi = {} exceeds N - 1 = {}; each node gets {} neighbors", cfg.xi, n - 1, n - 1);
    }
}

fn build(s: &Settings, store_path: &Path, index_path: &Path) -> Result<(), CliError> {
    let cfg = s.config()?;
    let store = load_store(store_path)?;
    warn_xi(&cfg, store.len());
    let (bundle, t) = build_index_timed(&store, &cfg)?;
    bundle.check_invariants().map_err(CliError::Invariant)?;
    save_index(&bundle, index_path).map_err(with_path(index_path))?;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    println!("indexed {} trajectories into {}", store.len(), index_path.display());
    println!("upper layer: {} nodes, {} edges", bundle.gari.len(), bundle.gari.edge_count());
    println!("lower layer: {} nodes, {} edges", bundle.cndi.len(), bundle.cndi.edge_count());
    println!("time: grid {:.1} ms, upper {:.1} ms, lower {:.1} ms", ms(t.spatial), ms(t.gari), ms(t.cndi));
    Ok(())
}

fn query(s: &Settings, index: &Path, store: &Path, queries: &Path, out: Option<&Path>, timings: bool) -> Result<(), CliError> {
    let store = load_store(store)?;
    let bundle = load_index(index).map_err(with_path(index))?;
    bundle.verify_store(&store).map_err(with_path(index))?;
    bundle.check_invariants().map_err(CliError::Invariant)?;
    let ignored = s.build_keys_given();
    if !ignored.is_empty() {
        eprintln!("warning: {} fixed by the index; ignored", ignored.join(", "));
    }
    if s.ablations()?.contains(&crate::settings::AblateFlag::NoRandom) && !bundle.config.ablation.no_random {
        eprintln!("warning: no-random is a build-time switch; rebuild with --ablate=no-random");
    }
    let cfg = s.query_config(&bundle.config)?;
    let scorer = ScorerRegistry::default().resolve(&cfg)?;
    let queries = load_trajs(queries)?;

    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["query", "rank", "traj_id", "start", "end", "score", "visited", "hops", "ms"]).map_err(csv_err)?;
    for q in &queries {
        let t = Instant::now();
        let r = query_topk(q.points(), &bundle, &store, &cfg, &scorer)?;
        let ms = if timings { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let hops = r.record.hops_gari + r.record.hops_cndi;
        for (rank, hit) in r.topk.iter().enumerate() {
            w.write_record([
                q.label().to_string(),
                (rank + 1).to_string(),
                store.traj(hit.traj).label().to_string(),
                hit.start.to_string(),
                hit.end.to_string(),
                format!("{:.6}", hit.score.unwrap_or(f64::NAN)),
                r.record.len().to_string(),
                hops.to_string(),
                format!("{ms:.3}"),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn eval(
    cfg: &Config,
    store: &TrajectoryStore,
    queries: &[Trajectory],
    dir: &Path,
    ks: &[usize],
    guard: Guard,
    timings: bool,
) -> Result<(), CliError> {
    let ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= store.len()).collect();
    if ks.is_empty() {
        return Err(CliError::Usage(format!("no k in --ks fits a store of {}", store.len())));
    }
    warn_xi(cfg, store.len());
    let report = run_benchmark(store, queries, &Method::with_ablations(cfg), &ks, &ScorerRegistry::default(), guard)?;
    fs::create_dir_all(dir)?;
    write_metrics_csv(create(&dir.join("metrics.csv"))?, &report.rows, timings)?;
    write_summary_csv(create(&dir.join("summary.csv"))?, &report.summary, timings)?;

    // HR against k, one column per method.
    let methods: Vec<String> = report.summary.iter().filter(|r| r.k == ks[0]).map(|r| r.method.clone()).collect();
    let rows: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| {
            let mut row = vec![k as f64];
            row.extend(methods.iter().map(|m| report.summary.iter().find(|r| r.k == k && &r.method == m).map_or(0.0, |r| r.hr)));
            row
        })
        .collect();
    let mut cols = vec!["k"];
    cols.extend(methods.iter().map(String::as_str));
    write_dat(create(&dir.join("fig9.dat"))?, &cols, &rows)?;

    let mut o = io::stdout().lock();
    for r in &report.summary {
        writeln!(o, "{:<11} k={:<3} hr={:.3} rr={:.4} visited={:.1}", r.method, r.k, r.hr, r.rr, r.visited)?;
    }
    Ok(())
}

struct SweepPlan {
    xis: Vec<usize>,
    ks: Vec<usize>,
    lengths: Vec<usize>,
    pairs: usize,
    timing_alpha: f64,
    sizes: Vec<usize>,
    guard: Guard,
    timings: bool,
}

fn sweep_dat(path: &Path, x: &str, points: &[SweepPoint], timings: bool) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.x, p.hr, p.rr, p.r10_50.unwrap_or(0.0), if timings { p.time_ms } else { 0.0 }, p.visited])
        .collect();
    write_dat(create(path)?, &[x, "hr", "rr", "r10_50", "time_ms", "visited"], &rows)?;
    Ok(())
}

fn sweep(cfg: &Config, store: &TrajectoryStore, queries: &[Trajectory], dir: &Path, plan: &SweepPlan) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let reg = ScorerRegistry::default();
    let scorer = reg.resolve(cfg)?;
    let truths = ground_truth(store, queries, cfg, &scorer, plan.guard)?;
    let t = plan.timings;

    let xis: Vec<usize> = plan.xis.iter().copied().filter(|&x| x >= 1).collect();
    let by_xi = sweep_neighbors(store, queries, &truths, cfg, &xis, &scorer)?;
    write_sweep_csv(create(&dir.join("sweep_xi.csv"))?, &by_xi, t)?;
    sweep_dat(&dir.join("fig8.dat"), "xi", &by_xi, t)?;

    let ks: Vec<usize> = plan.ks.iter().copied().filter(|&k| k >= 1 && k <= store.len()).collect();
    let index = build_index(store, cfg)?;
    let by_k = sweep_k(store, queries, &truths, &index, cfg, &ks, &scorer)?;
    write_sweep_csv(create(&dir.join("sweep_k.csv"))?, &by_k, t)?;
    sweep_dat(&dir.join("fig9.dat"), "k", &by_k, t)?;

    let timing = dtsm_timing(&plan.lengths, plan.pairs, plan.timing_alpha, cfg.seed)?;
    let rows: Vec<Vec<f64>> = timing.iter().map(|&(n, ms)| vec![n as f64, if t { ms } else { 0.0 }]).collect();
    write_dat(create(&dir.join("fig6.dat"))?, &["length", "ms"], &rows)?;

    if !plan.sizes.is_empty() {
        let template = SynthSpec::new(0, queries.len().clamp(1, 20), cfg.seed);
        let points = scalability(&template, &plan.sizes, cfg, &reg, plan.guard)?;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let z = |x: f64| if t { x } else { 0.0 };
                vec![p.n as f64, z(p.build_ms), z(p.gtrss_ms), z(p.exhaustive_ms), z(p.speedup()), p.hr]
            })
            .collect();
        write_dat(create(&dir.join("fig10.dat"))?, &["n", "build_ms", "gtrss_ms", "exhaustive_ms", "speedup", "hr"], &rows)?;
    }

    let mut o = io::stdout().lock();
    for p in &by_xi {
        writeln!(o, "xi={:<3} hr={:.3}", p.x, p.hr)?;
    }
    for p in &by_k {
        writeln!(o, "k={:<3} hr={:.3}", p.x, p.hr)?;
    }
    Ok(())
}
