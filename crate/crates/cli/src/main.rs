mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lecbench::actions::{baseline_circuit, enumerate_actions, ActionLibrary, LecCircuit};
use lecbench::analysis::{
    self, classify_residuals, fit_deff, hybrid_scan, read_csv, residual_frame, run_lifetime_campaign, write_csv,
    CampaignConfig, HybridConfig, LifetimeDataset, LifetimeRow,
};
use lecbench::engine::{compute_reward, Evaluator};
use lecbench::frame::NoiseParams;
use lecbench::geometry::{CodeGeometry, CodeKind};
use lecbench::rl::{self, circuit_hash, RewardEnv, SimEnv};
use lecbench::LecError;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "lecbench", version, about = "LEC circuit search and benchmarking")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for an LEC circuit with PPO.
    Train(TrainArgs),
    /// Memory lifetimes over the campaign grid.
    Bench(BenchArgs),
    /// Effective-distance fit of lifetime CSVs.
    Fit(FitArgs),
    /// Classify residual errors after LEC cycles.
    Classify(ClassifyArgs),
    /// Original vs hybrid global decoding scan (toric2d).
    Hybrid(HybridArgs),
    /// Write the conventional circuit for a code.
    Baseline(Common),
    /// Quick end-to-end sanity checks.
    Selftest(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_code)]
    code: Option<CodeKind>,
    /// Lattice size L.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    p_gate: Option<f64>,
    #[arg(long)]
    p_amb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config, then $LECBENCH_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Circuit file; the conventional circuit when absent.
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Ambient rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_rounds: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Lifetime CSVs written by `bench`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Circuit label for the output (default: first input's file stem).
    #[arg(long)]
    circuit_id: Option<String>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct HybridArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long)]
    total_time: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    p_unit: Option<f64>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    max_global: Option<usize>,
    #[arg(long)]
    max_lec: Option<usize>,
}

fn parse_code(s: &str) -> Result<CodeKind, String> {
    s.parse().map_err(|e: LecError| e.to_string())
}

/// Exit 1 for bad input, 2 for failures while running.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<LecError> for Failure {
    fn from(e: LecError) -> Self {
        match e {
            LecError::InvalidParameter(_) | LecError::Parse { .. } | LecError::GeometryMismatch(_) => {
                Failure::Validation(e.into())
            }
            _ => Failure::Runtime(e.into()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn bad(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn fail(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Train(a) => cmd_train(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Hybrid(a) => cmd_hybrid(a),
        Command::Baseline(c) => cmd_baseline(c),
        Command::Selftest(c) => cmd_selftest(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// File, then flags, then per-code defaults. `circuit` supplies the code and
/// L when the configuration leaves them open.
fn load_config(c: &Common, circuit: Option<&LecCircuit>) -> Outcome<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(bad)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = c.code {
        cfg.code.kind = Some(k);
    }
    if let Some(l) = c.size {
        cfg.code.l = Some(l);
    }
    if let Some(p) = c.p_gate {
        cfg.noise.p_gate = p;
    }
    if let Some(p) = c.p_amb {
        cfg.noise.p_amb = Some(p);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(circ) = circuit {
        if let Some(k) = cfg.code.kind {
            if k != circ.kind {
                return Err(bad(anyhow!("config names {k} but the circuit is for {}", circ.kind)));
            }
        }
        cfg.code.l.get_or_insert(circ.l);
    }
    let cfg = cfg.resolve(circuit.map(|c| c.kind)).map_err(bad)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(fail)?;
    Ok(cfg)
}

fn load_circuit(path: &Path) -> Outcome<LecCircuit> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading circuit {}", path.display()))
        .map_err(bad)?;
    LecCircuit::parse(&text)
        .with_context(|| format!("parsing circuit {}", path.display()))
        .map_err(bad)
}

fn circuit_label(path: Option<&Path>) -> String {
    path.and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "baseline".into())
}

/// Writes every file through a temporary name so a failed run leaves nothing half written.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Outcome<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(fail)?;
    for (name, bytes) in files {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)
            .and_then(|_| fs::rename(&tmp, &path))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn csv_bytes<T: Serialize>(cfg: &ExperimentConfig, rows: &[T]) -> Outcome<Vec<u8>> {
    let mut buf = cfg.header().into_bytes();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

fn circuit_bytes(cfg: &ExperimentConfig, c: &LecCircuit) -> Vec<u8> {
    let mut s = cfg.header();
    s.push_str(&c.to_text());
    s.into_bytes()
}

#[derive(Serialize)]
struct SummaryRow {
    run: String,
    horizon: usize,
    epochs: usize,
    converged: bool,
    reward: f64,
    stderr: f64,
    circuit_hash: String,
}

fn cmd_train(a: TrainArgs) -> Outcome<()> {
    let mut cfg = load_config(&a.common, None)?;
    if let Some(r) = a.runs {
        cfg.rl.runs = r;
    }
    if let Some(e) = a.max_epochs {
        cfg.rl.max_epochs = e;
    }
    if let Some(h) = a.horizon {
        cfg.rl.horizon = Some(h);
    }
    let cfg = cfg.resolve(None).map_err(bad)?;
    let env = SimEnv::new(&cfg.env_config())?;
    let tcfg = cfg.train_config();
    if let Some(d) = &cfg.rl.checkpoint_dir {
        fs::create_dir_all(d).map_err(fail)?;
    }
    let result = rl::train(&env, &tcfg, cfg.rl.checkpoint_dir.as_deref())?;

    let mut tokens = env.prefix();
    tokens.extend_from_slice(result.best_circuit());
    let circuit = env.library().tokens_to_circuit(&tokens).stripped();
    let log: Vec<_> = result.runs.iter().flat_map(|r| r.log.iter().cloned()).collect();
    let mut summary: Vec<SummaryRow> = result
        .runs
        .iter()
        .zip(&result.scores)
        .enumerate()
        .map(|(i, (r, s))| SummaryRow {
            run: i.to_string(),
            horizon: r.horizon,
            epochs: r.epochs,
            converged: r.converged,
            reward: s.mean,
            stderr: s.stderr,
            circuit_hash: circuit_hash(&env, &r.circuit),
        })
        .collect();
    summary.push(SummaryRow {
        run: "untrained".into(),
        horizon: tcfg.mode.horizon(),
        epochs: 0,
        converged: false,
        reward: result.initial.mean,
        stderr: result.initial.stderr,
        circuit_hash: String::new(),
    });
    let mut log_bytes = cfg.header().into_bytes();
    rl::write_log(&mut log_bytes, &log)?;
    write_outputs(
        &cfg.out_dir(),
        &[
            ("circuit.txt", circuit_bytes(&cfg, &circuit)),
            ("train_log.csv", log_bytes),
            ("train_summary.csv", csv_bytes(&cfg, &summary)?),
        ],
    )?;
    let best = &result.scores[result.best];
    println!(
        "best run {}: depth {} reward {:.4} ± {:.4}",
        result.best,
        circuit.depth(),
        best.mean,
        best.stderr
    );
    Ok(())
}

fn circuit_or_baseline(path: Option<&Path>) -> Outcome<Option<LecCircuit>> {
    path.map(load_circuit).transpose()
}

fn cmd_bench(a: BenchArgs) -> Outcome<()> {
    let given = circuit_or_baseline(a.circuit.as_deref())?;
    let mut cfg = load_config(&a.common, given.as_ref())?;
    if let Some(s) = a.sizes {
        cfg.campaign.sizes = Some(s);
    }
    if let Some(g) = a.grid {
        cfg.campaign.p_amb = Some(g);
    }
    if let Some(s) = a.samples {
        cfg.campaign.samples = s;
    }
    if let Some(m) = a.max_rounds {
        cfg.campaign.max_rounds = m;
    }
    let cfg = cfg.resolve(None).map_err(bad)?;
    let circuit = given.unwrap_or_else(|| baseline_circuit(cfg.kind(), cfg.l()));
    let label = circuit_label(a.circuit.as_deref());
    let camp = CampaignConfig {
        sizes: cfg.campaign.sizes.clone().expect("resolved"),
        p_gate: cfg.noise.p_gate,
        p_amb: cfg.campaign.p_amb.clone().expect("resolved"),
        samples: cfg.campaign.samples,
        max_rounds: cfg.campaign.max_rounds,
        seed: cfg.seed,
    };
    let data = run_lifetime_campaign(&circuit, &label, &camp)?;
    let mut rows = Vec::new();
    for ds in &data {
        for p in &ds.points {
            if p.fully_censored() {
                eprintln!("warning: L={} p_amb={} never failed within {} rounds", ds.l, p.p_amb, camp.max_rounds);
            }
        }
        rows.extend(ds.rows());
    }
    write_outputs(&cfg.out_dir(), &[("lifetimes.csv", csv_bytes(&cfg, &rows)?)])
}

fn cmd_fit(a: FitArgs) -> Outcome<()> {
    let cfg = load_config(&a.common, None)?;
    let mut rows: Vec<LifetimeRow> = Vec::new();
    for p in &a.inputs {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display())).map_err(bad)?;
        let r: Vec<LifetimeRow> = read_csv(f).map_err(|e| bad(anyhow!("{}: {e}", p.display())))?;
        rows.extend(r);
    }
    let label = a.circuit_id.unwrap_or_else(|| circuit_label(a.inputs.first().map(|p| p.as_path())));
    let data = LifetimeDataset::from_rows(&rows, &label)?;
    let mut out = Vec::new();
    let mut by_gate: Vec<(u64, Vec<LifetimeDataset>)> = Vec::new();
    for ds in data {
        let key = ds.p_gate.to_bits();
        match by_gate.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(ds),
            None => by_gate.push((key, vec![ds])),
        }
    }
    for (_, group) in &by_gate {
        let fit = fit_deff(group)?;
        for w in &fit.warnings {
            eprintln!("warning: {w}");
        }
        let p_gate = group[0].p_gate;
        println!("p_gate={p_gate}: {} {:?} ± {:?}", fit.model, fit.params, fit.stderrs());
        out.extend(fit.rows(&label, p_gate));
    }
    write_outputs(&cfg.out_dir(), &[("fits.csv", csv_bytes(&cfg, &out)?)])
}

fn cmd_classify(a: ClassifyArgs) -> Outcome<()> {
    let given = circuit_or_baseline(a.circuit.as_deref())?;
    let mut cfg = load_config(&a.common, given.as_ref())?;
    if let Some(c) = a.cycles {
        cfg.campaign.cycles = c;
    }
    if let Some(s) = a.samples {
        cfg.campaign.samples = s;
    }
    let cfg = cfg.resolve(None).map_err(bad)?;
    let (kind, l) = (cfg.kind(), cfg.l());
    let circuit = given.unwrap_or_else(|| baseline_circuit(kind, l));
    let geom = Arc::new(CodeGeometry::new(kind, l)?);
    let set = enumerate_actions(kind, false);
    let lib = ActionLibrary::new(geom.clone(), set.clone())?;
    let compiled = lib.compile(&LecCircuit::new(kind, l, circuit.actions.clone()))?;
    let noise = NoiseParams::new(cfg.noise.p_amb.expect("resolved"), cfg.noise.p_gate);
    noise.validate()?;
    let frame = residual_frame(&geom, &compiled, &noise, cfg.campaign.cycles, cfg.campaign.samples, cfg.seed);
    let counts = classify_residuals(&geom, &frame, &set)?;
    let rows = counts.rows(kind, &circuit_label(a.circuit.as_deref()), cfg.campaign.cycles);
    write_outputs(&cfg.out_dir(), &[("classes.csv", csv_bytes(&cfg, &rows)?)])
}

#[derive(Serialize)]
struct HybridSummary {
    protocol: String,
    min_n_global: Option<usize>,
    optimal_n_lec: Option<usize>,
}

fn cmd_hybrid(a: HybridArgs) -> Outcome<()> {
    let given = circuit_or_baseline(a.circuit.as_deref())?;
    let mut cfg = load_config(&a.common, given.as_ref())?;
    let h = &mut cfg.hybrid;
    if let Some(v) = a.total_time {
        h.total_time = v;
    }
    if let Some(v) = a.samples {
        h.samples = v;
    }
    if let Some(v) = a.p_unit {
        h.p_unit = v;
    }
    if let Some(v) = a.target {
        h.target = v;
    }
    if let Some(v) = a.max_global {
        h.max_global = v;
    }
    if let Some(v) = a.max_lec {
        h.max_lec = v;
    }
    let cfg = cfg.resolve(None).map_err(bad)?;
    if cfg.kind() != CodeKind::Toric2D {
        return Err(bad(anyhow!("hybrid decoding is defined for toric2d only")));
    }
    let l = cfg.l();
    let circuit = given.unwrap_or_else(|| baseline_circuit(CodeKind::Toric2D, l));
    let geom = Arc::new(CodeGeometry::new(CodeKind::Toric2D, l)?);
    let lib = ActionLibrary::new(geom.clone(), enumerate_actions(CodeKind::Toric2D, false))?;
    let compiled = lib.compile(&LecCircuit::new(CodeKind::Toric2D, l, circuit.actions.clone()))?;
    let h = &cfg.hybrid;
    let hc = HybridConfig {
        p_unit: h.p_unit,
        p_gate: cfg.noise.p_gate,
        total_time: h.total_time,
        target: h.target,
        samples: h.samples,
        max_global: h.max_global,
        max_lec: h.max_lec,
        seed: cfg.seed,
    };
    let res = hybrid_scan(&geom, &compiled, &hc)?;
    let summary = vec![
        HybridSummary { protocol: "original".into(), min_n_global: res.original_min, optimal_n_lec: None },
        HybridSummary { protocol: "hybrid".into(), min_n_global: res.hybrid_min, optimal_n_lec: res.optimal_lec },
    ];
    let show = |v: Option<usize>| v.map_or("unattained".to_string(), |n| n.to_string());
    println!("original: {}  hybrid: {}", show(res.original_min), show(res.hybrid_min));
    write_outputs(
        &cfg.out_dir(),
        &[
            ("hybrid.csv", csv_bytes(&cfg, &res.rows)?),
            ("hybrid_summary.csv", csv_bytes(&cfg, &summary)?),
        ],
    )
}

fn cmd_baseline(c: Common) -> Outcome<()> {
    let cfg = load_config(&c, None)?;
    let circuit = baseline_circuit(cfg.kind(), cfg.l());
    print!("{}", circuit.to_text());
    let name = format!("baseline_{}.txt", cfg.kind());
    write_outputs(&cfg.out_dir(), &[(&name, circuit_bytes(&cfg, &circuit))])
}

fn cmd_selftest(c: Common) -> Outcome<()> {
    let cfg = load_config(&c, None)?;
    let mut failed = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    for (kind, l) in [(CodeKind::Toric2D, 4), (CodeKind::Ising2D, 4), (CodeKind::Toric4D, 2)] {
        let geom = Arc::new(CodeGeometry::new(kind, l)?);
        let lib = ActionLibrary::new(geom.clone(), enumerate_actions(kind, false))?;
        let compiled = lib.compile(&baseline_circuit(kind, l))?;
        let r = compute_reward(&compiled, &Evaluator::new(geom)?, &NoiseParams::noiseless(), 128, 2, cfg.seed);
        check(&format!("noiseless {kind} baseline"), r.mean == 1.0, format!("reward {}", r.mean));
    }
    let truth = [1.0, 0.8, 1.5];
    let data: Vec<LifetimeDataset> = [4usize, 6, 8]
        .iter()
        .map(|&l| LifetimeDataset {
            kind: CodeKind::Ising2D,
            circuit: "synthetic".into(),
            l,
            p_gate: 0.0,
            points: [0.08, 0.1, 0.12, 0.14]
                .iter()
                .map(|&p: &f64| {
                    let y = -truth[0] * l as f64 * (p.log10() + truth[1]) + truth[2];
                    analysis::LifetimePoint { p_amb: p, mean: 10f64.powf(y), stderr: 0.01 * 10f64.powf(y), n: 1000, censored: 0 }
                })
                .collect(),
        })
        .collect();
    let fit = fit_deff(&data)?;
    let ok = fit.params.iter().zip(truth).all(|(a, b)| (a - b).abs() < 1e-6);
    check("exact synthetic fit", ok, format!("{:?}", fit.params));
    if failed > 0 {
        return Err(fail(anyhow!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
