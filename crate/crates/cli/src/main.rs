//! `lieflow` command-line driver.
//!
//! Every command writes into a fresh timestamped directory under the output
//! root and prints that directory on stdout. Exit codes: 0 success, 1 runtime
//! failure, 2 usage or config error.

use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lieflow::bridge::{self, PairSampling};
use lieflow::config::{RunConfig, TargetSpec};
use lieflow::eval;
use lieflow::igso3::{self, CdfTable, CLOSED_FORM_MAX_EPS, SERIES_MAX_TERMS};
use lieflow::inference::{self, InferConfig};
use lieflow::net;
use lieflow::rng::stream;
use lieflow::training::{self, HaarPrior, Variant};
use lieflow::{FrameSet, Rotation};

#[derive(Parser)]
#[command(name = "lieflow", version, about = "Flow matching on SO(3) and SE(3)^N")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a flow on the toy target; writes checkpoint, loss CSV and config snapshot.
    Train(TrainArgs),
    /// Generate samples from a trained checkpoint.
    Sample(SampleArgs),
    /// Score a samples CSV against fresh target draws.
    Eval(EvalArgs),
    /// Compare the simulated bridge with its simulation-free approximation.
    BridgeCheck(BridgeArgs),
    /// Tabulate IGSO(3) densities and angle CDFs.
    Igso3Table(TableArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; defaults to `run.out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Args)]
struct SampleArgs {
    /// Training run directory holding `checkpoint.bin` and `config.txt`.
    #[arg(long, conflicts_with_all = ["checkpoint"])]
    run: Option<PathBuf>,
    #[arg(long, requires = "config")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// Must match the variant the checkpoint was trained as.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long = "anneal-c")]
    anneal_c: Option<f64>,
    /// Also write the field-norm diagnostic over this many priors.
    #[arg(long)]
    norm: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Config supplying target and eval settings; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the first `n` sample rotations.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct BridgeArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    gammas: Vec<f64>,
    /// Endpoint pairs.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `ot` or `independent`.
    #[arg(long, default_value = "ot")]
    pairs: PairSampling,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.5, 1.0, 2.0])]
    eps: Vec<f64>,
    /// Points on [0, π].
    #[arg(long, default_value_t = igso3::DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type CliResult<T> = Result<T, Failure>;

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::BridgeCheck(a) => cmd_bridge_check(a),
        Cmd::Igso3Table(a) => cmd_igso3_table(a),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Creates `<root>/<timestamp>-<label>`, adding a counter if the name is
/// taken. Existing directories are never reused.
fn new_run_dir(root: &Path, label: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(root).map_err(|e| runtime(format!("{}: {e}", root.display())))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    for k in 0u32.. {
        let name = if k == 0 {
            format!("{stamp}-{label}")
        } else {
            format!("{stamp}-{label}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(runtime(format!("{}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, overrides: &[(&str, String)]) -> CliResult<RunConfig> {
    let text = read_text(path)?;
    RunConfig::parse_with_overrides(&text, overrides).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs) -> CliResult<PathBuf> {
    let mut overrides = Vec::new();
    if let Some(v) = a.variant {
        overrides.push(("train.variant", v.to_string()));
    }
    if let Some(s) = a.seed {
        overrides.push(("run.seed", s.to_string()));
    }
    if let Some(s) = a.steps {
        overrides.push(("train.steps", s.to_string()));
    }
    if let Some(o) = &a.out {
        overrides.push(("run.out", o.display().to_string()));
    }
    let cfg = load_config(&a.config, &overrides)?;

    let mut data = cfg.target.source(&cfg.train.net).map_err(usage)?;
    let mut prior = HaarPrior {
        frames: cfg.train.net.frames,
        translations: cfg.train.net.translations,
    };
    eprintln!(
        "training {} for {} steps (batch {}, seed {})",
        cfg.variant(),
        cfg.train.steps,
        cfg.train.batch_size,
        cfg.seed
    );
    let out = training::train_loop(&cfg.train, &mut data, &mut prior).map_err(runtime)?;

    let dir = new_run_dir(&cfg.out, &format!("train-{}", cfg.variant()))?;
    write_file(&dir.join("config.txt"), &cfg.to_text())?;
    net::save_checkpoint(&out.params, &out.optimizer, &dir.join("checkpoint.bin")).map_err(runtime)?;
    training::write_loss_history(&out.history, &dir.join("loss.csv")).map_err(runtime)?;
    Ok(dir)
}

fn cmd_sample(a: SampleArgs) -> CliResult<PathBuf> {
    let (ckpt, cfg_path) = match (&a.run, &a.checkpoint, &a.config) {
        (Some(run), None, None) => (run.join("checkpoint.bin"), run.join("config.txt")),
        (Some(run), None, Some(c)) => (run.join("checkpoint.bin"), c.clone()),
        (None, Some(ck), Some(c)) => (ck.clone(), c.clone()),
        _ => return Err(usage("pass --run DIR, or --checkpoint FILE with --config FILE")),
    };
    let mut overrides = Vec::new();
    if let Some(s) = a.seed {
        overrides.push(("run.seed", s.to_string()));
    }
    if let Some(s) = a.steps {
        overrides.push(("infer.steps", s.to_string()));
    }
    if let Some(n) = a.n {
        overrides.push(("infer.n", n.to_string()));
    }
    if let Some(c) = a.anneal_c {
        overrides.push(("infer.anneal_c", c.to_string()));
    }
    if let Some(o) = &a.out {
        overrides.push(("run.out", o.display().to_string()));
    }
    let base = load_config(&cfg_path, &[])?;
    if let Some(v) = a.variant {
        if v != base.variant() {
            return Err(usage(format!(
                "--variant {v} does not match the checkpoint's config variant {}",
                base.variant()
            )));
        }
    }
    if let Some(z) = a.zeta {
        if base.variant() == Variant::Sfm {
            overrides.push(("infer.zeta", z.to_string()));
        } else {
            eprintln!("warning: --zeta has no effect for variant {}; ignored", base.variant());
        }
    }
    let cfg = load_config(&cfg_path, &overrides)?;

    let (params, _) = net::load_checkpoint(&ckpt).map_err(|e| usage(format!("{}: {e}", ckpt.display())))?;
    if params.shape != cfg.train.net {
        return Err(usage(format!(
            "checkpoint network {:?} does not match config model {:?}",
            params.shape, cfg.train.net
        )));
    }

    let prior = HaarPrior {
        frames: cfg.train.net.frames,
        translations: cfg.train.net.translations,
    };
    let mut prior_rng = stream(cfg.seed, "infer.prior");
    let priors: Vec<FrameSet> = (0..cfg.infer_n).map(|_| prior.sample(&mut prior_rng)).collect();
    let icfg: &InferConfig = &cfg.infer;
    let samples = if priors.is_empty() {
        Vec::new()
    } else {
        let out = inference::sample(&params, icfg, &priors, &mut stream(cfg.seed, "infer.noise")).map_err(runtime)?;
        if out.reorthonormalized > 0 {
            eprintln!("re-orthonormalized {} frame updates", out.reorthonormalized);
        }
        out.samples
    };

    let dir = new_run_dir(&cfg.out, &format!("sample-{}", cfg.variant()))?;
    write_file(&dir.join("config.txt"), &cfg.to_text())?;
    eval::export_samples_csv(&samples, &dir.join("samples.csv")).map_err(runtime)?;
    if let Some(k) = a.norm {
        let k = k.min(priors.len());
        if k > 0 {
            let rows = inference::flow_norm_diagnostic(&params, icfg, &priors[..k]).map_err(runtime)?;
            inference::write_norm_csv(&rows, &dir.join("flow_norm.csv")).map_err(runtime)?;
        }
    }
    Ok(dir)
}

fn cmd_eval(a: EvalArgs) -> CliResult<PathBuf> {
    let (target, radius, default_n, cfg_seed) = match &a.config {
        Some(p) => {
            let cfg = load_config(p, &[])?;
            (cfg.target.clone(), cfg.eval_radius, cfg.eval_n, cfg.seed)
        }
        None => (TargetSpec::default(), eval::MODE_RADIUS, eval::WASSERSTEIN_CAP, 0),
    };
    let seed = a.seed.unwrap_or(cfg_seed);
    let mixture = target.mixture().map_err(usage)?;
    let frames = eval::read_samples_csv(&a.samples).map_err(|e| usage(format!("{}: {e}", a.samples.display())))?;
    let rots: Vec<Rotation> = frames.iter().flat_map(|f| f.rotations().copied()).collect();
    let n = a.n.unwrap_or(default_n.min(rots.len()));
    if n == 0 {
        return Err(usage("no samples to evaluate"));
    }
    if n > rots.len() {
        return Err(usage(format!("--n {n} exceeds the {} rotations in the file", rots.len())));
    }
    if n > eval::WASSERSTEIN_CAP {
        return Err(usage(format!(
            "--n {n} exceeds the exact-solver cap of {}; pass a smaller --n",
            eval::WASSERSTEIN_CAP
        )));
    }
    let report = eval::evaluate(&rots[..n], &mixture, radius, seed).map_err(runtime)?;
    let dir = new_run_dir(&a.out, "eval")?;
    write_file(&dir.join("report.txt"), &report.to_text())?;
    report.write_csv(&dir.join("report.csv")).map_err(runtime)?;
    eprint!("{}", report.to_text());
    Ok(dir)
}

fn cmd_bridge_check(a: BridgeArgs) -> CliResult<PathBuf> {
    for &g in &a.gammas {
        bridge::DiffusionSchedule::constant(g).map_err(usage)?;
    }
    if a.steps < bridge::MIN_BRIDGE_STEPS {
        return Err(usage(format!("--steps must be at least {}", bridge::MIN_BRIDGE_STEPS)));
    }
    if a.n < bridge::MIN_STUDY_PAIRS {
        return Err(usage(format!("--n must be at least {}", bridge::MIN_STUDY_PAIRS)));
    }
    let curves = bridge::bridge_error_study(&a.gammas, a.n, a.steps, a.pairs, a.seed).map_err(runtime)?;
    let dir = new_run_dir(&a.out, "bridge")?;
    let mut summary = String::from("gamma,relative_mean_gap,disjoint_band_points\n");
    for c in &curves {
        c.write_csv(&dir.join(format!("bridge_gamma_{}.csv", c.gamma)))
            .map_err(runtime)?;
        summary.push_str(&format!(
            "{},{},{}\n",
            c.gamma,
            c.relative_mean_gap(),
            c.disjoint_band_points().len()
        ));
    }
    write_file(&dir.join("summary.csv"), &summary)?;
    eprint!("{summary}");
    Ok(dir)
}

fn cmd_igso3_table(a: TableArgs) -> CliResult<PathBuf> {
    if a.eps.is_empty() {
        return Err(usage("--eps needs at least one value"));
    }
    let tables = a
        .eps
        .iter()
        .map(|&e| CdfTable::build(e, a.grid).map_err(usage))
        .collect::<CliResult<Vec<_>>>()?;
    let dir = new_run_dir(&a.out, "igso3")?;
    for table in &tables {
        let eps = table.eps;
        let closed = eps <= CLOSED_FORM_MAX_EPS;
        let path = dir.join(format!("igso3_eps_{eps}.csv"));
        let file = fs::File::create(&path).map_err(runtime)?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e: std::io::Error| runtime(format!("{}: {e}", path.display()));
        if closed {
            writeln!(w, "omega,series,closed,rel_err,cdf").map_err(io)?;
        } else {
            writeln!(w, "omega,series,cdf").map_err(io)?;
        }
        for (k, &omega) in table.grid.iter().enumerate() {
            let series = igso3::density_series(omega, eps, SERIES_MAX_TERMS);
            let cdf = table.cdf[k];
            if closed {
                let c = igso3::density_closed(omega, eps).map_err(runtime)?;
                let rel = (c - series).abs() / series.abs();
                writeln!(w, "{omega},{series},{c},{rel},{cdf}").map_err(io)?;
            } else {
                writeln!(w, "{omega},{series},{cdf}").map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    Ok(dir)
}
