use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spinmac_core::accounting::{crossbar_compare, CrossbarComparison, ExecutionMode, EXCLUDED_TERMS};
use spinmac_core::config::SimulationConfig;
use spinmac_core::engine::{IntegerMatrix, RunReport};
use spinmac_core::multiplier::{fit_linear_region, Fidelity};

/// Simulator for a magnetoelectric multiplier and domain-wall accumulator
/// matrix-multiply accelerator.
#[derive(Parser)]
#[command(name = "spinmac", version)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for ensemble and parallel-array work [default: available parallelism].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gate-voltage transfer curve of the multiplier and its linear-region fit.
    TransferCurve(TransferArgs),
    /// Multiplies two integer matrices on the simulated accelerator.
    Matmul(MatmulArgs),
    /// Energy, latency and device-count report across matrix sizes.
    Report(ReportArgs),
    /// Fits the multiplier and decode scale and prints a [calibration] block.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct TransferArgs {
    /// Transfer model: `analytic` (closed-form steady state) or `sllg` (stochastic ensemble).
    #[arg(long, value_name = "SOURCE")]
    source: Option<String>,
    /// Seed for the sllg ensemble; overrides sllg.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Curve CSV: gate voltage (V), conductance (S), angle and its ensemble std (deg).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Fit summary file; printed to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct MatmulArgs {
    /// Left operand: first line N, then N rows of N integers.
    a: PathBuf,
    /// Right operand, same format.
    b: PathBuf,
    /// `sequential` (one MAC unit) or `parallel` (N² units); overrides engine.mode.
    #[arg(long)]
    mode: Option<String>,
    /// `ideal`, `exact` or `exact-compensated`; overrides engine.fidelity.
    #[arg(long)]
    fidelity: Option<String>,
    /// Domain-wall displacement noise: `on` or `off`; overrides engine.noise.
    #[arg(long, value_name = "on|off")]
    noise: Option<String>,
    /// RNG seed; a time-derived seed is generated and recorded when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs seeds seed, seed+1, ... and writes aggregate error statistics.
    #[arg(long, default_value_t = 1, value_name = "COUNT")]
    repeat: u64,
    /// Output directory for report.csv and summary.txt (plus seeds.csv with --repeat);
    /// the summary goes to stdout when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Comma-separated matrix sizes N; an empty list gives a header-only CSV.
    #[arg(long, default_value = "1,10,100,1000", value_name = "N,N,...")]
    sweep: String,
    /// Largest supported N, which sets the strip length and resistance [default: from the synapse].
    #[arg(long, value_name = "N")]
    n_max: Option<usize>,
    /// CSV path: energies in J, latencies in s; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Writes the block here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => SimulationConfig::from_path(p)?,
        None => SimulationConfig::default(),
    };
    match cli.command {
        Command::TransferCurve(a) => transfer_curve(cfg, a),
        Command::Matmul(a) => matmul(cfg, a),
        Command::Report(a) => report(cfg, a),
        Command::Calibrate(a) => calibrate(cfg, a),
    }
}

/// Writes through a temporary file so a failed command leaves no partial output.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let f = File::create(&tmp).with_context(|| format!("cannot create `{}`", tmp.display()))?;
        let mut w = BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush())
            .with_context(|| format!("cannot write `{}`", tmp.display()))?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot write `{}`", path.display()))
}

fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, body),
        None => {
            let mut buf = Vec::new();
            body(&mut buf)?;
            io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}

fn transfer_curve(mut cfg: SimulationConfig, args: TransferArgs) -> Result<()> {
    if let Some(s) = args.source {
        cfg.transfer.source = s;
    }
    if let Some(seed) = args.seed {
        cfg.sllg.seed = seed;
    }
    cfg.validate()?;
    let curve = cfg.transfer_characteristic()?;
    let fit = fit_linear_region(&curve, &cfg.fit_policy())?;
    let linearized = cfg.magnet_params()?.landscape_constants()?.linearized_kappa(cfg.pair()?.r_ap);
    write_atomic(&args.out, |w| curve.write_csv(w))?;
    emit(args.summary.as_deref(), |w| {
        writeln!(w, "source = {}", curve.provenance())?;
        if cfg.transfer.source == "sllg" {
            writeln!(w, "trajectories = {}", curve.trajectories())?;
            writeln!(w, "seed = {}", cfg.sllg.seed)?;
            let unsettled: usize = curve.samples().iter().map(|s| s.unsettled).sum();
            writeln!(w, "unsettled_trajectories = {unsettled}")?;
        }
        fit.write_summary(&mut *w)?;
        writeln!(w, "kappa_linearized_per_kohm_v = {:.6}", linearized * 1e3)
    })
}

fn parse_matrix(path: &Path) -> Result<IntegerMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    text.parse().with_context(|| format!("in `{}`", path.display()))
}

fn parse_noise(s: &str) -> Result<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => bail!("--noise must be `on` or `off`, got `{other}`"),
    }
}

fn matmul(mut cfg: SimulationConfig, args: MatmulArgs) -> Result<()> {
    if let Some(m) = args.mode {
        cfg.engine.mode = m;
    }
    if let Some(f) = args.fidelity {
        cfg.engine.fidelity = f;
    }
    if let Some(n) = &args.noise {
        cfg.engine.noise = parse_noise(n)?;
    }
    cfg.validate()?;
    if args.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let a = parse_matrix(&args.a)?;
    let b = parse_matrix(&args.b)?;
    let mode: ExecutionMode = cfg.mode()?;
    let fidelity: Fidelity = cfg.fidelity()?;
    let seed = args.seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    let accel = cfg.accelerator()?;
    let reports: Vec<RunReport> = (0..args.repeat)
        .map(|k| accel.matmul(&a, &b, mode, fidelity, cfg.engine.noise, seed.wrapping_add(k)))
        .collect::<Result<_, _>>()?;
    let first = &reports[0];
    let summary = |w: &mut dyn Write| -> io::Result<()> {
        first.write_summary(&mut *w)?;
        if reports.len() > 1 {
            let errs: Vec<f64> = reports.iter().map(|r| r.error_rate()).collect();
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            let mae = reports.iter().map(|r| r.mean_abs_error()).sum::<f64>() / reports.len() as f64;
            writeln!(w, "repeat = {}", reports.len())?;
            writeln!(w, "seeds = {}..={}", seed, seed.wrapping_add(args.repeat - 1))?;
            writeln!(w, "mean_error_rate = {mean:.6}")?;
            writeln!(w, "max_error_rate = {worst:.6}")?;
            writeln!(w, "mean_abs_error_over_seeds = {mae:.9}")?;
        }
        Ok(())
    };
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
            write_atomic(&dir.join("report.csv"), |w| first.write_csv(w))?;
            if reports.len() > 1 {
                write_atomic(&dir.join("seeds.csv"), |w| {
                    writeln!(w, "seed,rounded_errors,error_rate,mean_abs_error,energy_j")?;
                    for r in &reports {
                        writeln!(
                            w,
                            "{},{},{:.6},{:.9},{:.6e}",
                            r.seed,
                            r.rounded_errors(),
                            r.error_rate(),
                            r.mean_abs_error(),
                            r.total_energy()
                        )?;
                    }
                    Ok(())
                })?;
            }
            write_atomic(&dir.join("summary.txt"), summary)
        }
        None => emit(None, summary),
    }
}

fn parse_sweep(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<usize>() {
            Ok(0) | Err(_) => bail!("--sweep entries must be positive integers, got `{t}`"),
            Ok(n) => Ok(n),
        })
        .collect()
}

fn report(cfg: SimulationConfig, args: ReportArgs) -> Result<()> {
    let sweep = parse_sweep(&args.sweep)?;
    let n_max = match args.n_max {
        Some(0) => bail!("--n-max must be at least 1"),
        Some(n) => n,
        None => cfg.n_max()?,
    };
    let cost = cfg.cost_model(n_max)?;
    let rows: Vec<CrossbarComparison> = sweep.iter().map(|&n| crossbar_compare(n, n_max, &cost)).collect();
    emit(args.out.as_deref(), |w| {
        writeln!(w, "{}", CrossbarComparison::CSV_HEADER)?;
        for r in &rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })?;
    if args.out.is_some() {
        let per_mac = cost.worst_mac_energy();
        println!("n_max = {n_max}");
        println!("strip_resistance_ohm = {:.6}", cost.strip_resistance);
        println!("max_current_ua = {:.6}", cost.i_max * 1e6);
        println!("energy_per_mac_aj = {:.6}", per_mac * 1e18);
        println!("breakeven_xi_aj = {:.6}", per_mac * 1e18);
        for term in EXCLUDED_TERMS {
            println!("excluded = {term}");
        }
    }
    Ok(())
}

fn calibrate(cfg: SimulationConfig, args: CalibrateArgs) -> Result<()> {
    let block = cfg.calibrate()?;
    let wrapped = SimulationConfig {
        calibration: Some(block),
        ..SimulationConfig::default()
    };
    // Only the [calibration] table is emitted, ready to append to a config.
    let text = wrapped.to_toml();
    let start = text
        .find("[calibration]")
        .context("calibration block missing from serialized config")?;
    let out = text[start..].to_string();
    emit(args.out.as_deref(), |w| w.write_all(out.as_bytes()))
}
