mod svg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ipmlab::harness::{
    certificates_for, write_certificate_csv, CertificateConfig, Experiment, NGrid, RateConfig, Target,
};
use ipmlab::lecam::{certificate_for_pair, LowerBoundCertificate};
use ipmlab::moment_priors::{choose_k, construct_prior_pair};
use ipmlab::Error;

const USAGE: u8 = 2;
const SOLVER: u8 = 3;
const RUNTIME: u8 = 4;

/// Wavelet-domain IPM experiments: moment-matched priors, lower-bound
/// certificates and Monte Carlo rate sweeps.
#[derive(Parser)]
#[command(name = "ipmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a moment-matched prior pair and write it as JSON.
    Priors(PriorsArgs),
    /// Evaluate the lower-bound certificate at one n or over an n-grid.
    Certificate(CertificateArgs),
    /// Monte Carlo error sweep with a log-log slope fit.
    RateSweep(RateSweepArgs),
}

#[derive(Args)]
struct PriorsArgs {
    /// Number of matched even moments.
    #[arg(long = "K")]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Grid points in [-tau, tau].
    #[arg(long, default_value_t = 2001)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("sizes").required(true).args(["n", "n_grid"]))]
struct CertificateArgs {
    #[arg(long)]
    n: Option<u64>,
    /// Geometric grid start:stop:factor.
    #[arg(long)]
    n_grid: Option<NGrid>,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// K = ceil(c ln n / ln ln n).
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 2001)]
    grid: usize,
    /// Overrides the truncation level chosen from n.
    #[arg(long = "J")]
    j: Option<u32>,
    /// JSON for a single n, CSV for an n-grid; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// With --n-grid, also write the full certificates as a JSON array.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RateSweepArgs {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// null, boundary, hard or dudley.
    #[arg(long)]
    target: Option<Target>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_grid: Option<NGrid>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV of per-n mean errors.
    #[arg(long)]
    out: PathBuf,
    /// Also write the slope summary JSON here (it always goes to stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Log-log chart of the sweep.
    #[arg(long)]
    svg: Option<PathBuf>,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: USAGE, message: message.into() }
    }
}

/// Validation errors are usage errors, solver errors keep their own code
/// and anything else happened while running.
fn classify(e: Error) -> Failure {
    let code = match e {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) => USAGE,
        Error::Solver { .. } => SOLVER,
        _ => RUNTIME,
    };
    Failure { code, message: e.to_string() }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure { code: RUNTIME, message: e.to_string() }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(runtime),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn cmd_priors(a: PriorsArgs) -> Result<(), Failure> {
    let pair = construct_prior_pair(a.k, a.tau, a.grid).map_err(classify)?;
    write_file(&a.out, &to_json(&pair))?;
    println!("gap = {}", pair.gap);
    println!("kappa = {}", pair.kappa);
    Ok(())
}

fn certificates(a: &CertificateArgs, ns: &[u64]) -> Result<Vec<LowerBoundCertificate>, Failure> {
    let config = CertificateConfig {
        n_grid: a.n_grid.unwrap_or_default(),
        beta: a.beta,
        gamma: a.gamma,
        d: a.d,
        c: a.c,
        tau: a.tau,
        grid_size: a.grid,
    };
    if !(a.beta >= 0.0 && a.beta.is_finite() && a.gamma >= 0.0 && a.gamma.is_finite()) || a.d == 0 {
        return Err(Failure::usage("beta and gamma must be finite and nonnegative, d positive"));
    }
    let Some(j) = a.j else {
        return certificates_for(ns, &config).map_err(classify);
    };
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 16 {
            return Err(Failure::usage(format!("certificate needs n >= 16, got {n}")));
        }
        let pair = construct_prior_pair(choose_k(n, a.c).map_err(classify)?, a.tau, a.grid).map_err(classify)?;
        out.push(certificate_for_pair(&pair, n, a.beta, a.gamma, a.d, j).map_err(classify)?);
    }
    Ok(out)
}

fn cmd_certificate(a: CertificateArgs) -> Result<(), Failure> {
    let ns = match (a.n, a.n_grid) {
        (Some(n), _) => vec![n],
        (None, Some(g)) => g.values(),
        (None, None) => unreachable!("clap enforces the group"),
    };
    let certs = certificates(&a, &ns)?;
    for c in certs.iter().filter(|c| !c.informative) {
        eprintln!("note: certificate at n = {} has value {:.3e} <= 0 and is not informative", c.n, c.value);
    }
    if a.n.is_some() {
        return emit(a.out.as_deref(), &to_json(&certs[0]));
    }
    let mut csv = Vec::new();
    write_certificate_csv(&certs, &mut csv).map_err(classify)?;
    emit(a.out.as_deref(), &csv)?;
    if let Some(p) = &a.json {
        write_file(p, &to_json(&certs))?;
    }
    Ok(())
}

fn rate_config(a: &RateSweepArgs) -> Result<RateConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<RateConfig>(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let (Some(target), Some(beta), Some(gamma)) = (a.target, a.beta, a.gamma) else {
                return Err(Failure::usage("rate-sweep needs --target, --beta and --gamma (or --config)"));
            };
            RateConfig::new(target, 1, beta, gamma)
        }
    };
    if let Some(v) = a.target {
        cfg.target = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.n_grid {
        cfg.n_grid = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn cmd_rate_sweep(a: RateSweepArgs) -> Result<(), Failure> {
    let cfg = rate_config(&a)?;
    let experiment = Experiment::new(cfg.clone()).map_err(classify)?;
    // Past validation every failure is a runtime one.
    let report = experiment.run().map_err(runtime)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(runtime)?;
    write_file(&a.out, &csv)?;
    let summary = to_json(&report.summary());
    std::io::stdout().write_all(&summary).map_err(runtime)?;
    if let Some(p) = &a.summary {
        write_file(p, &summary)?;
    }
    if let Some(p) = &a.svg {
        let series = svg::Series {
            label: format!("{} (slope {:.3})", cfg.target, report.fit.slope),
            points: report.rows.iter().map(|r| (r.n as f64, r.mean_error)).collect(),
            fit: Some((report.fit.intercept, report.fit.slope)),
        };
        let title = format!(
            "{} family, beta = {}, gamma = {}, d = {}; theory {:.3}",
            cfg.target, cfg.beta, cfg.gamma, cfg.d, report.theoretical_exponent
        );
        write_file(p, svg::render(&title, "n", "mean |error|", &[series]).as_bytes())?;
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("IPMLAB_THREADS") else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("IPMLAB_THREADS = '{raw}' is not a nonnegative integer")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(runtime)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Priors(a) => cmd_priors(a),
        Command::Certificate(a) => cmd_certificate(a),
        Command::RateSweep(a) => cmd_rate_sweep(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
