//! Command-line surface: `garch-stable <command> --config <file> [--seed N]
//! [--out DIR] [--threads N]`.
//!
//! Exit status is 0 on success, 1 for usage and configuration errors and 2
//! for failures while running.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{self as ex, ExperimentConfig};
use crate::garch;
use crate::innovations::SeedSpec;
use crate::qmle;
use crate::tails;

#[derive(Debug, Parser)]
#[command(name = "garch-stable", version, about = "GARCH QMLE experiments with heavy-tailed innovations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; `RAYON_NUM_THREADS` applies when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write per-fit wall-clock times (`rate` only); not reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path at theta0.
    Simulate(Common),
    /// Fit the QMLE to `data.input` or to a simulated path.
    Fit(Common),
    /// Error-rate experiment over `n_grid`.
    Rate(Common),
    /// Standardized errors at the largest size and their tail index.
    StableLimit(Common),
    /// Normalized martingale-transform sums.
    MtSums(Common),
    /// Top Lyapunov exponents of the state recursion.
    Lyapunov(Common),
    /// State recursion against the direct recursions.
    SreCheck(Common),
    /// Hill report for a single-column data file.
    Tails(Common),
    /// Asymptotic covariance matrices of the estimator.
    Sandwich(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::Fit(c) => ("fit", c),
            Command::Rate(c) => ("rate", c),
            Command::StableLimit(c) => ("stable-limit", c),
            Command::MtSums(c) => ("mt-sums", c),
            Command::Lyapunov(c) => ("lyapunov", c),
            Command::SreCheck(c) => ("sre-check", c),
            Command::Tails(c) => ("tails", c),
            Command::Sandwich(c) => ("sandwich", c),
        }
    }
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::InvalidParameter(_))
}

/// Run the tool on `argv` (program name first) and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (kind, common) = cli.command.parts();

    let mut cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = cfg.validate_for(kind) {
        eprintln!("error: {e}");
        return 1;
    }
    if common.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return 1;
    }

    let outcome = match common.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(kind, &cfg, &out, common.timing)),
            Err(e) => Err(Error::Numerical(format!("cannot start worker pool: {e}"))),
        },
        None => dispatch(kind, &cfg, &out, common.timing),
    };
    match outcome {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_validation(&e) {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(kind: &str, cfg: &ExperimentConfig, out: &Path, timing: bool) -> Result<String> {
    match kind {
        "simulate" => simulate(cfg, out),
        "fit" => fit(cfg, out),
        "rate" => rate(cfg, out, timing),
        "stable-limit" => stable_limit(cfg, out),
        "mt-sums" => mt_sums(cfg, out),
        "lyapunov" => lyapunov(cfg, out),
        "sre-check" => sre_check(cfg, out),
        "tails" => tails_cmd(cfg, out),
        "sandwich" => sandwich(cfg, out),
        other => Err(Error::Config(format!("unknown experiment kind `{other}`"))),
    }
}

fn precheck_seed(cfg: &ExperimentConfig) -> SeedSpec {
    SeedSpec::new(cfg.base_seed, u64::MAX)
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let theta0 = cfg.theta0()?;
    let est = garch::require_stationary(&theta0, &cfg.innovation, precheck_seed(cfg))?;
    let n = *cfg.n_grid.last().expect("validated grid");
    let path = garch::simulate(&theta0, &cfg.innovation, n, cfg.burn_in, cfg.replicate_seed(0))?;
    let mut s = String::from("t,x,sigma2,z\n");
    for t in 0..path.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            t + 1,
            ex::fmt_num(path.x[t]),
            ex::fmt_num(path.sigma2[t]),
            ex::fmt_num(path.z[t])
        );
    }
    let file = ex::write_file(out, "path.csv", &s)?;
    Ok(format!(
        "simulate: {n} observations (lyapunov {:.4} +- {:.4}) -> {}",
        est.rho_hat,
        est.std_err,
        file.display()
    ))
}

fn fit(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let k = cfg.compact_set()?;
    let x = match &cfg.data.input {
        Some(p) => ex::read_series(p)?,
        None => {
            let theta0 = cfg.theta0()?;
            garch::require_stationary(&theta0, &cfg.innovation, precheck_seed(cfg))?;
            let n = *cfg.n_grid.last().expect("validated grid");
            garch::simulate(&theta0, &cfg.innovation, n, cfg.burn_in, cfg.replicate_seed(0))?.x
        }
    };
    let res = qmle::fit(&x, &k, &cfg.optimizer)?;
    let file = ex::write_file(out, "fit.json", &ex::to_json(&res)?)?;
    Ok(format!(
        "fit: theta_hat = {:?}, loglik = {:.6}, converged = {} -> {}",
        res.theta_hat.to_vec(),
        res.loglik,
        res.converged,
        file.display()
    ))
}

fn rate(cfg: &ExperimentConfig, out: &Path, timing: bool) -> Result<String> {
    let res = ex::run_rate_experiment(cfg)?;
    ex::write_file(out, ex::RATE_CSV, &ex::rate_csv(&res))?;
    if timing {
        ex::write_file(out, ex::RATE_TIMING_CSV, &ex::rate_timing_csv(&res))?;
    }
    ex::write_file(out, "rate_summary.json", &ex::to_json(&res.summary)?)?;
    let slope = match res.summary.slope {
        Some(s) => format!("{s:.4}"),
        None => "none (fewer than two sizes)".into(),
    };
    Ok(format!(
        "rate: {} rows, slope {slope}, {} excluded -> {}",
        res.rows.len(),
        res.summary.excluded_total,
        out.display()
    ))
}

fn stable_limit(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let res = ex::run_stable_limit(cfg)?;
    ex::write_file(out, "stable_limit.csv", &ex::sample_csv(&res.replicates, &res.standardized, "std_error"))?;
    ex::write_file(out, "stable_limit.json", &ex::to_json(&res)?)?;
    let alpha1 = res.components.get(1).and_then(|c| c.hill).map(|h| h.alpha_hat);
    Ok(format!(
        "stable-limit: n = {}, {} replicates, hill(alpha_1) = {alpha1:?} -> {}",
        res.n,
        res.standardized.len(),
        out.display()
    ))
}

fn mt_sums(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let res = ex::run_mt_sums(cfg)?;
    let reps: Vec<usize> = (0..res.replicates.len()).collect();
    let sample: Vec<Vec<f64>> = res.replicates.iter().map(|r| r.normalized_sum.clone()).collect();
    ex::write_file(out, "mt_sums.csv", &ex::sample_csv(&reps, &sample, "sum"))?;
    ex::write_file(out, "mt_sums.json", &ex::to_json(&res)?)?;
    let alpha0 = res.components.first().and_then(|c| c.hill).map(|h| h.alpha_hat);
    Ok(format!(
        "mt-sums: n = {}, {} replicates, hill(component 0) = {alpha0:?} -> {}",
        res.n,
        res.replicates.len(),
        out.display()
    ))
}

fn lyapunov(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let res = ex::run_lyapunov(cfg)?;
    ex::write_file(out, "lyapunov.json", &ex::to_json(&res)?)?;
    Ok(format!(
        "lyapunov: volatility {:.5} +- {:.5}, full {:.5} +- {:.5} -> {}",
        res.volatility_block.rho_hat,
        res.volatility_block.std_err,
        res.full_system.rho_hat,
        res.full_system.std_err,
        out.display()
    ))
}

fn sre_check(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let res = ex::run_sre_check(cfg)?;
    ex::write_file(out, "sre_check.json", &ex::to_json(&res)?)?;
    Ok(format!(
        "sre-check: dim {}, rho(P(0)) = {:.5}, lyapunov {:.5} +- {:.5}, moment decay {}, max relative deviation {:.3e} -> {}",
        res.dim,
        res.p0_spectral_radius,
        res.lyapunov.rho_hat,
        res.lyapunov.std_err,
        if res.moment_decay.passed() { "pass" } else { "fail" },
        res.equivalence.max_rel_dev(),
        out.display()
    ))
}

fn tails_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let input = cfg.data.input.as_ref().expect("validated input");
    let x: Vec<f64> = ex::read_series(input)?.iter().map(|v| v.abs()).collect();
    let k = cfg.data.k.unwrap_or_else(|| tails::default_k(x.len()));
    let rep = tails::hill(&x, k)?;
    ex::write_file(out, "tails.json", &ex::to_json(&rep)?)?;
    ex::write_file(out, "tails_sweep.csv", &ex::hill_sweep_csv(&x))?;
    Ok(format!(
        "tails: alpha_hat = {:.4} (k = {}, 95% band [{:.4}, {:.4}]) -> {}",
        rep.alpha_hat,
        rep.k_used,
        rep.ci_low,
        rep.ci_high,
        out.display()
    ))
}

fn sandwich(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let res = ex::run_sandwich(cfg)?;
    ex::write_file(out, "sandwich.json", &ex::to_json(&res)?)?;
    Ok(format!(
        "sandwich: path {} steps, E Z^4 = {:.4}, B0 eigenvalues {:?} -> {}",
        res.path_len,
        res.ez4,
        res.b0_eigenvalues,
        out.display()
    ))
}
