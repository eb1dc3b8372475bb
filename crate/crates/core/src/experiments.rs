//! Monte-Carlo drivers, configuration and persistence.
//!
//! Every replicate `r` draws from `SeedSpec::new(base_seed, 0).substream(r)`
//! whatever the sample size, so the paths for the different `n` of one
//! replicate are prefixes of each other. Replicates run on the rayon pool and
//! are collected in replicate order, so results do not depend on the thread
//! count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::garch::{self, GarchParams, DEFAULT_BURN_IN};
use crate::innovations::{normalizing_a_n, InnovationModel, SeedSpec};
use crate::qmle::{self, CompactSetK, OptimizerSettings};
use crate::sre::{self, LyapunovEstimate};
use crate::stats;
use crate::tails::{self, TailReport};

/// Stream reserved for the stationarity pre-check.
const PRECHECK_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KSpec {
    pub m: f64,
    pub upper: f64,
    pub beta_bar: f64,
}

impl Default for KSpec {
    fn default() -> Self {
        Self {
            m: 0.01,
            upper: 5.0,
            beta_bar: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSpec {
    pub horizon: usize,
    pub reps: usize,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            horizon: 2000,
            reps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichSpec {
    pub path_len: usize,
}

impl Default for SandwichSpec {
    fn default() -> Self {
        Self { path_len: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SreCheckSpec {
    pub steps: usize,
    pub start: usize,
}

impl Default for SreCheckSpec {
    fn default() -> Self {
        Self { steps: 500, start: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSpec {
    /// Single-column numeric text file.
    pub input: Option<PathBuf>,
    /// Hill `k`; defaults to `floor(n^0.6)` capped at `n/10`.
    pub k: Option<usize>,
}

/// Experiment configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub theta0: Option<ThetaSpec>,
    #[serde(default = "default_innovation")]
    pub innovation: InnovationModel,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, rename = "K")]
    pub k: KSpec,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
    #[serde(default)]
    pub sandwich: SandwichSpec,
    #[serde(default)]
    pub sre_check: SreCheckSpec,
    #[serde(default)]
    pub data: InputSpec,
}

fn default_innovation() -> InnovationModel {
    InnovationModel::Gaussian
}
fn default_n_grid() -> Vec<usize> {
    vec![2000, 8000, 32000]
}
fn default_replications() -> usize {
    200
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

pub const KINDS: [&str; 9] = [
    "simulate",
    "fit",
    "rate",
    "stable-limit",
    "mt-sums",
    "lyapunov",
    "sre-check",
    "tails",
    "sandwich",
];

impl ExperimentConfig {
    /// Defaults for everything except `theta0`.
    pub fn new(theta0: &GarchParams, innovation: InnovationModel) -> Self {
        Self {
            kind: None,
            theta0: Some(ThetaSpec {
                alpha: theta0.alpha.clone(),
                beta: theta0.beta.clone(),
            }),
            innovation,
            n_grid: default_n_grid(),
            replications: default_replications(),
            k: KSpec::default(),
            optimizer: OptimizerSettings::default(),
            base_seed: 0,
            output: None,
            burn_in: DEFAULT_BURN_IN,
            lyapunov: LyapunovSpec::default(),
            sandwich: SandwichSpec::default(),
            sre_check: SreCheckSpec::default(),
            data: InputSpec::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        // fills derived innovation parameters; invalid ones are reported by validate_for
        if let Ok(m) = cfg.innovation.validated() {
            cfg.innovation = m;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn theta0(&self) -> Result<GarchParams> {
        let spec = self
            .theta0
            .as_ref()
            .ok_or_else(|| Error::Config("missing field `theta0` (theta0.alpha, theta0.beta)".into()))?;
        GarchParams::new(spec.alpha.clone(), spec.beta.clone())
            .map_err(|e| Error::Config(format!("invalid `theta0`: {e}")))
    }

    pub fn compact_set(&self) -> Result<CompactSetK> {
        let th = self.theta0()?;
        CompactSetK::new(self.k.m, self.k.upper, self.k.beta_bar, th.p(), th.q())
            .map_err(|e| Error::Config(format!("invalid `K`: {e}")))
    }

    fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.base_seed, 0)
    }

    pub fn replicate_seed(&self, r: usize) -> SeedSpec {
        self.seed().substream(r as u64)
    }

    /// Checks shared by all kinds, plus `kind`-specific ones.
    pub fn validate_for(&self, kind: &str) -> Result<()> {
        if !KINDS.contains(&kind) {
            return Err(Error::Config(format!("unknown experiment kind `{kind}`")));
        }
        if let Some(k) = &self.kind {
            if k != kind {
                return Err(Error::Config(format!(
                    "field `kind` is `{k}` but the subcommand is `{kind}`"
                )));
            }
        }
        self.innovation
            .validated()
            .map_err(|e| Error::Config(format!("invalid `innovation`: {e}")))?;
        if kind == "tails" {
            if self.data.input.is_none() {
                return Err(Error::Config("missing field `data.input`".into()));
            }
            return Ok(());
        }
        let theta0 = self.theta0()?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("field `n_grid` must hold positive sizes".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("field `n_grid` must be strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("field `replications` must be at least 1".into()));
        }
        if matches!(kind, "fit" | "rate" | "stable-limit") {
            let k = self.compact_set()?;
            if !k.has_interior_point(&theta0.to_vec()) {
                return Err(Error::Config(format!(
                    "field `theta0` = {:?} is not in the interior of `K`",
                    theta0.to_vec()
                )));
            }
            let min_n = 50 * theta0.dim();
            if self.n_grid[0] < min_n {
                return Err(Error::Config(format!(
                    "field `n_grid` entries must be at least 50*(p+q+1) = {min_n}"
                )));
            }
        }
        if matches!(kind, "stable-limit" | "mt-sums") && self.replications < 20 {
            return Err(Error::Config(
                "field `replications` must be at least 20 for tail estimates".into(),
            ));
        }
        if kind == "stable-limit" && self.innovation.square_tail_index() >= 2.0 && self.innovation != InnovationModel::Gaussian {
            return Err(Error::Config("stable-limit needs a heavy-tailed or Gaussian innovation".into()));
        }
        if kind == "sandwich" && !self.innovation.has_finite_fourth_moment() {
            return Err(Error::Config(format!(
                "sandwich needs E Z^4 < inf; {} has E Z^4 = inf",
                self.innovation.name()
            )));
        }
        if matches!(kind, "lyapunov" | "sre-check") && (self.lyapunov.horizon < 100 || self.lyapunov.reps < 10) {
            return Err(Error::Config(
                "fields `lyapunov.horizon` >= 100 and `lyapunov.reps` >= 10 required".into(),
            ));
        }
        Ok(())
    }
}

/// Rate `x_n`: `sqrt(n)` for finite fourth moments, `n / a_n` otherwise.
pub fn rate_x_n(model: &InnovationModel, n: usize) -> Result<f64> {
    if model.has_finite_fourth_moment() {
        Ok((n as f64).sqrt())
    } else {
        Ok(n as f64 / normalizing_a_n(model, n)?)
    }
}

/// One `(n, replicate)` fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub replicate: usize,
    pub converged: bool,
    /// Simulation or fit error; estimates are NaN.
    pub failed: bool,
    pub theta_hat: Vec<f64>,
    pub error: Vec<f64>,
    pub x_n: f64,
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl RateRow {
    pub fn usable(&self) -> bool {
        !self.failed && self.converged
    }

    pub fn sup_error(&self) -> f64 {
        self.error.iter().fold(0.0, |a, e| a.max(e.abs()))
    }

    pub fn standardized_error(&self) -> Vec<f64> {
        self.error.iter().map(|e| e * self.x_n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLevel {
    pub n: usize,
    pub median_error: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub levels: Vec<RateLevel>,
    /// Slope of log median error on log n; `None` with fewer than two sizes.
    pub slope: Option<f64>,
    pub slope_std_err: Option<f64>,
    pub excluded_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub theta0: Vec<f64>,
    pub model: InnovationModel,
    pub rows: Vec<RateRow>,
    pub summary: RateSummary,
}

/// Medians of `|theta_hat - theta0|_inf` per size over usable rows, and the
/// log-log slope.
pub fn summarize_rate(rows: &[RateRow], n_grid: &[usize]) -> RateSummary {
    let levels: Vec<RateLevel> = n_grid
        .iter()
        .map(|&n| {
            let at_n: Vec<&RateRow> = rows.iter().filter(|r| r.n == n).collect();
            let errs: Vec<f64> = at_n.iter().filter(|r| r.usable()).map(|r| r.sup_error()).collect();
            RateLevel {
                n,
                median_error: if errs.is_empty() { f64::NAN } else { stats::median(&errs) },
                used: errs.len(),
                excluded: at_n.len() - errs.len(),
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.used > 0 && l.median_error > 0.0)
        .map(|l| ((l.n as f64).ln(), l.median_error.ln()))
        .collect();
    let (slope, slope_std_err) = if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let f = stats::linear_fit(&x, &y);
        (Some(f.slope), f.slope_std_err.is_finite().then_some(f.slope_std_err))
    } else {
        (None, None)
    };
    RateSummary {
        excluded_total: levels.iter().map(|l| l.excluded).sum(),
        levels,
        slope,
        slope_std_err,
    }
}

fn check_stationary(cfg: &ExperimentConfig, theta0: &GarchParams) -> Result<LyapunovEstimate> {
    garch::require_stationary(theta0, &cfg.innovation, SeedSpec::new(cfg.base_seed, PRECHECK_STREAM))
}

/// Simulate replicate `r` at size `n` and fit it.
pub fn fit_replicate(cfg: &ExperimentConfig, n: usize, r: usize) -> Result<RateRow> {
    let theta0 = cfg.theta0()?;
    let k = cfg.compact_set()?;
    let x_n = rate_x_n(&cfg.innovation, n)?;
    Ok(fit_one(cfg, &theta0, &k, n, r, x_n))
}

fn fit_one(cfg: &ExperimentConfig, theta0: &GarchParams, k: &CompactSetK, n: usize, r: usize, x_n: f64) -> RateRow {
    let start = Instant::now();
    let d = theta0.dim();
    let outcome = garch::simulate(theta0, &cfg.innovation, n, cfg.burn_in, cfg.replicate_seed(r))
        .and_then(|path| qmle::fit(&path.x, k, &cfg.optimizer));
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(f) => {
            let theta_hat = f.theta_hat.to_vec();
            let error = theta_hat.iter().zip(theta0.to_vec()).map(|(a, b)| a - b).collect();
            RateRow {
                n,
                replicate: r,
                converged: f.converged,
                failed: false,
                theta_hat,
                error,
                x_n,
                runtime_ms,
            }
        }
        Err(_) => RateRow {
            n,
            replicate: r,
            converged: false,
            failed: true,
            theta_hat: vec![f64::NAN; d],
            error: vec![f64::NAN; d],
            x_n,
            runtime_ms,
        },
    }
}

/// Fit every `(n, replicate)` pair of the grid.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateResult> {
    cfg.validate_for("rate")?;
    let theta0 = cfg.theta0()?;
    let k = cfg.compact_set()?;
    check_stationary(cfg, &theta0)?;
    let x_ns = cfg
        .n_grid
        .iter()
        .map(|&n| rate_x_n(&cfg.innovation, n))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.replications).map(move |r| (i, r)))
        .collect();
    let rows: Vec<RateRow> = jobs
        .par_iter()
        .map(|&(i, r)| fit_one(cfg, &theta0, &k, cfg.n_grid[i], r, x_ns[i]))
        .collect();
    let summary = summarize_rate(&rows, &cfg.n_grid);
    Ok(RateResult {
        theta0: theta0.to_vec(),
        model: cfg.innovation,
        rows,
        summary,
    })
}

/// Per-component tail and shape summary of a replicate sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub hill: Option<TailReport>,
    /// Hill index of sums of consecutive replicate pairs.
    pub pair_sum_hill: Option<TailReport>,
    pub kurtosis: f64,
}

fn summarize_components(sample: &[Vec<f64>]) -> Vec<ComponentSummary> {
    let d = sample.first().map_or(0, Vec::len);
    (0..d)
        .map(|c| {
            let col: Vec<f64> = sample.iter().map(|v| v[c]).collect();
            let pairs: Vec<f64> = col.chunks_exact(2).map(|w| w[0] + w[1]).collect();
            ComponentSummary {
                hill: tails::hill_abs_default(&col).ok(),
                pair_sum_hill: tails::hill_abs_default(&pairs).ok(),
                kurtosis: stats::kurtosis(&col),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableLimitResult {
    pub n: usize,
    pub x_n: f64,
    /// `x_n (theta_hat - theta0)` for each usable replicate, in replicate order.
    pub standardized: Vec<Vec<f64>>,
    pub replicates: Vec<usize>,
    pub excluded: usize,
    pub components: Vec<ComponentSummary>,
}

/// Build the stable-limit summary from already fitted rows at one size.
pub fn stable_limit_from_rows(rows: &[RateRow]) -> Result<StableLimitResult> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("no replicate rows".into()))?;
    if rows.iter().any(|r| r.n != first.n) {
        return Err(Error::InvalidInput("rows mix sample sizes".into()));
    }
    let usable: Vec<&RateRow> = rows.iter().filter(|r| r.usable()).collect();
    let standardized: Vec<Vec<f64>> = usable.iter().map(|r| r.standardized_error()).collect();
    Ok(StableLimitResult {
        n: first.n,
        x_n: first.x_n,
        replicates: usable.iter().map(|r| r.replicate).collect(),
        excluded: rows.len() - usable.len(),
        components: summarize_components(&standardized),
        standardized,
    })
}

/// Many fits at the largest size of the grid; tail summary of the
/// standardized errors.
pub fn run_stable_limit(cfg: &ExperimentConfig) -> Result<StableLimitResult> {
    cfg.validate_for("stable-limit")?;
    let theta0 = cfg.theta0()?;
    let k = cfg.compact_set()?;
    check_stationary(cfg, &theta0)?;
    let n = *cfg.n_grid.last().expect("validated grid");
    let x_n = rate_x_n(&cfg.innovation, n)?;
    let rows: Vec<RateRow> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| fit_one(cfg, &theta0, &k, n, r, x_n))
        .collect();
    stable_limit_from_rows(&rows)
}

/// One replicate of the martingale transform `sum_t G_t Y_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtReplicate {
    /// `a_n^{-1} sum_t G_t Y_t` (or `n^{-1/2}` scaling with finite fourth moment).
    pub normalized_sum: Vec<f64>,
    /// `min_t |G_t|_1`.
    pub min_g_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtSumsResult {
    pub n: usize,
    pub normalizer: f64,
    /// `1 / max_i alpha_i`.
    pub g_lower_bound: f64,
    pub replicates: Vec<MtReplicate>,
    pub components: Vec<ComponentSummary>,
}

/// `G_t = h'_t(theta0)/sigma_t^2` and `Y_t = (Z_t^2 - 1)/2` along one
/// simulated path.
pub fn martingale_terms(
    theta0: &GarchParams,
    model: &InnovationModel,
    n: usize,
    burn_in: usize,
    seed: SeedSpec,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let path = garch::simulate(theta0, model, n, burn_in, seed)?;
    let f = filter::stationary_filter(&path, theta0)?;
    let g = f
        .grad_rows()
        .zip(&path.sigma2)
        .map(|(row, s)| row.iter().map(|v| v / s).collect())
        .collect();
    let y = path.z.iter().map(|z| 0.5 * (z * z - 1.0)).collect();
    Ok((g, y))
}

pub fn run_mt_sums(cfg: &ExperimentConfig) -> Result<MtSumsResult> {
    cfg.validate_for("mt-sums")?;
    let theta0 = cfg.theta0()?;
    check_stationary(cfg, &theta0)?;
    let n = *cfg.n_grid.last().expect("validated grid");
    let normalizer = if cfg.innovation.has_finite_fourth_moment() {
        (n as f64).sqrt()
    } else {
        normalizing_a_n(&cfg.innovation, n)?
    };
    let g_lower_bound = 1.0 / theta0.alpha.iter().fold(0.0f64, |a, b| a.max(*b));
    let replicates = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let (g, y) = martingale_terms(&theta0, &cfg.innovation, n, cfg.burn_in, cfg.replicate_seed(r))?;
            let d = theta0.dim();
            let mut sum = vec![0.0; d];
            let mut min_g_l1 = f64::INFINITY;
            for (gt, yt) in g.iter().zip(&y) {
                for c in 0..d {
                    sum[c] += gt[c] * yt;
                }
                min_g_l1 = min_g_l1.min(gt.iter().map(|v| v.abs()).sum());
            }
            Ok(MtReplicate {
                normalized_sum: sum.iter().map(|s| s / normalizer).collect(),
                min_g_l1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sample: Vec<Vec<f64>> = replicates.iter().map(|r| r.normalized_sum.clone()).collect();
    Ok(MtSumsResult {
        n,
        normalizer,
        g_lower_bound,
        components: summarize_components(&sample),
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    pub path_len: usize,
    /// Sample `E Z^4`.
    pub ez4: f64,
    /// Ergodic average of `h' h'^T / sigma^4`.
    pub info: Vec<Vec<f64>>,
    pub a0: Vec<Vec<f64>>,
    pub b0: Vec<Vec<f64>>,
    /// `B0^{-1} A0 B0^{-1}`.
    pub sandwich: Vec<Vec<f64>>,
    pub neg_inv_b0: Vec<Vec<f64>>,
    pub b0_eigenvalues: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `A0 = (E Z^4 - 1)/4 E[h'h'^T/sigma^4]`, `B0 = -1/2 E[h'h'^T/sigma^4]`
/// from one long stationary path.
pub fn run_sandwich(cfg: &ExperimentConfig) -> Result<SandwichResult> {
    cfg.validate_for("sandwich")?;
    let theta0 = cfg.theta0()?;
    check_stationary(cfg, &theta0)?;
    let len = cfg.sandwich.path_len;
    if len < 1000 {
        return Err(Error::Config("field `sandwich.path_len` must be at least 1000".into()));
    }
    let path = garch::simulate(&theta0, &cfg.innovation, len, cfg.burn_in, cfg.replicate_seed(0))?;
    let f = filter::stationary_filter(&path, &theta0)?;
    let d = theta0.dim();
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut u = vec![0.0; d];
    for (row, s) in f.grad_rows().zip(&path.sigma2) {
        for c in 0..d {
            u[c] = row[c] / s;
        }
        for a in 0..d {
            for b in 0..=a {
                info[(a, b)] += u[a] * u[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    info /= len as f64;
    let ez4 = stats::mean(&path.z.iter().map(|z| z.powi(4)).collect::<Vec<_>>());
    let a0 = &info * ((ez4 - 1.0) / 4.0);
    let b0 = &info * -0.5;
    let b_inv = b0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("B0 is singular".into()))?;
    let sandwich = &b_inv * &a0 * &b_inv;
    let neg_inv_b0 = -&b_inv;
    let mut eig: Vec<f64> = b0.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(SandwichResult {
        path_len: len,
        ez4,
        info: rows_of(&info),
        a0: rows_of(&a0),
        b0: rows_of(&b0),
        sandwich: rows_of(&sandwich),
        neg_inv_b0: rows_of(&neg_inv_b0),
        b0_eigenvalues: eig,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub volatility_block: LyapunovEstimate,
    pub full_system: LyapunovEstimate,
    pub companion_radius: f64,
    pub m1_zero_radius: f64,
}

/// Exponents of the volatility block and of the full state matrix.
pub fn run_lyapunov(cfg: &ExperimentConfig) -> Result<LyapunovReport> {
    cfg.validate_for("lyapunov")?;
    let theta0 = cfg.theta0()?;
    let sys = sre::build_sre(&theta0);
    let (h, r) = (cfg.lyapunov.horizon, cfg.lyapunov.reps);
    let seed = cfg.seed();
    Ok(LyapunovReport {
        volatility_block: sre::top_lyapunov(|z| sys.m1(z), &cfg.innovation, h, r, seed)?,
        full_system: sre::top_lyapunov(|z| sys.p_matrix(z), &cfg.innovation, h, r, seed.with_stream(1))?,
        companion_radius: sre::spectral_radius(&sys.companion())?,
        m1_zero_radius: sre::spectral_radius(&sys.m1(0.0))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SreEquivalence {
    pub steps: usize,
    pub start: usize,
    pub max_rel_dev_sigma2: f64,
    pub max_rel_dev_x2: f64,
    pub max_rel_dev_grad: f64,
}

impl SreEquivalence {
    pub fn max_rel_dev(&self) -> f64 {
        self.max_rel_dev_sigma2.max(self.max_rel_dev_x2).max(self.max_rel_dev_grad)
    }
}

/// Run the state recursion from the path state at `start` and compare it
/// with the simulated volatilities and the stationary filter gradients.
pub fn sre_check(
    theta0: &GarchParams,
    model: &InnovationModel,
    start: usize,
    steps: usize,
    burn_in: usize,
    seed: SeedSpec,
) -> Result<SreEquivalence> {
    let sys = sre::build_sre(theta0);
    let (p, q) = (sys.p, sys.q);
    let lags = p.max(q);
    if start < lags {
        return Err(Error::InvalidInput(format!("start index must be at least {lags}")));
    }
    let n = start + steps + 2;
    let path = garch::simulate(theta0, model, n, burn_in, seed)?;
    let f = filter::stationary_filter(&path, theta0)?;
    // path index i holds time t = i; the state at time t carries sigma2_{t+1}
    let t0 = start;
    let sigma2_lags: Vec<f64> = (0..q).map(|l| path.sigma2[t0 + 1 - l]).collect();
    let x2_lags: Vec<f64> = (0..p - 1).map(|l| path.x[t0 - l] * path.x[t0 - l]).collect();
    let grad_lags: Vec<Vec<f64>> = (0..q).map(|l| f.grad_at(t0 + 1 - l).to_vec()).collect();
    let y0 = sys.state_from_parts(&sigma2_lags, &x2_lags, &grad_lags);
    let z: Vec<f64> = path.z[t0 + 1..t0 + 1 + steps].to_vec();
    let states = sre::iterate_sre(&sys, &z, &y0)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut dev_s: f64 = 0.0;
    let mut dev_g: f64 = 0.0;
    let mut dev_x: f64 = 0.0;
    for (k, y) in states.iter().enumerate() {
        let t = t0 + 1 + k;
        dev_x = dev_x.max(rel(sys.x2_current(y), path.x[t] * path.x[t]));
        dev_s = dev_s.max(rel(sys.sigma2_next(y), path.sigma2[t + 1]));
        for (a, b) in sys.grad_next(y).iter().zip(f.grad_at(t + 1)) {
            if *b != 0.0 {
                dev_g = dev_g.max(rel(*a, *b));
            } else {
                dev_g = dev_g.max(a.abs());
            }
        }
    }
    Ok(SreEquivalence {
        steps,
        start,
        max_rel_dev_sigma2: dev_s,
        max_rel_dev_x2: dev_x,
        max_rel_dev_grad: dev_g,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SreCheckReport {
    pub dim: usize,
    pub p0_spectral_radius: f64,
    pub lyapunov: LyapunovEstimate,
    pub moment_decay: sre::MomentDecay,
    pub equivalence: SreEquivalence,
}

/// Structure, exponent, moment decay and direct-recursion equivalence of the
/// state recursion at `theta0`.
pub fn run_sre_check(cfg: &ExperimentConfig) -> Result<SreCheckReport> {
    cfg.validate_for("sre-check")?;
    let theta0 = cfg.theta0()?;
    check_stationary(cfg, &theta0)?;
    let sys = sre::build_sre(&theta0);
    let (h, r) = (cfg.lyapunov.horizon, cfg.lyapunov.reps);
    let seed = cfg.seed();
    let lyapunov = sre::top_lyapunov(|z| sys.p_matrix(z), &cfg.innovation, h, r, seed.with_stream(1))?;
    let t_grid: Vec<usize> = [h / 8, h / 4, h / 2, h].into_iter().filter(|&t| t > 0).collect();
    let moment_decay = sre::moment_decay_check(
        |z| sys.p_matrix(z),
        &cfg.innovation,
        &[1.0, 0.5, 0.25, 0.1],
        &t_grid,
        r,
        seed.with_stream(2),
    )?;
    let equivalence = sre_check(
        &theta0,
        &cfg.innovation,
        cfg.sre_check.start,
        cfg.sre_check.steps,
        cfg.burn_in,
        cfg.replicate_seed(0),
    )?;
    Ok(SreCheckReport {
        dim: sys.dim,
        p0_spectral_radius: sre::spectral_radius(&sys.p_matrix(0.0))?,
        lyapunov,
        moment_decay,
        equivalence,
    })
}

/// Reads a single-column numeric text file; blank lines and `#` comments
/// are skipped.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{}:{}: not a number: {s}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub const RATE_CSV: &str = "rate.csv";
pub const RATE_TIMING_CSV: &str = "rate_timing.csv";

pub fn rate_csv(result: &RateResult) -> String {
    let d = result.theta0.len();
    let mut s = String::from("n,replicate,converged,failed");
    for i in 0..d {
        let _ = write!(s, ",theta_hat_{i}");
    }
    for i in 0..d {
        let _ = write!(s, ",error_{i}");
    }
    s.push_str(",x_n\n");
    for r in &result.rows {
        let _ = write!(s, "{},{},{},{}", r.n, r.replicate, u8::from(r.converged), u8::from(r.failed));
        for v in r.theta_hat.iter().chain(&r.error) {
            let _ = write!(s, ",{}", fmt_num(*v));
        }
        let _ = writeln!(s, ",{}", fmt_num(r.x_n));
    }
    s
}

pub fn rate_timing_csv(result: &RateResult) -> String {
    let mut s = String::from("n,replicate,runtime_ms\n");
    for r in &result.rows {
        let _ = writeln!(s, "{},{},{:.3}", r.n, r.replicate, r.runtime_ms);
    }
    s
}

/// Parse rows written by [`rate_csv`].
pub fn parse_rate_csv(text: &str) -> Result<Vec<RateRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty rate CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().filter(|c| c.starts_with("theta_hat_")).count();
    if cols.len() != 5 + 2 * d || cols[..4] != ["n", "replicate", "converged", "failed"] {
        return Err(Error::InvalidInput(format!("unexpected rate CSV header: {header}")));
    }
    let bad = |i: usize| Error::InvalidInput(format!("malformed rate CSV line {}", i + 2));
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad(i));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i));
            let vals = f[4..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            Ok(RateRow {
                n: f[0].parse().map_err(|_| bad(i))?,
                replicate: f[1].parse().map_err(|_| bad(i))?,
                converged: f[2] == "1",
                failed: f[3] == "1",
                theta_hat: vals[..d].to_vec(),
                error: vals[d..2 * d].to_vec(),
                x_n: vals[2 * d],
                runtime_ms: f64::NAN,
            })
        })
        .collect()
}

/// CSV of a replicate sample: `replicate,c0,c1,..`.
pub fn sample_csv(replicates: &[usize], sample: &[Vec<f64>], prefix: &str) -> String {
    let d = sample.first().map_or(0, Vec::len);
    let mut s = String::from("replicate");
    for i in 0..d {
        let _ = write!(s, ",{prefix}_{i}");
    }
    s.push('\n');
    for (r, v) in replicates.iter().zip(sample) {
        let _ = write!(s, "{r}");
        for x in v {
            let _ = write!(s, ",{}", fmt_num(*x));
        }
        s.push('\n');
    }
    s
}

pub fn hill_sweep_csv(sample: &[f64]) -> String {
    let mut s = String::from("k,alpha_hat,ci_low,ci_high\n");
    for r in tails::hill_sweep(sample, &tails::default_k_grid(sample.len())) {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.k_used,
            fmt_num(r.alpha_hat),
            fmt_num(r.ci_low),
            fmt_num(r.ci_high)
        );
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("JSON encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}
