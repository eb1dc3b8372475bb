//! Polynomial linear stochastic recurrence embedding of the GARCH volatility
//! and its parameter gradient,
//!
//! ```text
//! Y_t = P(Z_t) Y_{t-1} + Q,
//! Y_t = (sigma2_{t+1..t-q+2}, X2_{t..t-p+2}, dh_{t+1..t-q+2}/d alpha_0, ..., dh/d beta_q),
//! ```
//!
//! together with spectral radii and top Lyapunov exponents of random matrix
//! products.
//!
//! Orders are padded to `p, q >= 3` with zero coefficients so one layout
//! covers every model. The volatility block `M1(z)` is
//!
//! ```text
//! row 0       : beta_1 + alpha_1 z^2, beta_2 .. beta_q | alpha_2 .. alpha_p
//! rows 1..q-1 : shift of the sigma2 lags
//! row q       : z^2 in column 0 (X2_t = z^2 sigma2_t)
//! rows q+1..  : shift of the X2 lags
//! ```
//!
//! and each gradient component has its own `q`-lag block driven by the
//! companion matrix `C` of `(beta_1, .., beta_q)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::garch::GarchParams;
use crate::innovations::{InnovationModel, SeedSpec};

/// Minimum order after padding.
const MIN_ORDER: usize = 3;

/// Renormalization cadence for running matrix products.
const RENORM_EVERY: usize = 10;

#[derive(Debug, Clone)]
pub struct SreSystem {
    /// Padded orders.
    pub p: usize,
    pub q: usize,
    pub dim: usize,
    /// Parameters as supplied.
    pub theta0: GarchParams,
    padded: GarchParams,
}

impl SreSystem {
    pub fn new(theta0: &GarchParams) -> Self {
        let p = theta0.p().max(MIN_ORDER);
        let q = theta0.q().max(MIN_ORDER);
        let padded = theta0.padded(p, q);
        let dim = p + q - 1 + q * (p + q + 1);
        Self {
            p,
            q,
            dim,
            theta0: theta0.clone(),
            padded,
        }
    }

    pub fn padded_params(&self) -> &GarchParams {
        &self.padded
    }

    /// Dimension of the volatility block `M1`.
    pub fn volatility_dim(&self) -> usize {
        self.p + self.q - 1
    }

    /// Start of the `q`-lag block holding derivatives with respect to the
    /// padded component `c` (`0..=p` for alphas, `p+k` for `beta_k`).
    pub fn grad_block(&self, c: usize) -> usize {
        self.volatility_dim() + c * self.q
    }

    /// Padded component index of an original gradient component.
    fn padded_component(&self, original: usize) -> usize {
        let p0 = self.theta0.p();
        if original <= p0 {
            original
        } else {
            self.p + (original - p0)
        }
    }

    pub fn m1(&self, z: f64) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let a = &self.padded.alpha;
        let b = &self.padded.beta;
        let z2 = z * z;
        let d = self.volatility_dim();
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = b[0] + a[1] * z2;
        for j in 2..=q {
            m[(0, j - 1)] = b[j - 1];
        }
        for i in 2..=p {
            m[(0, q + i - 2)] = a[i];
        }
        for l in 1..q {
            m[(l, l - 1)] = 1.0;
        }
        m[(q, 0)] = z2;
        for l in 1..=p - 2 {
            m[(q + l, q + l - 1)] = 1.0;
        }
        m
    }

    /// Companion matrix of `(beta_1, .., beta_q)`.
    pub fn companion(&self) -> DMatrix<f64> {
        companion(&self.padded.beta)
    }

    pub fn p_matrix(&self, z: f64) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let vd = self.volatility_dim();
        let mut m = DMatrix::zeros(self.dim, self.dim);
        m.view_mut((0, 0), (vd, vd)).copy_from(&self.m1(z));
        let c = self.companion();
        for comp in 0..(p + q + 1) {
            let base = self.grad_block(comp);
            m.view_mut((base, base), (q, q)).copy_from(&c);
        }
        // forcing terms of the gradient recursion
        m[(self.grad_block(1), 0)] = z * z;
        for i in 2..=p {
            m[(self.grad_block(i), q + i - 2)] = 1.0;
        }
        for k in 1..=q {
            m[(self.grad_block(p + k), k - 1)] = 1.0;
        }
        m
    }

    pub fn q_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v[0] = self.padded.alpha[0];
        v[self.grad_block(0)] = 1.0;
        v
    }

    /// Assemble a state vector from lagged values: `sigma2_lags[l] =
    /// sigma2_{t+1-l}`, `x2_lags[l] = X2_{t-l}` and `grad_lags[l] =
    /// h'_{t+1-l}` in the original component order. Missing lags are zero.
    pub fn state_from_parts(
        &self,
        sigma2_lags: &[f64],
        x2_lags: &[f64],
        grad_lags: &[Vec<f64>],
    ) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim);
        for (l, &v) in sigma2_lags.iter().take(self.q).enumerate() {
            y[l] = v;
        }
        for (l, &v) in x2_lags.iter().take(self.p - 1).enumerate() {
            y[self.q + l] = v;
        }
        for (l, g) in grad_lags.iter().take(self.q).enumerate() {
            for (c0, &v) in g.iter().enumerate() {
                y[self.grad_block(self.padded_component(c0)) + l] = v;
            }
        }
        y
    }

    /// `sigma2_{t+1}` read from `Y_t`.
    pub fn sigma2_next(&self, y: &DVector<f64>) -> f64 {
        y[0]
    }

    /// `X2_t` read from `Y_t`.
    pub fn x2_current(&self, y: &DVector<f64>) -> f64 {
        y[self.q]
    }

    /// `h'_{t+1}` in the original component order.
    pub fn grad_next(&self, y: &DVector<f64>) -> Vec<f64> {
        (0..self.theta0.dim())
            .map(|c0| y[self.grad_block(self.padded_component(c0))])
            .collect()
    }

    /// Fixed point `(I - P(0))^{-1} Q`.
    pub fn fixed_point_at_zero(&self) -> Result<DVector<f64>> {
        let a = DMatrix::identity(self.dim, self.dim) - self.p_matrix(0.0);
        a.lu()
            .solve(&self.q_vector())
            .ok_or_else(|| Error::Numerical("I - P(0) is singular".into()))
    }
}

pub fn companion(beta: &[f64]) -> DMatrix<f64> {
    let q = beta.len();
    let mut c = DMatrix::zeros(q, q);
    for (j, &b) in beta.iter().enumerate() {
        c[(0, j)] = b;
    }
    for l in 1..q {
        c[(l, l - 1)] = 1.0;
    }
    c
}

pub fn build_sre(theta0: &GarchParams) -> SreSystem {
    SreSystem::new(theta0)
}

/// `Y_t = P(z_t) Y_{t-1} + Q` for each `z_t`; returns `Y_1, .., Y_n`.
pub fn iterate_sre(sys: &SreSystem, z: &[f64], y0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    iterate_affine(sys, z, y0, &sys.q_vector())
}

/// As [`iterate_sre`] with an explicit additive term.
pub fn iterate_affine(
    sys: &SreSystem,
    z: &[f64],
    y0: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if y0.len() != sys.dim || q.len() != sys.dim {
        return Err(Error::InvalidInput(format!(
            "state dimension must be {}, got {} / {}",
            sys.dim,
            y0.len(),
            q.len()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    let mut out = Vec::with_capacity(z.len());
    let mut y = y0.clone();
    for (t, &zt) in z.iter().enumerate() {
        y = sys.p_matrix(zt) * &y + q;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                index: t + 1,
                what: "SRE state".into(),
            });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Largest eigenvalue modulus.
///
/// Power iteration is accepted only when the Rayleigh pair passes a residual
/// check; complex or defective dominant eigenvalues fall back to the real
/// Schur form (Hessenberg QR).
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidInput("spectral radius of a non-square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let scale = m.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if let Some(r) = power_iteration(m, scale) {
        return Ok(r);
    }
    if let Some(r) = nilpotent_check(m) {
        return Ok(r);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or_else(
        || Error::Numerical("eigenvalue iteration did not converge after 10^4 iterations".into()),
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

/// `Some(0)` when `m^(2^j)` vanishes for some `2^j >= n`.
fn nilpotent_check(m: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut power = 1;
    while power < n {
        a = &a * &a;
        let s = a.norm();
        if s == 0.0 {
            return Some(0.0);
        }
        a /= s;
        power *= 2;
    }
    (a.norm() == 0.0).then_some(0.0)
}

fn power_iteration(m: &DMatrix<f64>, scale: f64) -> Option<f64> {
    let n = m.nrows();
    // deterministic, generic start
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7).sin());
    v /= v.norm();
    for _ in 0..10_000 {
        let w = m * &v;
        let wn = w.norm();
        if wn == 0.0 {
            // v hit the null space; nilpotent directions only
            return None;
        }
        let lambda = v.dot(&w);
        let resid = (&w - &v * lambda).norm();
        v = w / wn;
        if resid <= 1e-12 * scale {
            return Some(lambda.abs());
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub rho_hat: f64,
    pub std_err: f64,
    pub horizon: usize,
    pub reps: usize,
    pub s_tilde: Option<f64>,
}

impl LyapunovEstimate {
    /// `rho_hat + k * std_err < 0`.
    pub fn negative_with_margin(&self, k: f64) -> bool {
        self.rho_hat + k * self.std_err < 0.0
    }

    pub fn positive_with_margin(&self, k: f64) -> bool {
        self.rho_hat - k * self.std_err > 0.0
    }
}

/// Running product `P_t .. P_1` with periodic rescaling; tracks
/// `log ||P_t .. P_1||_2` without overflow.
struct RenormalizedProduct {
    prod: DMatrix<f64>,
    log_scale: f64,
    steps: usize,
}

impl RenormalizedProduct {
    fn new(d: usize) -> Self {
        Self {
            prod: DMatrix::identity(d, d),
            log_scale: 0.0,
            steps: 0,
        }
    }

    fn push(&mut self, m: &DMatrix<f64>) -> Result<()> {
        if m.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("sampled matrix contains NaN".into()));
        }
        self.prod = m * &self.prod;
        self.steps += 1;
        if self.steps % RENORM_EVERY == 0 {
            self.renormalize();
        }
        Ok(())
    }

    fn renormalize(&mut self) {
        let s = self.prod.norm();
        if s > 0.0 && s.is_finite() {
            self.log_scale += s.ln();
            self.prod /= s;
        }
    }

    fn log_norm(&self) -> f64 {
        let s = operator_norm(&self.prod);
        if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale + s.ln()
        }
    }
}

/// Spectral (operator 2-) norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

fn draw_z(model: &InnovationModel, n: usize, seed: SeedSpec) -> Vec<f64> {
    let sampler = model.sampler();
    let mut rng = seed.rng();
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

/// Top Lyapunov exponent of `sampler(Z_t)` products, averaged over `reps`
/// independent runs of length `horizon`.
pub fn top_lyapunov<F>(
    sampler: F,
    model: &InnovationModel,
    horizon: usize,
    reps: usize,
    seed: SeedSpec,
) -> Result<LyapunovEstimate>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if reps < 10 {
        return Err(Error::InvalidInput(format!(
            "Lyapunov estimation needs reps >= 10, got {reps}"
        )));
    }
    lyapunov_products(sampler, model, horizon, reps, seed)
}

/// As [`top_lyapunov`] with at least two runs.
pub(crate) fn lyapunov_products<F>(
    sampler: F,
    model: &InnovationModel,
    horizon: usize,
    reps: usize,
    seed: SeedSpec,
) -> Result<LyapunovEstimate>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if horizon < 100 || reps < 2 {
        return Err(Error::InvalidInput(format!(
            "Lyapunov estimation needs horizon >= 100 and reps >= 2, got {horizon}/{reps}"
        )));
    }
    let mut values = Vec::with_capacity(reps);
    for r in 0..reps {
        let z = draw_z(model, horizon, seed.substream(r as u64));
        let d = sampler(z[0]).nrows();
        let mut prod = RenormalizedProduct::new(d);
        for &zt in &z {
            prod.push(&sampler(zt))?;
        }
        values.push(prod.log_norm() / horizon as f64);
    }
    Ok(summarize_lyapunov(&values, horizon, None))
}

fn summarize_lyapunov(values: &[f64], horizon: usize, s_tilde: Option<f64>) -> LyapunovEstimate {
    let reps = values.len();
    let mean = values.iter().sum::<f64>() / reps as f64;
    let std_err = if mean.is_finite() {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    LyapunovEstimate {
        rho_hat: mean,
        std_err,
        horizon,
        reps,
        s_tilde,
    }
}

/// Outcome of the moment-decay search `E||P_t..P_1||^s <= c lambda^t`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MomentDecay {
    Pass {
        s_tilde: f64,
        lambda: f64,
        c: f64,
        r_squared: f64,
    },
    Fail {
        reason: String,
    },
}

impl MomentDecay {
    pub fn passed(&self) -> bool {
        matches!(self, MomentDecay::Pass { .. })
    }
}

/// Minimum goodness of fit of the log-linear moment decay.
const MOMENT_DECAY_MIN_R2: f64 = 0.95;

/// Search `s_grid` for the first exponent whose Monte-Carlo moments
/// `E||P_t..P_1||^s`, `t` in `t_grid`, decay geometrically with `lambda < 1`.
pub fn moment_decay_check<F>(
    sampler: F,
    model: &InnovationModel,
    s_grid: &[f64],
    t_grid: &[usize],
    reps: usize,
    seed: SeedSpec,
) -> Result<MomentDecay>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if s_grid.is_empty() || t_grid.len() < 2 || reps == 0 {
        return Err(Error::InvalidInput(
            "moment decay needs a nonempty s grid, two or more horizons and reps > 0".into(),
        ));
    }
    let mut t_sorted = t_grid.to_vec();
    t_sorted.sort_unstable();
    t_sorted.dedup();
    let t_max = *t_sorted.last().unwrap();

    // log norms per replicate at each horizon
    let mut logs = vec![Vec::with_capacity(reps); t_sorted.len()];
    for r in 0..reps {
        let z = draw_z(model, t_max, seed.substream(r as u64));
        let d = sampler(z[0]).nrows();
        let mut prod = RenormalizedProduct::new(d);
        let mut next = 0;
        for (t, &zt) in z.iter().enumerate() {
            prod.push(&sampler(zt))?;
            while next < t_sorted.len() && t_sorted[next] == t + 1 {
                logs[next].push(prod.log_norm());
                next += 1;
            }
        }
    }

    let ts: Vec<f64> = t_sorted.iter().map(|&t| t as f64).collect();
    let mut last_reason = String::new();
    for &s in s_grid {
        if !(s > 0.0) {
            continue;
        }
        let log_moments: Vec<f64> = logs
            .iter()
            .map(|l| log_mean_exp(l.iter().map(|v| s * v)))
            .collect();
        if log_moments.iter().any(|v| !v.is_finite()) {
            last_reason = format!("non-finite moment estimate at s = {s}");
            continue;
        }
        let fit = crate::stats::linear_fit(&ts, &log_moments);
        let lambda = fit.slope.exp();
        if lambda < 1.0 && fit.r_squared >= MOMENT_DECAY_MIN_R2 {
            return Ok(MomentDecay::Pass {
                s_tilde: s,
                lambda,
                c: fit.intercept.exp(),
                r_squared: fit.r_squared,
            });
        }
        last_reason = format!(
            "s = {s}: lambda = {lambda:.6}, R^2 = {:.4}",
            fit.r_squared
        );
    }
    Ok(MomentDecay::Fail {
        reason: format!("no exponent in the grid passed (last: {last_reason})"),
    })
}

fn log_mean_exp<I: Iterator<Item = f64>>(it: I) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}
