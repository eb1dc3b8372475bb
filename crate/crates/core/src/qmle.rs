//! Gaussian quasi-likelihood `L_n(theta) = -1/2 sum (X_t^2/h_t + log h_t)`
//! and its maximization over
//!
//! ```text
//! K = { m <= alpha_i, beta_j <= M,  beta_1 + .. + beta_q <= beta_bar }.
//! ```
//!
//! The maximizer is a deterministic multi-start projected ascent. Steps use
//! the scoring direction `I(theta)^{-1} grad L` on the coordinates that are
//! not pinned at a bound, with the plain gradient as a fallback, and an
//! Armijo backtracking search along the projection arc.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::garch::GarchParams;

/// The parameter set `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSetK {
    pub m: f64,
    pub upper: f64,
    pub beta_bar: f64,
    pub p: usize,
    pub q: usize,
}

/// Slack allowed in membership checks.
pub const FEASIBILITY_TOL: f64 = 1e-12;

impl CompactSetK {
    pub fn new(m: f64, upper: f64, beta_bar: f64, p: usize, q: usize) -> Result<Self> {
        let k = Self {
            m,
            upper,
            beta_bar,
            p,
            q,
        };
        k.validate()?;
        Ok(k)
    }

    /// `m = 0.01, M = 5, beta_bar = 0.95`.
    pub fn default_for(p: usize, q: usize) -> Self {
        Self {
            m: 0.01,
            upper: 5.0,
            beta_bar: 0.95,
            p,
            q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::InvalidParameter("K needs p >= 1".into()));
        }
        if !(self.m > 0.0 && self.upper > self.m && self.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "K needs 0 < m < M < inf, got m = {}, M = {}",
                self.m, self.upper
            )));
        }
        if !(self.beta_bar > 0.0 && self.beta_bar < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "K needs 0 < beta_bar < 1, got {}",
                self.beta_bar
            )));
        }
        if self.q as f64 * self.m >= self.beta_bar {
            return Err(Error::InvalidParameter(format!(
                "K needs q*m < beta_bar, got {} * {} >= {}",
                self.q, self.m, self.beta_bar
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.p + self.q + 1
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .all(|&v| v >= self.m - tol && v <= self.upper + tol)
            && theta[self.p + 1..].iter().sum::<f64>() <= self.beta_bar + tol
    }

    /// `theta0` lies in the interior of `K`.
    pub fn has_interior_point(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().all(|&v| v > self.m && v < self.upper)
            && theta[self.p + 1..].iter().sum::<f64>() < self.beta_bar
    }

    /// Clamp to the box, then shrink the betas toward `m` if their sum
    /// exceeds `beta_bar`. Shrinking the excess over `m` (rather than the
    /// betas themselves) keeps every beta inside the box.
    pub fn project(&self, theta: &mut [f64]) {
        for v in theta.iter_mut() {
            *v = v.clamp(self.m, self.upper);
        }
        let betas = &mut theta[self.p + 1..];
        let s: f64 = betas.iter().sum();
        if s > self.beta_bar {
            let floor = self.q as f64 * self.m;
            let factor = (self.beta_bar - floor) / (s - floor);
            for b in betas.iter_mut() {
                *b = self.m + (*b - self.m) * factor;
            }
            // guard rounding so the sum constraint holds exactly
            let s2: f64 = betas.iter().sum();
            if s2 > self.beta_bar {
                let excess = s2 - self.beta_bar;
                if let Some(b) = betas.iter_mut().max_by(|a, b| a.total_cmp(b)) {
                    *b -= excess;
                }
            }
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.5 * (self.m + self.upper); self.dim()];
        self.project(&mut c);
        c
    }

    /// Deterministic starts: the centroid, then box corners shrunk 10% toward
    /// it (and projected into `K`).
    pub fn starts(&self, n_starts: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let centre = vec![0.5 * (self.m + self.upper); d];
        let mut out = vec![self.centroid()];
        let n_corners = 1u64 << d.min(62);
        let all = n_corners - 1;
        let alt_a = (0..d).filter(|i| i % 2 == 0).fold(0u64, |acc, i| acc | (1 << i));
        let alt_b = all & !alt_a;
        let mut order = vec![0, all, alt_a, alt_b];
        order.extend(0..n_corners.min(4096));
        let mut seen = std::collections::BTreeSet::new();
        for k in order {
            if out.len() >= n_starts {
                break;
            }
            if !seen.insert(k) {
                continue;
            }
            let mut corner: Vec<f64> = (0..d)
                .map(|i| {
                    let v = if k >> i & 1 == 1 { self.upper } else { self.m };
                    v + 0.1 * (centre[i] - v)
                })
                .collect();
            self.project(&mut corner);
            if out.iter().any(|s| *s == corner) {
                continue;
            }
            out.push(corner);
        }
        out
    }

    /// Gradient with the components that point out of `K` at active
    /// constraints removed.
    pub fn projected_gradient(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let eps = 1e-12 * self.upper;
        let mut pg = grad.to_vec();
        for i in 0..pg.len() {
            if theta[i] <= self.m + eps && pg[i] < 0.0 {
                pg[i] = 0.0;
            }
            if theta[i] >= self.upper - eps && pg[i] > 0.0 {
                pg[i] = 0.0;
            }
        }
        let beta_sum: f64 = theta[self.p + 1..].iter().sum();
        if self.q > 0 && beta_sum >= self.beta_bar - eps {
            let free: Vec<usize> = (self.p + 1..self.dim())
                .filter(|&i| theta[i] > self.m + eps || pg[i] > 0.0)
                .collect();
            let push: f64 = free.iter().map(|&i| pg[i]).sum();
            if push > 0.0 && !free.is_empty() {
                let shift = push / free.len() as f64;
                for &i in &free {
                    pg[i] -= shift;
                }
            }
        }
        pg
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Projected-gradient norm threshold; `None` means `1e-6 * n`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub n_starts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 500,
            n_starts: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StartDiagnostics {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub initial_loglik: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Line search found no ascent step before convergence.
    pub stalled: bool,
    /// Log-likelihood after each accepted step, starting value first.
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: GarchParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub starts_used: usize,
    /// All-zero or constant squared data: the likelihood does not identify
    /// the alphas and the estimate sits on the lower bounds.
    pub degenerate_data: bool,
    pub diagnostics: Option<String>,
    pub starts: Vec<StartDiagnostics>,
}

/// `L_n(theta)` without the `-(n/2) log 2 pi` constant.
pub fn log_likelihood(x: &[f64], params: &GarchParams) -> Result<f64> {
    let h = filter::filter_h(x, params)?;
    Ok(loglik_from_h(x, &h))
}

fn loglik_from_h(x: &[f64], h: &[f64]) -> f64 {
    -0.5 * x
        .iter()
        .zip(h)
        .map(|(xv, hv)| xv * xv / hv + hv.ln())
        .sum::<f64>()
}

/// `grad L_n = 1/2 sum (h'_t/h_t)(X_t^2/h_t - 1)`.
pub fn likelihood_gradient(x: &[f64], params: &GarchParams) -> Result<Vec<f64>> {
    Ok(score_and_information(x, params)?.1)
}

/// Log-likelihood, score and the information matrix
/// `1/2 sum (h'_t/h_t)(h'_t/h_t)^T` in one pass of the filter.
pub fn score_and_information(
    x: &[f64],
    params: &GarchParams,
) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    let out = filter::filter(x, params)?;
    let d = out.dim;
    let mut grad = vec![0.0; d];
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut ll = 0.0;
    let mut u = vec![0.0; d];
    for (t, row) in out.grad_rows().enumerate() {
        let h = out.h[t];
        let x2 = x[t] * x[t];
        ll += x2 / h + h.ln();
        let w = x2 / h - 1.0;
        for k in 0..d {
            u[k] = row[k] / h;
            grad[k] += u[k] * w;
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
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    info *= 0.5;
    Ok((-0.5 * ll, grad, info))
}

fn params_of(k: &CompactSetK, theta: &[f64]) -> Result<GarchParams> {
    GarchParams::from_slice(k.p, k.q, theta)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

/// Projected ascent from one start.
fn ascend(x: &[f64], k: &CompactSetK, start: &[f64], tol: f64, max_iter: usize) -> Result<StartDiagnostics> {
    let d = k.dim();
    let mut theta = start.to_vec();
    k.project(&mut theta);
    let (mut ll, mut grad, mut info) = score_and_information(x, &params_of(k, &theta)?)?;
    let initial = ll;
    let mut trace = vec![ll];
    let mut pg = k.projected_gradient(&theta, &grad);
    let mut iterations = 0;
    let mut stalled = false;
    let mut converged = norm(&pg) < tol;

    while !converged && iterations < max_iter {
        iterations += 1;
        // coordinates held at a bound by the gradient
        let free: Vec<usize> = (0..d).filter(|&i| pg[i] != 0.0 || grad[i] == 0.0).collect();
        let mut directions = Vec::with_capacity(2);
        if let Some(dir) = scoring_direction(&info, &grad, &free, d) {
            directions.push(dir);
        }
        let gmax = pg.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax > 0.0 {
            let scale = 0.1 * (k.upper - k.m) / gmax;
            directions.push(pg.iter().map(|g| g * scale).collect());
        }

        let mut accepted = None;
        'dirs: for dir in &directions {
            let mut step = 1.0;
            for _ in 0..MAX_BACKTRACK {
                let mut trial: Vec<f64> = theta.iter().zip(dir).map(|(t, s)| t + step * s).collect();
                k.project(&mut trial);
                if trial == theta {
                    break;
                }
                let predicted: f64 = grad
                    .iter()
                    .zip(trial.iter().zip(&theta))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum();
                let trial_ll = log_likelihood(x, &params_of(k, &trial)?)?;
                if trial_ll > ll && trial_ll >= ll + ARMIJO_C * predicted {
                    accepted = Some(trial);
                    break 'dirs;
                }
                step *= 0.5;
            }
        }

        match accepted {
            Some(next) => {
                theta = next;
                let (l2, g2, i2) = score_and_information(x, &params_of(k, &theta)?)?;
                ll = l2;
                grad = g2;
                info = i2;
                trace.push(ll);
                pg = k.projected_gradient(&theta, &grad);
                converged = norm(&pg) < tol;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    Ok(StartDiagnostics {
        start: start.to_vec(),
        theta,
        initial_loglik: initial,
        loglik: ll,
        iterations,
        gradient_norm: norm(&pg),
        converged,
        stalled,
        loglik_trace: trace,
    })
}

fn scoring_direction(info: &DMatrix<f64>, grad: &[f64], free: &[usize], d: usize) -> Option<Vec<f64>> {
    if free.is_empty() {
        return None;
    }
    let nf = free.len();
    let mut sub = DMatrix::<f64>::from_fn(nf, nf, |a, b| info[(free[a], free[b])]);
    let max_diag = (0..nf).map(|a| sub[(a, a)]).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    for a in 0..nf {
        sub[(a, a)] += 1e-10 * max_diag;
    }
    let rhs = DVector::from_fn(nf, |a, _| grad[free[a]]);
    let sol = sub.cholesky()?.solve(&rhs);
    let mut dir = vec![0.0; d];
    for (a, &i) in free.iter().enumerate() {
        dir[i] = sol[a];
    }
    if dir.iter().all(|v| v.is_finite()) {
        Some(dir)
    } else {
        None
    }
}

/// Lexicographic order on parameter vectors.
fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Maximize `L_n` over `K` from a deterministic grid of starts. The best
/// final value wins; exact ties go to the lexicographically smallest theta.
pub fn fit(x: &[f64], k: &CompactSetK, opts: &OptimizerSettings) -> Result<FitResult> {
    k.validate()?;
    let d = k.dim();
    if x.len() < 50 * d {
        return Err(Error::InvalidInput(format!(
            "series length {} below the minimum 50*(p+q+1) = {}",
            x.len(),
            50 * d
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation at index {i}")));
    }
    let tol = opts.tol.unwrap_or(1e-6 * x.len() as f64);
    let starts = k.starts(opts.n_starts.max(1));
    let mut outcomes = Vec::with_capacity(starts.len());
    for s in &starts {
        outcomes.push(ascend(x, k, s, tol, opts.max_iter)?);
    }

    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        let b = &outcomes[best];
        if o.loglik > b.loglik || (o.loglik == b.loglik && lex_less(&o.theta, &b.theta)) {
            best = i;
        }
    }
    let winner = &outcomes[best];

    let x2_first = x[0] * x[0];
    let degenerate_data = x.iter().all(|v| v * v == x2_first);
    let none_improved = outcomes.iter().all(|o| o.loglik <= o.initial_loglik);
    let mut converged = winner.converged;
    let mut diagnostics = None;
    if none_improved {
        converged = false;
        diagnostics = Some(format!(
            "no start improved on its initial value; projected gradient norms {:?}",
            outcomes.iter().map(|o| o.gradient_norm).collect::<Vec<_>>()
        ));
    } else if !winner.converged {
        diagnostics = Some(format!(
            "best start stopped after {} iterations with projected gradient norm {:.3e} (tol {:.3e}){}",
            winner.iterations,
            winner.gradient_norm,
            tol,
            if winner.stalled { ", line search stalled" } else { "" }
        ));
    }
    if degenerate_data {
        let note = "degenerate data: squared observations are constant".to_string();
        diagnostics = Some(match diagnostics {
            Some(d) => format!("{note}; {d}"),
            None => note,
        });
    }

    Ok(FitResult {
        theta_hat: params_of(k, &winner.theta)?,
        loglik: winner.loglik,
        iterations: winner.iterations,
        converged,
        gradient_norm: winner.gradient_norm,
        starts_used: outcomes.len(),
        degenerate_data,
        diagnostics,
        starts: outcomes,
    })
}
