//! The observable volatility filter
//!
//! ```text
//! h_t = alpha_0/(1 - sum beta)                    t <= 0,
//! h_t = alpha_0 + sum_{i <= min(p, t-1)} alpha_i X_{t-i}^2 + sum_j beta_j h_{t-j},  t >= 1,
//! ```
//!
//! its equivalent ψ-series form, and the gradient with respect to
//! `theta = (alpha_0, .., alpha_p, beta_1, .., beta_q)`.

use crate::error::{Error, Result};
use crate::garch::{GarchParams, GarchPath};

/// Filtered squared volatilities and their gradients, `t = 1..n` stored at
/// index `t - 1`.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub h: Vec<f64>,
    /// Row-major `n x dim` gradient, components ordered
    /// `(d/d alpha_0, .., d/d alpha_p, d/d beta_1, .., d/d beta_q)`.
    pub grad: Vec<f64>,
    pub dim: usize,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn grad_at(&self, idx: usize) -> &[f64] {
        &self.grad[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn grad_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.grad.chunks_exact(self.dim)
    }
}

fn check_inputs(x: &[f64], params: &GarchParams) -> Result<f64> {
    params.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidInput("observation series is empty".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation at index {i}")));
    }
    params.fixed_point()
}

/// Squared-volatility filter only.
pub fn filter_h(x: &[f64], params: &GarchParams) -> Result<Vec<f64>> {
    let init = check_inputs(x, params)?;
    Ok(h_recursion(x, params, init))
}

fn h_recursion(x: &[f64], params: &GarchParams, init: f64) -> Vec<f64> {
    let (p, q) = (params.p(), params.q());
    let a = &params.alpha;
    let b = &params.beta;
    let n = x.len();
    let mut h = Vec::with_capacity(n);
    for s in 0..n {
        let mut v = a[0];
        for i in 1..=p.min(s) {
            let xi = x[s - i];
            v += a[i] * xi * xi;
        }
        for j in 1..=q {
            v += b[j - 1] * if s >= j { h[s - j] } else { init };
        }
        h.push(v);
    }
    h
}

/// Filter and gradient.
///
/// The presample gradient is the exact derivative of the constant
/// initialization: `1/(1 - sum beta)` for `alpha_0`, `alpha_0/(1 - sum beta)^2`
/// for each `beta_k`, and zero for `alpha_i`, `i >= 1`.
pub fn filter(x: &[f64], params: &GarchParams) -> Result<FilterOutput> {
    let init = check_inputs(x, params)?;
    let (p, q) = (params.p(), params.q());
    let d = params.dim();
    let a = &params.alpha;
    let b = &params.beta;
    let n = x.len();
    let denom = 1.0 - params.beta_sum();

    let mut pre_grad = vec![0.0; d];
    pre_grad[0] = 1.0 / denom;
    for k in 1..=q {
        pre_grad[p + k] = a[0] / (denom * denom);
    }

    let mut h = Vec::with_capacity(n);
    let mut grad = vec![0.0; n * d];
    for s in 0..n {
        let mut v = a[0];
        for i in 1..=p.min(s) {
            let xi = x[s - i];
            v += a[i] * xi * xi;
        }
        for j in 1..=q {
            v += b[j - 1] * if s >= j { h[s - j] } else { init };
        }
        h.push(v);

        let (done, rest) = grad.split_at_mut(s * d);
        let row = &mut rest[..d];
        // forcing terms
        row[0] = 1.0;
        for i in 1..=p {
            row[i] = if s >= i { x[s - i] * x[s - i] } else { 0.0 };
        }
        for k in 1..=q {
            row[p + k] = if s >= k { h[s - k] } else { init };
        }
        // + sum_j beta_j h'_{t-j}
        for j in 1..=q {
            let bj = b[j - 1];
            if bj == 0.0 {
                continue;
            }
            let lag: &[f64] = if s >= j {
                &done[(s - j) * d..(s - j + 1) * d]
            } else {
                &pre_grad
            };
            for (r, l) in row.iter_mut().zip(lag) {
                *r += bj * l;
            }
        }
    }
    Ok(FilterOutput { h, grad, dim: d })
}

pub fn filter_gradient(x: &[f64], params: &GarchParams) -> Result<Vec<Vec<f64>>> {
    let out = filter(x, params)?;
    Ok(out.grad_rows().map(|r| r.to_vec()).collect())
}

/// Run the filter over `history` followed by `x` and return the part that
/// belongs to `x`. With a long history this approximates the filter started
/// in the infinite past.
pub fn filter_from_history(history: &[f64], x: &[f64], params: &GarchParams) -> Result<FilterOutput> {
    let full: Vec<f64> = history.iter().chain(x).copied().collect();
    let mut out = filter(&full, params)?;
    let skip = history.len();
    out.h.drain(..skip);
    out.grad.drain(..skip * out.dim);
    Ok(out)
}

/// `h_t(theta_0)` and `h'_t(theta_0)` on a simulated path, seeded with the
/// path's own warm-up so that `h_t(theta_0) = sigma_t^2`.
pub fn stationary_filter(path: &GarchPath, params_true: &GarchParams) -> Result<FilterOutput> {
    if *params_true != path.params_used {
        return Err(Error::InvalidParameter(
            "stationary filter parameters differ from the parameters that generated the path".into(),
        ));
    }
    filter_from_history(&path.burn_x, &path.x, params_true)
}

/// Coefficients `psi_1..psi_J` of `alpha(z)/beta(z) = sum_j psi_j z^j`, by
/// the division recursion `psi_j = alpha_j [j <= p] + sum_i beta_i psi_{j-i}`.
pub fn psi_coefficients(params: &GarchParams, j_max: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if j_max < 1 {
        return Err(Error::InvalidInput("psi truncation must be at least 1".into()));
    }
    if params.beta_sum() >= 1.0 {
        return Err(Error::InvalidParameter(
            "sum of beta >= 1: alpha(z)/beta(z) has no power series on the unit disc".into(),
        ));
    }
    let (p, q) = (params.p(), params.q());
    let mut psi = vec![0.0; j_max + 1];
    for j in 1..=j_max {
        let mut v = if j <= p { params.alpha[j] } else { 0.0 };
        for i in 1..=q.min(j - 1) {
            v += params.beta[i - 1] * psi[j - i];
        }
        psi[j] = v;
    }
    psi.remove(0);
    Ok(psi)
}

/// Geometric envelope `psi_j <= w0 * (sum beta)^ceil((j - p)/q)` for `j > p`
/// (and `psi_j` itself for `j <= p`), where `w0` is the largest of
/// `psi_{p-q+1..p}`.
pub fn psi_tail_bound(params: &GarchParams, j: usize) -> Result<f64> {
    let (p, q) = (params.p(), params.q());
    let psi = psi_coefficients(params, p.max(1))?;
    if j <= p {
        return Ok(psi[j - 1]);
    }
    if q == 0 {
        return Ok(0.0);
    }
    let lo = (p + 1).saturating_sub(q).max(1);
    let w0 = (lo..=p).map(|i| psi[i - 1]).fold(0.0, f64::max);
    let k = (j - p).div_ceil(q);
    Ok(w0 * params.beta_sum().powi(k as i32))
}

/// `h_t` from the ψ-series, `t` 1-based:
/// `alpha_0/beta(1) + sum_{j=1}^{t-1} psi_j X_{t-j}^2`.
pub fn h_hat_via_psi(x: &[f64], params: &GarchParams, t: usize) -> Result<f64> {
    h_hat_via_psi_capped(x, params, t, usize::MAX)
}

/// As [`h_hat_via_psi`] with the series truncated after `cap` terms.
pub fn h_hat_via_psi_capped(x: &[f64], params: &GarchParams, t: usize, cap: usize) -> Result<f64> {
    if t < 1 || t > x.len() {
        return Err(Error::InvalidInput(format!(
            "time index {t} outside 1..={}",
            x.len()
        )));
    }
    let base = params.alpha0() / (1.0 - params.beta_sum());
    let terms = (t - 1).min(cap);
    if terms == 0 {
        psi_coefficients(params, 1)?;
        return Ok(base);
    }
    let psi = psi_coefficients(params, terms)?;
    let mut acc = 0.0;
    for j in (1..=terms).rev() {
        let xv = x[t - 1 - j];
        acc += psi[j - 1] * xv * xv;
    }
    Ok(base + acc)
}
