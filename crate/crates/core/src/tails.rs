//! Tail diagnostics: Hill estimation of the tail index, Breiman product-tail
//! ratios, the empirical spectral measure of large vectors and the blocks
//! estimator of the extremal index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Hill estimate with its asymptotic 95% band `alpha (1 +- 1.96/sqrt(k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub alpha_hat: f64,
    pub k_used: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `floor(n^0.6)`, capped at `n/10`, at least 1.
pub fn default_k(n: usize) -> usize {
    let k = (n as f64).powf(0.6).floor() as usize;
    k.min(n / 10).max(1)
}

fn descending_positive(sample: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = sample.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn hill_sorted(desc: &[f64], k: usize) -> Result<TailReport> {
    if k == 0 {
        return Err(Error::InvalidInput("Hill estimator needs k >= 1".into()));
    }
    if desc.len() < k + 1 {
        return Err(Error::InvalidInput(format!(
            "Hill estimator with k = {k} needs at least {} positive values, got {}",
            k + 1,
            desc.len()
        )));
    }
    let anchor = desc[k];
    let denom: f64 = desc[..k].iter().map(|x| (x / anchor).ln()).sum();
    if !(denom > 0.0) {
        return Err(Error::Numerical(format!(
            "Hill estimator undefined: the top {} order statistics are tied",
            k + 1
        )));
    }
    let alpha_hat = k as f64 / denom;
    let half = 1.96 / (k as f64).sqrt();
    Ok(TailReport {
        alpha_hat,
        k_used: k,
        ci_low: alpha_hat * (1.0 - half),
        ci_high: alpha_hat * (1.0 + half),
    })
}

/// Hill estimator on the `k` largest values of the positive part of `sample`.
pub fn hill(sample: &[f64], k: usize) -> Result<TailReport> {
    hill_sorted(&descending_positive(sample), k)
}

/// Hill estimator on `|sample|` with [`default_k`].
pub fn hill_abs_default(sample: &[f64]) -> Result<TailReport> {
    let abs: Vec<f64> = sample.iter().map(|x| x.abs()).collect();
    hill(&abs, default_k(abs.len()))
}

/// Hill estimates over a list of `k` values; entries whose estimate is
/// undefined are skipped.
pub fn hill_sweep(sample: &[f64], ks: &[usize]) -> Vec<TailReport> {
    let desc = descending_positive(sample);
    ks.iter().filter_map(|&k| hill_sorted(&desc, k).ok()).collect()
}

/// A geometric grid of `k` from 10 up to `n/4`.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let top = (n / 4).max(2);
    let mut ks = Vec::new();
    let mut k = 10.0f64.min(top as f64);
    while (k as usize) <= top {
        let ki = k as usize;
        if ks.last() != Some(&ki) {
            ks.push(ki);
        }
        k *= 1.25;
    }
    ks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreimanRow {
    pub threshold: f64,
    /// `P(xi eta > x) / P(xi > x)`; `None` when no `xi` exceeds the threshold.
    pub ratio: Option<f64>,
    pub product_exceedances: usize,
    pub xi_exceedances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreimanReport {
    /// Sample estimate of `E eta^alpha`.
    pub eta_moment: f64,
    pub rows: Vec<BreimanRow>,
}

fn eta_moment(eta: &[f64], alpha: f64) -> f64 {
    stats::mean(&eta.iter().map(|e| e.powf(alpha)).collect::<Vec<_>>())
}

/// Empirical `P(xi eta > x) / P(xi > x)` for paired samples.
pub fn breiman_ratio(xi: &[f64], eta: &[f64], alpha: f64, x_grid: &[f64]) -> Result<BreimanReport> {
    if xi.is_empty() || xi.len() != eta.len() {
        return Err(Error::InvalidInput(format!(
            "xi and eta must be non-empty and paired, got {} and {}",
            xi.len(),
            eta.len()
        )));
    }
    if xi.iter().chain(eta).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("xi and eta must be positive".into()));
    }
    let products: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| a * b).collect();
    let rows = x_grid
        .iter()
        .map(|&x| {
            let xi_exceedances = xi.iter().filter(|v| **v > x).count();
            let product_exceedances = products.iter().filter(|v| **v > x).count();
            BreimanRow {
                threshold: x,
                ratio: (xi_exceedances > 0).then(|| product_exceedances as f64 / xi_exceedances as f64),
                product_exceedances,
                xi_exceedances,
            }
        })
        .collect();
    Ok(BreimanReport {
        eta_moment: eta_moment(eta, alpha),
        rows,
    })
}

/// Same ratio computed from a known tail function of `xi`:
/// `mean_j tail(x / eta_j) / tail(x)`. On an exact Pareto tail with a
/// constant `eta = c` this is `c^alpha` up to rounding.
pub fn breiman_ratio_from_tail<F: Fn(f64) -> f64>(
    xi_tail: F,
    eta: &[f64],
    alpha: f64,
    x_grid: &[f64],
) -> Result<BreimanReport> {
    if eta.is_empty() || eta.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("eta must be non-empty and positive".into()));
    }
    let rows = x_grid
        .iter()
        .map(|&x| {
            let base = xi_tail(x);
            let num = eta.iter().map(|e| xi_tail(x / e)).sum::<f64>() / eta.len() as f64;
            BreimanRow {
                threshold: x,
                ratio: (base > 0.0).then(|| num / base),
                product_exceedances: 0,
                xi_exceedances: 0,
            }
        })
        .collect();
    Ok(BreimanReport {
        eta_moment: eta_moment(eta, alpha),
        rows,
    })
}

/// Fraction of the large vectors (norm above the `radius_quantile` empirical
/// quantile of the norms) whose direction falls in each of `n_sets` sets.
/// `partition` maps a unit vector to its set index.
pub fn empirical_spectral_measure<F>(
    vectors: &[Vec<f64>],
    radius_quantile: f64,
    n_sets: usize,
    partition: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> usize,
{
    if !(0.9..1.0).contains(&radius_quantile) {
        return Err(Error::InvalidParameter(format!(
            "radius quantile must lie in [0.9, 1), got {radius_quantile}"
        )));
    }
    if vectors.is_empty() || n_sets == 0 {
        return Err(Error::InvalidInput("need vectors and at least one direction set".into()));
    }
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    let r = stats::quantile(&norms, radius_quantile);
    let mut counts = vec![0usize; n_sets];
    let mut total = 0usize;
    let mut unit = Vec::new();
    for (v, &nv) in vectors.iter().zip(&norms) {
        if nv > r {
            unit.clear();
            unit.extend(v.iter().map(|a| a / nv));
            let set = partition(&unit);
            if set >= n_sets {
                return Err(Error::InvalidInput(format!(
                    "partition returned set {set}, only {n_sets} sets declared"
                )));
            }
            counts[set] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("no vector exceeds the radius threshold".into()));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Blocks estimator of the extremal index with the threshold at the given
/// empirical quantile. The ratio of blocks hit to exceedances is taken on the
/// log scale, `log(1 - K/b) / (m log(1 - N/n))`, which removes the multiple-hit
/// bias of the raw ratio `K/N` for i.i.d. blocks. Capped at 1.
/// A trailing incomplete block is dropped.
pub fn extremal_index_blocks(series: &[f64], block_len: usize, threshold_quantile: f64) -> Result<f64> {
    if block_len < 2 {
        return Err(Error::InvalidParameter("block length must be at least 2".into()));
    }
    if series.len() < 50 * block_len {
        return Err(Error::InvalidInput(format!(
            "series length {} below 50 * block length = {}",
            series.len(),
            50 * block_len
        )));
    }
    if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold quantile must lie in (0, 1), got {threshold_quantile}"
        )));
    }
    let u = stats::quantile(series, threshold_quantile);
    let mut exceedances = 0usize;
    let mut blocks_hit = 0usize;
    let mut blocks = 0usize;
    for block in series.chunks_exact(block_len) {
        blocks += 1;
        let c = block.iter().filter(|v| **v > u).count();
        exceedances += c;
        if c > 0 {
            blocks_hit += 1;
        }
    }
    if exceedances == 0 {
        return Err(Error::Numerical("no exceedances of the threshold".into()));
    }
    let used = (blocks * block_len) as f64;
    if blocks_hit == blocks || exceedances as f64 == used {
        return Ok((blocks_hit as f64 / exceedances as f64).min(1.0));
    }
    let hit_rate = blocks_hit as f64 / blocks as f64;
    let exceed_rate = exceedances as f64 / used;
    let gamma = (-hit_rate).ln_1p() / (block_len as f64 * (-exceed_rate).ln_1p());
    Ok(gamma.min(1.0))
}
