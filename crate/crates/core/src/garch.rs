//! GARCH(p,q) parameters, path simulation and stationarity checks.
//!
//! ```text
//! X_t = sigma_t Z_t,
//! sigma_t^2 = alpha_0 + sum_i alpha_i X_{t-i}^2 + sum_j beta_j sigma_{t-j}^2.
//! ```

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::{InnovationModel, SeedSpec};
use crate::sre::{self, LyapunovEstimate};

/// Default number of discarded warm-up steps.
pub const DEFAULT_BURN_IN: usize = 2000;

/// `theta = (alpha_0, .., alpha_p, beta_1, .., beta_q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GarchParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn garch11(alpha0: f64, alpha1: f64, beta1: f64) -> Result<Self> {
        Self::new(vec![alpha0, alpha1], vec![beta1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() < 2 {
            return Err(Error::InvalidParameter(
                "alpha must hold alpha_0 and at least alpha_1 (p >= 1)".into(),
            ));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.alpha[0] <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha_0 must be positive, got {}",
                self.alpha[0]
            )));
        }
        if let Some(v) = self.alpha[1..].iter().chain(&self.beta).find(|v| **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha_i and beta_j must be nonnegative, got {v}"
            )));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn q(&self) -> usize {
        self.beta.len()
    }

    /// Number of free parameters `p + q + 1`.
    pub fn dim(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha[0]
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    /// `alpha_0 / (1 - sum beta)`, the deterministic fixed point.
    pub fn fixed_point(&self) -> Result<f64> {
        let denom = 1.0 - self.beta_sum();
        if denom <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sum of beta = {} >= 1: fixed-point initialization undefined",
                self.beta_sum()
            )));
        }
        Ok(self.alpha[0] / denom)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.beta).copied().collect()
    }

    pub fn from_slice(p: usize, q: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != p + q + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters for GARCH({p},{q}), got {}",
                p + q + 1,
                theta.len()
            )));
        }
        Self::new(theta[..=p].to_vec(), theta[p + 1..].to_vec())
    }

    /// Zero-extend to orders `(p, q)`.
    pub fn padded(&self, p: usize, q: usize) -> Self {
        let mut alpha = self.alpha.clone();
        alpha.resize(p.max(self.p()) + 1, 0.0);
        let mut beta = self.beta.clone();
        beta.resize(q.max(self.q()), 0.0);
        Self { alpha, beta }
    }
}

/// `beta_1 + .. + beta_q < 1`.
pub fn necessary_stationarity(params: &GarchParams) -> bool {
    params.beta_sum() < 1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct GarchPath {
    pub x: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub z: Vec<f64>,
    pub params_used: GarchParams,
    pub burn_in: usize,
    /// Observations and volatilities of the discarded warm-up, oldest first.
    pub burn_x: Vec<f64>,
    pub burn_sigma2: Vec<f64>,
}

impl GarchPath {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Warm-up followed by the returned observations.
    pub fn full_x(&self) -> Vec<f64> {
        self.burn_x.iter().chain(&self.x).copied().collect()
    }
}

/// Simulate `burn_in + n` steps from the fixed point `alpha_0/(1 - sum beta)`
/// with zero presample observations and keep the last `n`.
///
/// Innovations are drawn sequentially from `seed`, so a shorter path is a
/// prefix of a longer one with the same seed and burn-in.
pub fn simulate(
    params: &GarchParams,
    model: &InnovationModel,
    n: usize,
    burn_in: usize,
    seed: SeedSpec,
) -> Result<GarchPath> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    let init = params.fixed_point()?;
    let total = burn_in + n;
    let sampler = model.sampler();
    let mut rng = seed.rng();
    let (p, q) = (params.p(), params.q());
    let mut x = Vec::with_capacity(total);
    let mut x2 = Vec::with_capacity(total);
    let mut sigma2 = Vec::with_capacity(total);
    let mut z = Vec::with_capacity(total);
    for t in 0..total {
        let mut s = params.alpha[0];
        for i in 1..=p {
            if t >= i {
                s += params.alpha[i] * x2[t - i];
            }
        }
        for j in 1..=q {
            s += params.beta[j - 1] * if t >= j { sigma2[t - j] } else { init };
        }
        if !s.is_finite() {
            return Err(Error::Overflow {
                index: t,
                what: format!(
                    "sigma^2 at step {t} of {total} (burn-in {burn_in}); parameters are explosive"
                ),
            });
        }
        let zt = sampler.sample(&mut rng);
        let xt = s.sqrt() * zt;
        z.push(zt);
        x.push(xt);
        x2.push(xt * xt);
        sigma2.push(s);
    }
    let burn_x = x[..burn_in].to_vec();
    let burn_sigma2 = sigma2[..burn_in].to_vec();
    Ok(GarchPath {
        x: x.split_off(burn_in),
        sigma2: sigma2.split_off(burn_in),
        z: z.split_off(burn_in),
        params_used: params.clone(),
        burn_in,
        burn_x,
        burn_sigma2,
    })
}

/// Top Lyapunov exponent of the volatility block `M1(Z_t)`; stationarity
/// holds iff it is negative.
pub fn lyapunov_stationarity(
    params: &GarchParams,
    model: &InnovationModel,
    horizon: usize,
    reps: usize,
    seed: SeedSpec,
) -> Result<LyapunovEstimate> {
    params.validate()?;
    let sys = sre::build_sre(params);
    sre::lyapunov_products(|z| sys.m1(z), model, horizon, reps, seed)
}

/// Abort with the estimate unless the exponent is negative by `margin`
/// standard errors.
pub fn require_stationary(
    params: &GarchParams,
    model: &InnovationModel,
    seed: SeedSpec,
) -> Result<LyapunovEstimate> {
    let est = lyapunov_stationarity(params, model, 2000, 20, seed)?;
    if !est.negative_with_margin(3.0) {
        return Err(Error::NonStationary {
            rho: est.rho_hat,
            std_err: est.std_err,
        });
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(GarchParams::new(vec![0.0, 0.1], vec![0.8]).is_err());
        assert!(GarchParams::new(vec![0.1], vec![0.8]).is_err());
        assert!(GarchParams::new(vec![0.1, -0.1], vec![0.8]).is_err());
        assert!(GarchParams::new(vec![0.1, 0.1], vec![f64::NAN]).is_err());
        let p = GarchParams::new(vec![0.1, 0.1, 0.05], vec![0.8]).unwrap();
        assert_eq!((p.p(), p.q(), p.dim()), (2, 1, 4));
        assert_eq!(GarchParams::from_slice(2, 1, &p.to_vec()).unwrap(), p);
    }

    #[test]
    fn necessary_condition() {
        let with_beta = |b: Vec<f64>| GarchParams::new(vec![0.1, 0.1], b).unwrap();
        assert!(necessary_stationarity(&with_beta(vec![0.5, 0.3])));
        assert!(!necessary_stationarity(&with_beta(vec![0.6, 0.4])));
        assert!(necessary_stationarity(&with_beta(vec![])));
    }

    #[test]
    fn constant_volatility_degenerate_case() {
        let params = GarchParams::new(vec![0.25, 0.0], vec![]).unwrap();
        let path = simulate(&params, &InnovationModel::Gaussian, 500, 10, SeedSpec::new(3, 0)).unwrap();
        for t in 0..path.len() {
            assert_eq!(path.sigma2[t], 0.25);
            assert!((path.x[t] - 0.5 * path.z[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn unconditional_variance_garch11() {
        let params = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
        let path = simulate(
            &params,
            &InnovationModel::Gaussian,
            200_000,
            DEFAULT_BURN_IN,
            SeedSpec::new(4, 0),
        )
        .unwrap();
        let m = path.x.iter().map(|v| v * v).sum::<f64>() / path.len() as f64;
        assert!((m - 1.0).abs() < 0.05, "mean of X^2 {m}");
    }

    #[test]
    fn path_identities_and_determinism() {
        let params = GarchParams::new(vec![0.05, 0.1, 0.05], vec![0.5, 0.2]).unwrap();
        let model = InnovationModel::student_t(3.0).unwrap();
        let a = simulate(&params, &model, 3000, 100, SeedSpec::new(9, 2)).unwrap();
        let b = simulate(&params, &model, 3000, 100, SeedSpec::new(9, 2)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.sigma2, b.sigma2);
        for t in 0..a.len() {
            let lhs = a.x[t] * a.x[t];
            let rhs = a.sigma2[t] * a.z[t] * a.z[t];
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
            assert!(a.sigma2[t] >= params.alpha0());
        }
        // prefix property
        let short = simulate(&params, &model, 1000, 100, SeedSpec::new(9, 2)).unwrap();
        assert_eq!(&a.x[..1000], &short.x[..]);
    }

    #[test]
    fn explosive_parameters_overflow() {
        let params = GarchParams::garch11(0.1, 3.0, 0.9).unwrap();
        let err = simulate(&params, &InnovationModel::Gaussian, 20_000, 0, SeedSpec::new(1, 0))
            .unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }), "{err}");
    }

    #[test]
    fn lyapunov_deterministic_case() {
        let params = GarchParams::garch11(0.1, 0.0, 0.8).unwrap();
        let est = lyapunov_stationarity(&params, &InnovationModel::Gaussian, 2000, 5, SeedSpec::new(1, 0))
            .unwrap();
        assert!((est.rho_hat - 0.8f64.ln()).abs() < 5e-3, "{}", est.rho_hat);
        // the padded lag rows carry z^2 into the norm at finite horizon only
        assert!(est.std_err < 1e-3, "{:?}", est);
    }

    fn scalar_oracle(a1: f64, b1: f64, model: &InnovationModel, n: usize) -> (f64, f64) {
        let z = crate::innovations::sample_innovations(model, n, SeedSpec::new(777, 1)).unwrap();
        let v: Vec<f64> = z.iter().map(|z| (a1 * z * z + b1).ln()).collect();
        let m = crate::stats::mean(&v);
        (m, (crate::stats::variance(&v) / n as f64).sqrt())
    }

    #[test]
    fn lyapunov_matches_scalar_oracle() {
        let params = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
        let model = InnovationModel::Gaussian;
        let est = lyapunov_stationarity(&params, &model, 2000, 40, SeedSpec::new(5, 0)).unwrap();
        let (oracle, oracle_se) = scalar_oracle(0.1, 0.8, &model, 2_000_000);
        let se = (est.std_err.powi(2) + oracle_se.powi(2)).sqrt();
        // finite-horizon bias of the norm is O(1/horizon)
        assert!(
            (est.rho_hat - oracle).abs() < 3.0 * se + 2e-3,
            "{} vs {oracle} (se {se})",
            est.rho_hat
        );
        assert!(est.negative_with_margin(3.0));
    }

    #[test]
    fn lyapunov_detects_explosive_case() {
        let params = GarchParams::garch11(0.1, 3.0, 0.9).unwrap();
        let model = InnovationModel::Gaussian;
        let (oracle, _) = scalar_oracle(3.0, 0.9, &model, 1_000_000);
        assert!(oracle > 0.0);
        let est = lyapunov_stationarity(&params, &model, 1000, 20, SeedSpec::new(6, 0)).unwrap();
        assert!(est.positive_with_margin(3.0), "{est:?}");
        assert!(matches!(
            require_stationary(&params, &model, SeedSpec::new(6, 0)),
            Err(Error::NonStationary { .. })
        ));
    }

    #[test]
    fn negative_exponent_never_with_beta_sum_at_least_one() {
        let model = InnovationModel::Gaussian;
        for (a1, beta) in [(0.05, vec![1.0]), (0.0, vec![0.6, 0.4]), (0.1, vec![0.7, 0.35])] {
            let params = GarchParams::new(vec![0.1, a1], beta).unwrap();
            let est = lyapunov_stationarity(&params, &model, 1000, 20, SeedSpec::new(8, 0)).unwrap();
            assert!(!est.negative_with_margin(3.0), "{params:?}: {est:?}");
        }
    }
}
