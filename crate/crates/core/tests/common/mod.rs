//! Independent straight-line oracles shared by the integration tests. Outside
//! `cli` and `checks`, nothing here calls into the crate.
#![allow(dead_code)]

use garch_stable::GarchParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Volatility filter with fixed-point presample and zero presample data.
pub fn naive_filter(x: &[f64], alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let init = alpha[0] / (1.0 - beta.iter().sum::<f64>());
    let mut h: Vec<f64> = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let mut v = alpha[0];
        for i in 1..alpha.len() {
            if t >= i {
                v += alpha[i] * x[t - i] * x[t - i];
            }
        }
        for j in 1..=beta.len() {
            v += beta[j - 1] * if t >= j { h[t - j] } else { init };
        }
        h.push(v);
    }
    h
}

pub fn naive_loglik(x: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    let h = naive_filter(x, alpha, beta);
    let mut s = 0.0;
    for t in 0..x.len() {
        s += x[t] * x[t] / h[t] + h[t].ln();
    }
    -0.5 * s
}

/// Power-series coefficients of `alpha(z)/beta(z)` by dividing term by term.
pub fn naive_psi(alpha: &[f64], beta: &[f64], j_max: usize) -> Vec<f64> {
    let p = alpha.len() - 1;
    let mut psi = vec![0.0; j_max + 1];
    for j in 1..=j_max {
        let mut v = if j <= p { alpha[j] } else { 0.0 };
        for (i, b) in beta.iter().enumerate() {
            let lag = i + 1;
            if lag < j {
                v += b * psi[j - lag];
            }
        }
        psi[j] = v;
    }
    psi
}

/// Central differences with step `1e-6 (1 + |theta_i|)`.
pub fn central_differences<F: Fn(&[f64]) -> Vec<f64>>(f: F, theta: &[f64]) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[i].abs());
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fu = f(&up);
        let fd = f(&dn);
        cols.push(fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    cols
}

/// Random valid parameters with `p, q <= 3`, `sum alpha_i + sum beta_j <= 0.95`
/// and every coefficient positive, so the model is stationary.
pub fn random_params<R: Rng>(rng: &mut R, p_range: (usize, usize), q_range: (usize, usize)) -> GarchParams {
    let p = rng.random_range(p_range.0..=p_range.1);
    let q = rng.random_range(q_range.0..=q_range.1);
    let total: f64 = rng.random_range(0.3..0.95);
    let weights: Vec<f64> = (0..p + q).map(|_| rng.random_range(0.1..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let coef: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
    let mut alpha = vec![rng.random_range(0.05..1.0)];
    alpha.extend_from_slice(&coef[..p]);
    GarchParams::new(alpha, coef[p..].to_vec()).unwrap()
}

/// Random data with occasional large values.
pub fn random_series<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(-1.0..1.0);
            if rng.random_bool(0.05) {
                u * 10.0
            } else {
                u
            }
        })
        .collect()
}

pub fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// i.i.d. Pareto(alpha) on `[1, inf)` by inversion.
pub fn pareto_sample<R: Rng>(rng: &mut R, alpha: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (1.0 - u).powf(-1.0 / alpha)
        })
        .collect()
}

/// i.i.d. standard Frechet(alpha).
pub fn frechet_sample<R: Rng>(rng: &mut R, alpha: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (-u.ln()).powf(-1.0 / alpha)
        })
        .collect()
}

pub mod cli {
    use std::collections::BTreeMap;
    use std::fs;
    use std::path::Path;
    use std::process::Command;

    pub fn bin() -> &'static str {
        env!("CARGO_BIN_EXE_garch-stable")
    }

    /// Exit code, stdout and stderr of one invocation.
    pub fn run(args: &[&str]) -> (i32, String, String) {
        let out = Command::new(bin()).args(args).output().expect("spawn garch-stable");
        (
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned(),
            String::from_utf8_lossy(&out.stderr).into_owned(),
        )
    }

    /// Small but complete configuration for each subcommand.
    pub fn config(kind: &str, data: &Path) -> String {
        let base = "theta0.alpha = [0.1, 0.1]\ntheta0.beta = [0.8]\nburn_in = 500\n";
        let body = match kind {
            "simulate" => "n_grid = [2000]\n".to_string(),
            "fit" => "n_grid = [1500]\n".to_string(),
            "rate" => "innovation = { family = \"student_t\", nu = 3.0 }\nn_grid = [500, 1000]\nreplications = 4\n".to_string(),
            "stable-limit" => "innovation = { family = \"student_t\", nu = 3.0 }\nn_grid = [1000]\nreplications = 20\n".to_string(),
            "mt-sums" => "innovation = { family = \"student_t\", nu = 3.0 }\nn_grid = [1000]\nreplications = 20\n".to_string(),
            "lyapunov" => "lyapunov.horizon = 200\nlyapunov.reps = 10\n".to_string(),
            "sre-check" => "lyapunov.horizon = 200\nlyapunov.reps = 10\nsre_check.steps = 100\nsre_check.start = 20\n".to_string(),
            "tails" => format!("data.input = {:?}\n", data.display().to_string()),
            "sandwich" => "sandwich.path_len = 5000\n".to_string(),
            other => panic!("no config for {other}"),
        };
        format!("kind = \"{kind}\"\n{base}{body}")
    }

    pub fn write_series(path: &Path) {
        let mut rng = super::rng(17);
        let x = super::pareto_sample(&mut rng, 1.5, 3000);
        let s: String = x.iter().map(|v| format!("{v}\n")).collect();
        fs::write(path, s).unwrap();
    }

    /// Every file in `dir` by name.
    pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect()
    }

    /// Runs every subcommand twice with one thread and once with three,
    /// returning the subcommands whose output files differ.
    pub fn nondeterministic_commands(work: &Path) -> Vec<String> {
        let data = work.join("series.txt");
        write_series(&data);
        let mut bad = Vec::new();
        for kind in garch_stable::experiments::KINDS {
            let cfg = work.join(format!("{kind}.toml"));
            fs::write(&cfg, config(kind, &data)).unwrap();
            let mut snaps = Vec::new();
            for (i, threads) in ["1", "1", "3"].iter().enumerate() {
                let out = work.join(format!("{kind}-{i}"));
                let (code, _, err) = run(&[
                    kind,
                    "--config",
                    cfg.to_str().unwrap(),
                    "--seed",
                    "9",
                    "--threads",
                    threads,
                    "--out",
                    out.to_str().unwrap(),
                ]);
                assert_eq!(code, 0, "{kind}: {err}");
                snaps.push(snapshot(&out));
            }
            if snaps[0].is_empty() || snaps[0] != snaps[1] || snaps[0] != snaps[2] {
                bad.push(kind.to_string());
            }
        }
        bad
    }
}

/// Checks built on the crate's own routines, shared by the test targets and
/// the acceptance suite.
pub mod checks {
    use garch_stable::filter::filter_gradient;
    use garch_stable::sre::top_lyapunov;
    use garch_stable::{GarchParams, InnovationModel, SeedSpec};
    use nalgebra::DMatrix;

    /// Worst relative error of the analytic gradient against central differences
    /// of the filter; components below `1e-3` of the row maximum are compared
    /// against that floor instead.
    pub fn gradient_fd_error(x: &[f64], params: &GarchParams) -> f64 {
        let (p, q) = (params.p(), params.q());
        let analytic = filter_gradient(x, params).unwrap();
        let fd = super::central_differences(
            |th| {
                let pr = GarchParams::from_slice(p, q, th).unwrap();
                super::naive_filter(x, &pr.alpha, &pr.beta)
            },
            &params.to_vec(),
        );
        let mut worst: f64 = 0.0;
        for t in 0..x.len() {
            let row = &analytic[t];
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..row.len() {
                let denom = row[i].abs().max(1e-3 * scale);
                worst = worst.max((fd[i][t] - row[i]).abs() / denom);
            }
        }
        worst
    }

    fn rotation(angle: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
    }

    /// Random block-lower-triangular sampler `[[A(z), 0], [B(z), C(z)]]` with
    /// `A(z) = a e^{0.3 z} R_1`, `C(z) = c e^{-0.2 z} R_2`; for standard normal
    /// `z` the block exponents are exactly `log a` and `log c`.
    pub struct BlockSystem {
        pub a: f64,
        pub c: f64,
    }

    impl BlockSystem {
        pub fn a_block(&self, z: f64) -> DMatrix<f64> {
            rotation(0.7) * (self.a * (0.3 * z).exp())
        }
        pub fn c_block(&self, z: f64) -> DMatrix<f64> {
            rotation(-1.1) * (self.c * (-0.2 * z).exp())
        }
        pub fn full(&self, z: f64) -> DMatrix<f64> {
            let mut m = DMatrix::zeros(4, 4);
            m.view_mut((0, 0), (2, 2)).copy_from(&self.a_block(z));
            m.view_mut((2, 2), (2, 2)).copy_from(&self.c_block(z));
            m.view_mut((2, 0), (2, 2))
                .copy_from(&DMatrix::from_row_slice(2, 2, &[z.tanh(), 1.0, 0.5, -z.tanh()]));
            m
        }
    }

    pub fn block_sign_test(seed: u64) -> Vec<(f64, f64, bool)> {
        let model = InnovationModel::Gaussian;
        let configs = [(0.5, 0.9), (1.3, 0.5), (0.5, 1.2), (0.7, 0.6), (1.5, 1.4), (0.8, 1.1)];
        let mut out = Vec::new();
        for (i, &(a, c)) in configs.iter().enumerate() {
            let sys = BlockSystem { a, c };
            let seed = SeedSpec::new(seed, i as u64);
            let ea = top_lyapunov(|z| sys.a_block(z), &model, 2000, 20, seed).unwrap();
            let ec = top_lyapunov(|z| sys.c_block(z), &model, 2000, 20, seed).unwrap();
            let ep = top_lyapunov(|z| sys.full(z), &model, 2000, 20, seed).unwrap();
            let separated = ea.rho_hat.abs() > 3.0 * ea.std_err && ec.rho_hat.abs() > 3.0 * ec.std_err;
            if separated {
                let block_max = ea.rho_hat.max(ec.rho_hat);
                out.push((ep.rho_hat, block_max, ep.rho_hat.signum() == block_max.signum()));
            }
        }
        out
    }
}
