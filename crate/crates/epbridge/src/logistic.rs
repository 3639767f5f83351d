//! Binomial logistic regression under the same prior: a Pólya–Gamma PCG
//! sampler and proximal-Newton coordinate descent for the NSB penalty.
//!
//! With `kappa_i = y_i - n_i/2` and `omega_i ~ PG(n_i, x_i^T beta)` the
//! likelihood is Gaussian in `beta` with precision `X^T Omega X`, so the PCG
//! sweep changes only the `beta` draw and replaces the `sigma2` step with the
//! `omega` step.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::cdopt::{t_map, CdConfig, CdSolution, PenaltyConsts};
use crate::data::{col, dot, mat_t_vec, mat_vec, Dataset, Standardizer};
use crate::distributions::{sample_mvn_augmented, sample_mvn_precision, sample_polya_gamma, RngStream};
use crate::pcg::{
    beta_names, draw_b, draw_lambda, draw_tau2, draw_v, ln_prior_var, run_chain, PcgConfig, PcgState, RunConfig, Trace,
};
use crate::prior::{bridge_sum, root};
use crate::{Error, Result};

/// Floor on the IRLS weights `n_i P_i (1 - P_i)`.
pub const WEIGHT_FLOOR: f64 = 1e-5;
/// Step-halvings tried before an outer iteration gives up.
pub const MAX_HALVINGS: usize = 20;
/// Cap on proximal-Newton outer iterations.
pub const MAX_OUTER: usize = 100;

/// Binomial responses: `successes[i] ~ Binom(trials[i], 1/(1 + exp(-x_i^T beta)))`.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub x: Mat<f64>,
    pub trials: Vec<u32>,
    pub successes: Vec<u32>,
    pub n: usize,
    pub p: usize,
}

impl LogisticData {
    pub fn new(x: Mat<f64>, trials: Vec<u32>, successes: Vec<u32>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(Error::Config("empty design".into()));
        }
        if trials.len() != n || successes.len() != n {
            return Err(Error::Config(format!(
                "X has {n} rows but trials/successes have {}/{} entries",
                trials.len(),
                successes.len()
            )));
        }
        if let Some(i) = trials.iter().position(|t| *t == 0) {
            return Err(Error::Domain(format!("row {i} has zero trials")));
        }
        if let Some(i) = (0..n).find(|&i| successes[i] > trials[i]) {
            return Err(Error::Domain(format!("row {i} has more successes than trials")));
        }
        if (0..p).any(|j| col(&x, j).iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain("non-finite design entry".into()));
        }
        Ok(LogisticData { x, trials, successes, n, p })
    }

    /// Centers the columns of `x` and scales them to squared norm `n`.
    pub fn standardize(x: Mat<f64>, trials: Vec<u32>, successes: Vec<u32>) -> Result<Self> {
        let zeros = vec![0.0; x.nrows()];
        let (xs, _) = Standardizer::fit(&x, &zeros).apply(&x, &zeros);
        LogisticData::new(xs, trials, successes)
    }

    /// `kappa_i = y_i - n_i / 2`.
    pub fn kappa(&self) -> Vec<f64> {
        self.successes.iter().zip(&self.trials).map(|(y, t)| f64::from(*y) - 0.5 * f64::from(*t)).collect()
    }

    /// Linear predictor `X beta`.
    pub fn eta(&self, beta: &[f64]) -> Vec<f64> {
        mat_vec(&self.x, beta)
    }
}

/// Draws binomial responses for `design` at `beta0`, `trials` per row.
pub fn gen_logistic(design: &Dataset, beta0: &[f64], trials: u32, rng: &mut RngStream) -> Result<LogisticData> {
    if beta0.len() != design.p {
        return Err(Error::Config(format!("beta0 has length {} but p = {}", beta0.len(), design.p)));
    }
    let eta = mat_vec(&design.x, beta0);
    let mut successes = Vec::with_capacity(design.n);
    for e in eta {
        let prob = 1.0 / (1.0 + (-e).exp());
        let dist = Binomial::new(u64::from(trials), prob).map_err(|e| Error::Domain(e.to_string()))?;
        successes.push(dist.sample(rng) as u32);
    }
    LogisticData::new(design.x.clone(), vec![trials; design.n], successes)
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Negative log-likelihood `sum n_i log(1 + e^eta_i) - y_i eta_i` (binomial
/// coefficients dropped).
pub fn logistic_nll(data: &LogisticData, beta: &[f64]) -> f64 {
    nll_at(data, &data.eta(beta))
}

fn nll_at(data: &LogisticData, eta: &[f64]) -> f64 {
    eta.iter()
        .zip(&data.trials)
        .zip(&data.successes)
        .map(|((e, t), y)| f64::from(*t) * softplus(*e) - f64::from(*y) * e)
        .sum()
}

/// `nll(beta) + kexp log(sum |beta_j|^(2^-g) + 1/b)`.
pub fn logistic_penalized_loss(data: &LogisticData, beta: &[f64], gamma: u32, b: f64) -> f64 {
    let k = PenaltyConsts::new(gamma, data.p);
    logistic_nll(data, beta) + k.kexp * (bridge_sum(beta, gamma) + 1.0 / b).ln()
}

/// Ω-weighted Gaussian draw
/// `beta ~ N(Q^{-1} X^T kappa, Q^{-1})`, `Q = X^T Omega X + diag(exp(-ln_prior_var))`.
/// Cholesky of `Q` when `p <= n`, the augmentation with rows scaled by
/// `sqrt(omega)` and response `kappa / sqrt(omega)` otherwise. With
/// `omega = 1` this is the linear draw at `sigma2 = 1`.
pub fn draw_weighted_beta(
    x: &Mat<f64>,
    omega: &[f64],
    kappa: &[f64],
    ln_prior_var: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    if omega.len() != n || kappa.len() != n || ln_prior_var.len() != p {
        return Err(Error::Config("dimension mismatch in weighted Gaussian draw".into()));
    }
    if omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Domain("Polya-Gamma weights must be positive and finite".into()));
    }
    let sw: Vec<f64> = omega.iter().map(|w| w.sqrt()).collect();
    if p <= n {
        let phi = Mat::from_fn(n, p, |i, j| sw[i] * x[(i, j)]);
        let mut q = Mat::<f64>::zeros(p, p);
        matmul(q.as_mut(), Accum::Replace, phi.transpose(), phi.as_ref(), 1.0, Par::Seq);
        let d_inv: Vec<f64> = ln_prior_var.iter().map(|lv| (-lv).exp().min(1e300)).collect();
        sample_mvn_precision(&q, &d_inv, 1.0, &mat_t_vec(x, kappa), 1.0, rng)
    } else {
        let alpha: Vec<f64> = kappa.iter().zip(&sw).map(|(k, s)| k / s).collect();
        let prior_var: Vec<f64> = ln_prior_var.iter().map(|lv| lv.exp().min(1e300)).collect();
        sample_mvn_augmented(x, &sw, &alpha, &prior_var, rng)
    }
}

/// PCG state plus the Pólya–Gamma latents; `pcg.sigma2` is unused and
/// stays at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticState {
    pub pcg: PcgState,
    pub omega: Vec<f64>,
}

impl LogisticState {
    /// `beta = 0`, unit scales, `omega_i = n_i / 4` (the PG(n_i, 0) mean).
    pub fn initial(data: &LogisticData, gamma: u32) -> Self {
        let pcg = PcgState {
            beta: vec![0.0; data.p],
            tau2: vec![1.0; data.p],
            v: vec![vec![1.0; data.p]; gamma as usize],
            lam: 1.0,
            b: 1.0,
            sigma2: 1.0,
        };
        LogisticState { pcg, omega: data.trials.iter().map(|t| 0.25 * f64::from(*t)).collect() }
    }
}

/// `omega_i ~ PG(n_i, x_i^T beta)`.
pub fn draw_omega(state: &mut LogisticState, data: &LogisticData, rng: &mut RngStream) -> Result<()> {
    let eta = data.eta(&state.pcg.beta);
    for (i, e) in eta.iter().enumerate() {
        state.omega[i] = sample_polya_gamma(data.trials[i], *e, rng)?;
    }
    Ok(())
}

/// One sweep: `beta`, `lam`, `v`, `tau2`, `omega`, `b`. The `lam`, `v`,
/// `tau2` and `b` conditionals are the linear sampler's.
pub fn pcg_logistic_step(
    state: &mut LogisticState,
    data: &LogisticData,
    config: &PcgConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let kappa = data.kappa();
    logistic_sweep(state, data, &kappa, config, rng)
}

fn logistic_sweep(
    state: &mut LogisticState,
    data: &LogisticData,
    kappa: &[f64],
    config: &PcgConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let g = config.gamma;
    let lv = ln_prior_var(&state.pcg, g);
    state.pcg.beta = draw_weighted_beta(&data.x, &state.omega, kappa, &lv, rng)?;
    draw_lambda(&mut state.pcg, g, config.hyper, rng)?;
    draw_v(&mut state.pcg, g, rng)?;
    draw_tau2(&mut state.pcg, g, rng)?;
    draw_omega(state, data, rng)?;
    draw_b(&mut state.pcg, config.hyper, rng)
}

/// Independent logistic PCG chains on streams `0..n_chains` of `run.seed`.
/// Retains `beta` and `lambda`.
pub fn run_pcg_logistic(data: &LogisticData, config: &PcgConfig, run: &RunConfig) -> Result<Vec<Trace>> {
    config.validate()?;
    run.validate()?;
    let kappa = data.kappa();
    let mut names: Vec<String> = beta_names(data.p).collect();
    names.push("lambda".into());
    (0..run.n_chains)
        .into_par_iter()
        .map(|c| {
            run_chain(
                run,
                c,
                names.clone(),
                LogisticState::initial(data, config.gamma),
                |s, rng| logistic_sweep(s, data, &kappa, config, rng),
                |s, out| {
                    out.extend_from_slice(&s.pcg.beta);
                    out.push(s.pcg.lam);
                },
            )
        })
        .collect()
}

/// Quadratic expansion of the negative log-likelihood at `beta`: weights
/// `W_i = max(n_i P_i (1 - P_i), WEIGHT_FLOOR)` and working response
/// `z_i = eta_i + (y_i - n_i P_i) / W_i`. The flag reports whether any
/// weight was floored.
pub fn irls_expansion(data: &LogisticData, beta: &[f64]) -> (Vec<f64>, Vec<f64>, bool) {
    let eta = data.eta(beta);
    let mut floored = false;
    let mut w = Vec::with_capacity(data.n);
    let mut z = Vec::with_capacity(data.n);
    for i in 0..data.n {
        let prob = 1.0 / (1.0 + (-eta[i]).exp());
        let t = f64::from(data.trials[i]);
        let raw = t * prob * (1.0 - prob);
        if raw < WEIGHT_FLOOR {
            floored = true;
        }
        let wi = raw.max(WEIGHT_FLOOR);
        w.push(wi);
        z.push(eta[i] + (f64::from(data.successes[i]) - t * prob) / wi);
    }
    (w, z, floored)
}

/// Coordinate descent on `(1/2) sum W_i (z_i - x_i^T beta)^2 + penalty`
/// from `beta`, with the linear T-map on `xtx_j = X_j^T W X_j` and
/// `z_j = X_j^T W (z - X_{-j} beta_{-j})`.
fn weighted_cd(data: &LogisticData, w: &[f64], z: &[f64], config: &CdConfig, beta: &mut [f64]) {
    let g = config.gamma;
    let k = PenaltyConsts::new(g, data.p);
    let inv_b = 1.0 / config.b;
    let xtx: Vec<f64> = (0..data.p).map(|j| col(&data.x, j).iter().zip(w).map(|(x, wi)| wi * x * x).sum()).collect();
    let fit = data.eta(beta);
    // weighted residual W (z - X beta)
    let mut wr: Vec<f64> = (0..data.n).map(|i| w[i] * (z[i] - fit[i])).collect();
    let mut s = bridge_sum(beta, g);
    for _ in 0..config.max_sweeps {
        let mut step_sq = 0.0;
        for j in 0..data.p {
            let xj = col(&data.x, j);
            let old = beta[j];
            let old_root = root(old, g);
            let zj = dot(xj, &wr) + xtx[j] * old;
            let c2 = (s - old_root).max(0.0) + inv_b;
            let new = t_map(zj, xtx[j], c2, old, &k, config.eps_inner, config.max_fixed_point);
            if new != old {
                let d = new - old;
                for ((r, x), wi) in wr.iter_mut().zip(xj).zip(w) {
                    *r -= wi * x * d;
                }
                beta[j] = new;
                s += root(new, g) - old_root;
                step_sq += d * d;
            }
        }
        s = bridge_sum(beta, g);
        if step_sq.sqrt() <= config.eps_outer {
            break;
        }
    }
}

/// Proximal-Newton result with its outer-loop history.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxNewtonFit {
    pub solution: CdSolution,
    /// Penalized loss at the start and after every accepted outer step.
    pub outer_losses: Vec<f64>,
    /// Some IRLS weight fell below [`WEIGHT_FLOOR`] (near-separation).
    pub weights_floored: bool,
}

/// Proximal-Newton coordinate descent for the NSB-penalized logistic loss.
/// Each outer iteration expands the likelihood at the current `beta`
/// ([`irls_expansion`]), solves the penalized weighted least-squares problem
/// by CD, and moves toward that solution, halving the step up to
/// [`MAX_HALVINGS`] times until the penalized loss does not increase. Stops
/// when the accepted step is below `eps_outer`, when no halving decreases
/// the loss, or after [`MAX_OUTER`] iterations.
pub fn proximal_newton_cd_traced(data: &LogisticData, config: &CdConfig, beta_init: &[f64]) -> Result<ProxNewtonFit> {
    config.validate()?;
    if beta_init.len() != data.p {
        return Err(Error::Config(format!("initial value has length {} but p = {}", beta_init.len(), data.p)));
    }
    let loss = |b: &[f64]| logistic_penalized_loss(data, b, config.gamma, config.b);
    let mut beta = beta_init.to_vec();
    let mut current = loss(&beta);
    let mut outer_losses = vec![current];
    let mut weights_floored = false;
    let mut converged = false;
    let mut iters = 0;
    while iters < MAX_OUTER {
        iters += 1;
        let (w, z, floored) = irls_expansion(data, &beta);
        weights_floored |= floored;
        let mut target = beta.clone();
        weighted_cd(data, &w, &z, config, &mut target);
        let dir: Vec<f64> = target.iter().zip(&beta).map(|(t, b)| t - b).collect();
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> =
                if scale == 1.0 { target.clone() } else { beta.iter().zip(&dir).map(|(b, d)| b + scale * d).collect() };
            let l = loss(&trial);
            if l <= current {
                accepted = Some((trial, l));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, l)) = accepted else { break };
        let step: f64 = next.iter().zip(&beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        beta = next;
        current = l;
        outer_losses.push(l);
        if step <= config.eps_outer {
            converged = true;
            break;
        }
    }
    let s_hat = beta.iter().filter(|b| **b != 0.0).count();
    let solution =
        CdSolution { beta_hat: beta, s_hat, sigma2_hat: None, sweeps: iters, converged, final_loss: current };
    Ok(ProxNewtonFit { solution, outer_losses, weights_floored })
}

/// [`proximal_newton_cd_traced`] without the history.
pub fn proximal_newton_cd(data: &LogisticData, config: &CdConfig, beta_init: &[f64]) -> Result<CdSolution> {
    proximal_newton_cd_traced(data, config, beta_init).map(|f| f.solution)
}
