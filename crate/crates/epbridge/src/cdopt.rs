//! Coordinate descent for the NSB-penalized least-squares loss
//! `L(beta) = ||y - X beta||^2 / 2 + (2^g p + 1/2) log(S + 1/b)`,
//! `S = sum_j |beta_j|^(2^-g)`.
//!
//! Each coordinate is updated by the exact univariate minimizer (the T-map):
//! a cheap lower bound on the selection threshold screens most zeros, a
//! fixed-point iteration finds the candidate nonzero minimizer, and the
//! descent function decides between that candidate and zero.

use crate::data::{col, dot, Dataset};
use crate::prior::{alpha, bridge_sum, pow2, root};
use crate::{Error, Result};

/// Exact recomputation period for the residual, in sweeps.
const REFRESH_SWEEPS: usize = 50;
/// `|delta|` below this is treated as a tie between zero and the candidate.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdConfig {
    pub gamma: u32,
    /// May be `+inf` (`1/b = 0`).
    pub b: f64,
    pub eps_outer: f64,
    pub eps_inner: f64,
    pub max_fixed_point: usize,
    pub max_sweeps: usize,
}

impl CdConfig {
    /// Default tolerances: `eps_outer = 1e-6`, `eps_inner = 1e-8`, 100
    /// fixed-point steps, 500 sweeps.
    pub fn new(gamma: u32, b: f64) -> Self {
        CdConfig { gamma, b, eps_outer: 1e-6, eps_inner: 1e-8, max_fixed_point: 100, max_sweeps: 500 }
    }

    pub fn with_b(self, b: f64) -> Self {
        CdConfig { b, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma > 8 {
            return Err(Error::Config(format!("gamma = {} is beyond the supported range", self.gamma)));
        }
        if !(self.b > 0.0) {
            return Err(Error::Config(format!("b must be positive, got {}", self.b)));
        }
        if !(self.eps_outer > 0.0 && self.eps_inner > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_fixed_point == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub beta_hat: Vec<f64>,
    pub s_hat: usize,
    /// `RSS / (n - s_hat)`; `None` when `n <= s_hat`.
    pub sigma2_hat: Option<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub final_loss: f64,
}

/// Constants of the univariate problem that depend only on `(gamma, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConsts {
    pub gamma: u32,
    /// `2^g p + 1/2`.
    pub kexp: f64,
    /// `kexp * 2^-g = p + 2^-(g+1)`.
    pub c1: f64,
}

impl PenaltyConsts {
    pub fn new(gamma: u32, p: usize) -> Self {
        let kexp = pow2(gamma) * p as f64 + 0.5;
        PenaltyConsts { gamma, kexp, c1: kexp * alpha(gamma) }
    }
}

/// `z_j = X_j^T (y - X_{-j} beta_{-j})`, from scratch.
pub fn partial_residual_correlation(data: &Dataset, beta: &[f64], j: usize) -> f64 {
    let r = data.residual(beta);
    dot(data.col(j), &r) + data.col_sq_norms[j] * beta[j]
}

/// Residual `y - X beta` maintained under single-coordinate changes.
#[derive(Debug, Clone)]
pub struct PartialResiduals<'a> {
    data: &'a Dataset,
    beta: Vec<f64>,
    r: Vec<f64>,
}

impl<'a> PartialResiduals<'a> {
    pub fn new(data: &'a Dataset, beta: Vec<f64>) -> Self {
        let r = data.residual(&beta);
        PartialResiduals { data, beta, r }
    }

    pub fn z(&self, j: usize) -> f64 {
        dot(self.data.col(j), &self.r) + self.data.col_sq_norms[j] * self.beta[j]
    }

    pub fn set(&mut self, j: usize, value: f64) {
        let d = value - self.beta[j];
        if d != 0.0 {
            for (ri, xi) in self.r.iter_mut().zip(self.data.col(j)) {
                *ri -= xi * d;
            }
            self.beta[j] = value;
        }
    }

    /// Recomputes the residual exactly.
    pub fn refresh(&mut self) {
        self.r = self.data.residual(&self.beta);
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn residual(&self) -> &[f64] {
        &self.r
    }

    pub fn into_beta(self) -> Vec<f64> {
        self.beta
    }
}

/// Lower bound `u = 2 {(C1/xtx) / (2 C2 + 2 s^a)}^(1/(2-a))` on the
/// selection threshold, `s = |z|/xtx`, `a = 2^-g`. No nonzero stationary
/// point exists when `s <= u`.
pub fn threshold_lower_bound(z_abs_scaled: f64, xtx: f64, c1: f64, c2: f64, gamma: u32) -> f64 {
    let a = alpha(gamma);
    let base = (c1 / xtx) / (2.0 * c2 + 2.0 * root(z_abs_scaled, gamma));
    2.0 * base.powf(1.0 / (2.0 - a))
}

/// `rho(beta) = s - (C1/xtx) / (beta + C2 beta^(1-a))`.
fn rho(beta: f64, s: f64, xtx: f64, c1: f64, c2: f64, gamma: u32) -> f64 {
    s - (c1 / xtx) / (beta + c2 * beta / root(beta, gamma))
}

/// Largest stationary point of the univariate section, by iterating `rho`
/// from `s = |z|/xtx`. The iterates decrease monotonically; `None` when one
/// turns non-positive or `max_iter` steps pass without
/// `|beta - rho(beta)| < eps`.
pub fn fixed_point_solve(
    z_abs_scaled: f64,
    xtx: f64,
    c1: f64,
    c2: f64,
    gamma: u32,
    eps: f64,
    max_iter: usize,
) -> Option<f64> {
    let mut beta = z_abs_scaled;
    for _ in 0..max_iter {
        let next = rho(beta, z_abs_scaled, xtx, c1, c2, gamma);
        if !(next > 0.0) {
            return None;
        }
        if (beta - next).abs() < eps {
            return Some(beta);
        }
        beta = next;
    }
    None
}

/// `delta = L_{-j}(beta) - L_{-j}(0)
///        = (xtx/2) beta^2 - |z| beta + kexp log(1 + beta^(2^-g) / C2)`.
pub fn descent_delta(beta_abs: f64, z_abs: f64, xtx: f64, c2: f64, gamma: u32, p: usize) -> f64 {
    delta(beta_abs, z_abs, xtx, c2, gamma, PenaltyConsts::new(gamma, p).kexp)
}

fn delta(beta_abs: f64, z_abs: f64, xtx: f64, c2: f64, gamma: u32, kexp: f64) -> f64 {
    let pen = if c2 > 0.0 { kexp * (root(beta_abs, gamma) / c2).ln_1p() } else { f64::INFINITY };
    0.5 * xtx * beta_abs * beta_abs - z_abs * beta_abs + pen
}

/// The T-map: minimizer of the loss in coordinate `j` given
/// `z = X_j^T(y - X_{-j} beta_{-j})`, `xtx = ||X_j||^2` and
/// `C2 = sum_{i != j} |beta_i|^(2^-g) + 1/b`. `incoming` is the current value,
/// used only to break exact ties.
pub fn t_map(z: f64, xtx: f64, c2: f64, incoming: f64, k: &PenaltyConsts, eps_inner: f64, max_iter: usize) -> f64 {
    if z == 0.0 || !(xtx > 0.0) || !(c2 > 0.0) {
        // c2 = 0: log(1 + beta^a / 0) makes every nonzero value infinitely worse
        return 0.0;
    }
    let s = z.abs() / xtx;
    if s <= threshold_lower_bound(s, xtx, k.c1, c2, k.gamma) {
        return 0.0;
    }
    let Some(cand) = fixed_point_solve(s, xtx, k.c1, c2, k.gamma, eps_inner, max_iter) else {
        return 0.0;
    };
    let d = delta(cand, z.abs(), xtx, c2, k.gamma, k.kexp);
    let keep = if d.abs() < TIE_TOL { incoming != 0.0 } else { d < 0.0 };
    if keep {
        cand.copysign(z)
    } else {
        0.0
    }
}

/// One T-map update of coordinate `j`, computed from scratch.
pub fn coordinate_update(data: &Dataset, beta: &[f64], j: usize, config: &CdConfig) -> f64 {
    let k = PenaltyConsts::new(config.gamma, data.p);
    let z = partial_residual_correlation(data, beta, j);
    let c2 = bridge_sum(beta, config.gamma) - root(beta[j], config.gamma) + 1.0 / config.b;
    t_map(z, data.col_sq_norms[j], c2, beta[j], &k, config.eps_inner, config.max_fixed_point)
}

/// `||y - X beta||^2 / 2 + kexp log(S + 1/b)`.
pub fn cd_loss(data: &Dataset, beta: &[f64], gamma: u32, b: f64) -> f64 {
    let k = PenaltyConsts::new(gamma, data.p);
    0.5 * data.rss(beta) + k.kexp * (bridge_sum(beta, gamma) + 1.0 / b).ln()
}

fn loss_from_parts(r: &[f64], s: f64, inv_b: f64, kexp: f64) -> f64 {
    0.5 * dot(r, r) + kexp * (s + inv_b).ln()
}

fn cd_core(data: &Dataset, config: &CdConfig, beta_init: &[f64], mut on_update: impl FnMut(f64)) -> Result<CdSolution> {
    config.validate()?;
    if beta_init.len() != data.p {
        return Err(Error::Config(format!("initial value has length {} but p = {}", beta_init.len(), data.p)));
    }
    let g = config.gamma;
    let k = PenaltyConsts::new(g, data.p);
    let inv_b = 1.0 / config.b;
    let mut state = PartialResiduals::new(data, beta_init.to_vec());
    let mut s = bridge_sum(beta_init, g);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut step_sq = 0.0;
        for j in 0..data.p {
            let old = state.beta()[j];
            let old_root = root(old, g);
            let c2 = (s - old_root).max(0.0) + inv_b;
            let new = t_map(state.z(j), data.col_sq_norms[j], c2, old, &k, config.eps_inner, config.max_fixed_point);
            if new != old {
                state.set(j, new);
                s += root(new, g) - old_root;
                step_sq += (new - old) * (new - old);
                on_update(loss_from_parts(state.residual(), s, inv_b, k.kexp));
            }
        }
        s = bridge_sum(state.beta(), g);
        if sweeps % REFRESH_SWEEPS == 0 {
            state.refresh();
        }
        if step_sq.sqrt() <= config.eps_outer {
            converged = true;
            break;
        }
    }
    state.refresh();
    let final_loss = loss_from_parts(state.residual(), s, inv_b, k.kexp);
    let rss = dot(state.residual(), state.residual());
    let beta_hat = state.into_beta();
    let s_hat = beta_hat.iter().filter(|b| **b != 0.0).count();
    let sigma2_hat = (data.n > s_hat).then(|| rss / (data.n - s_hat) as f64);
    Ok(CdSolution { beta_hat, s_hat, sigma2_hat, sweeps, converged, final_loss })
}

/// Gauss-Seidel sweeps in ascending coordinate order until the sweep step
/// `||beta^(i) - beta^(i-1)||_2 <= eps_outer` or `max_sweeps`.
pub fn run_cd(data: &Dataset, config: &CdConfig, beta_init: &[f64]) -> Result<CdSolution> {
    cd_core(data, config, beta_init, |_| {})
}

/// [`run_cd`] that also returns the loss after every coordinate change.
pub fn run_cd_traced(data: &Dataset, config: &CdConfig, beta_init: &[f64]) -> Result<(CdSolution, Vec<f64>)> {
    let mut losses = Vec::new();
    let sol = cd_core(data, config, beta_init, |l| losses.push(l))?;
    Ok((sol, losses))
}

/// Worst stationarity violations of a candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `max |beta_j| - rho(|beta_j|)` over nonzero coordinates.
    pub max_nonzero_residual: f64,
    /// Nonzero coordinates whose sign disagrees with `z_j`.
    pub sign_mismatches: Vec<usize>,
    /// Zero coordinates where a strictly better nonzero value exists.
    pub zero_violations: Vec<usize>,
}

impl KktReport {
    pub fn holds(&self, eps_inner: f64) -> bool {
        self.max_nonzero_residual < 10.0 * eps_inner
            && self.sign_mismatches.is_empty()
            && self.zero_violations.is_empty()
    }
}

/// Checks the coordinatewise optimality conditions at `beta`.
pub fn kkt_check(data: &Dataset, config: &CdConfig, beta: &[f64]) -> KktReport {
    let g = config.gamma;
    let k = PenaltyConsts::new(g, data.p);
    let r = data.residual(beta);
    let s = bridge_sum(beta, g);
    let mut report = KktReport { max_nonzero_residual: 0.0, sign_mismatches: Vec::new(), zero_violations: Vec::new() };
    for j in 0..data.p {
        let xtx = data.col_sq_norms[j];
        let z = dot(col(&data.x, j), &r) + xtx * beta[j];
        let c2 = (s - root(beta[j], g)).max(0.0) + 1.0 / config.b;
        if beta[j] != 0.0 {
            let a = beta[j].abs();
            let res = (a - rho(a, z.abs() / xtx, xtx, k.c1, c2, g)).abs();
            report.max_nonzero_residual = report.max_nonzero_residual.max(res);
            if z * beta[j] <= 0.0 {
                report.sign_mismatches.push(j);
            }
        } else if z != 0.0 && xtx > 0.0 && c2 > 0.0 {
            let sc = z.abs() / xtx;
            if sc <= threshold_lower_bound(sc, xtx, k.c1, c2, g) {
                continue;
            }
            let Some(cand) = fixed_point_solve(sc, xtx, k.c1, c2, g, config.eps_inner, config.max_fixed_point) else {
                continue;
            };
            if delta(cand, z.abs(), xtx, c2, g, k.kexp) < -TIE_TOL {
                report.zero_violations.push(j);
            }
        }
    }
    report
}

/// Empirical-Bayes estimate `b = 2^(g-1) p / sum_j |beta_j|^(2^-g)`.
pub fn eb_update_b(beta_hat: &[f64], gamma: u32, p: usize) -> Result<f64> {
    let s = bridge_sum(beta_hat, gamma);
    if !(s > 0.0) {
        return Err(Error::DegenerateEb);
    }
    Ok(0.5 * pow2(gamma) * p as f64 / s)
}

/// Alternation of [`run_cd`] and [`eb_update_b`].
#[derive(Debug, Clone, PartialEq)]
pub struct EbPath {
    /// `b` used in each round; the first entry is the starting value.
    pub b_values: Vec<f64>,
    pub solution: CdSolution,
    /// The estimate collapsed to zero, leaving `b` undefined.
    pub degenerate: bool,
}

/// Alternates CD (warm-started) and the EB update of `b` until `b` changes
/// by less than `rel_tol` relatively, `max_rounds` pass, or the estimate
/// collapses to zero.
pub fn iterate_eb(
    data: &Dataset,
    config: &CdConfig,
    beta_init: &[f64],
    max_rounds: usize,
    rel_tol: f64,
) -> Result<EbPath> {
    let mut b = config.b;
    let mut b_values = vec![b];
    let mut solution = run_cd(data, config, beta_init)?;
    for _ in 0..max_rounds {
        let next = match eb_update_b(&solution.beta_hat, config.gamma, data.p) {
            Ok(v) => v,
            Err(Error::DegenerateEb) => return Ok(EbPath { b_values, solution, degenerate: true }),
            Err(e) => return Err(e),
        };
        b_values.push(next);
        let done = ((next - b) / b).abs() < rel_tol;
        b = next;
        solution = run_cd(data, &config.with_b(b), &solution.beta_hat)?;
        if done {
            break;
        }
    }
    Ok(EbPath { b_values, solution, degenerate: false })
}
