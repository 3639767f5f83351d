//! Partially collapsed Gibbs (PCG) sampling for the linear model
//! `y = X beta + sigma eps` under the exponential-power prior, baseline
//! Bayesian-lasso and horseshoe Gibbs samplers, ESS diagnostics and
//! t-test selection from posterior draws.
//!
//! One PCG sweep, in order:
//!
//! 1. `beta | tau2, lam, sigma2` (Gaussian),
//! 2. `lam | beta` with `tau2` and `v` integrated out (gamma),
//! 3. `v_g, ..., v_1 | beta, lam` top-down (inverse Gaussian reciprocals),
//! 4. `tau2 | v_1, beta, lam` (inverse Gaussian reciprocal),
//! 5. `sigma2 | beta` (inverse gamma),
//! 6. `b | lam` (inverse gamma).
//!
//! Steps 2-4 together are one exact draw of `(lam, v, tau2) | beta`, which is
//! what makes the collapsed `lam` update valid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{dot, mat_t_vec, Dataset};
use crate::distributions::{
    sample_gamma, sample_inv_gamma, sample_inverse_gaussian, sample_mvn_augmented, sample_mvn_precision, RngStream,
};
use crate::prior::{bridge_sum, pow2, root};
use crate::{Error, Result};

/// Smallest `|beta_j|` fed into reciprocal-mean parameters.
const BETA_FLOOR: f64 = 1e-300;
const SCALE_MIN: f64 = 1e-300;
const SCALE_MAX: f64 = 1e300;

fn clamp_scale(v: f64) -> f64 {
    v.clamp(SCALE_MIN, SCALE_MAX)
}

/// Prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPrior {
    /// `pi(sigma2) ∝ 1/sigma2`.
    Jeffreys,
    /// `InvGamma(shape, scale)`; proper, needed by joint-distribution tests.
    InvGamma { shape: f64, scale: f64 },
}

/// Hyper-prior `lam | b ~ Gamma(lam_shape, rate 1/b)`,
/// `b ~ InvGamma(b_shape, b_scale)`. The default `(1/2, 1/2, 1)` gives the
/// updates `lam | beta ~ Gamma(2^g p + 1/2, S + 1/b)` and
/// `b | lam ~ InvGamma(1, 1 + lam)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub lam_shape: f64,
    pub b_shape: f64,
    pub b_scale: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { lam_shape: 0.5, b_shape: 0.5, b_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgConfig {
    pub gamma: u32,
    pub sigma_prior: SigmaPrior,
    pub hyper: Hyper,
    /// Permits `gamma = 2`, which is prone to underflow.
    pub experimental: bool,
    /// Also record `tau2` and `v` in the trace.
    pub retain_latents: bool,
}

impl PcgConfig {
    pub fn new(gamma: u32) -> Self {
        PcgConfig {
            gamma,
            sigma_prior: SigmaPrior::Jeffreys,
            hyper: Hyper::default(),
            experimental: false,
            retain_latents: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.gamma {
            0 | 1 => {}
            2 if self.experimental => {}
            2 => return Err(Error::Config("gamma = 2 requires the experimental flag".into())),
            g => return Err(Error::Config(format!("gamma = {g} is not supported by the sampler"))),
        }
        let h = self.hyper;
        if !(h.lam_shape > 0.0 && h.b_shape > 0.0 && h.b_scale > 0.0) {
            return Err(Error::Config("hyper-prior parameters must be positive".into()));
        }
        if let SigmaPrior::InvGamma { shape, scale } = self.sigma_prior {
            if !(shape > 0.0 && scale > 0.0) {
                return Err(Error::Config("inverse-gamma prior parameters must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Chain length, thinning and replication settings shared by all samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Total sweeps, burn-in included.
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burn_in {
            return Err(Error::Config(format!("iters ({}) must exceed burn_in ({})", self.iters, self.burn_in)));
        }
        if self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("thin and n_chains must be at least 1".into()));
        }
        if (self.iters - self.burn_in) % self.thin != 0 {
            return Err(Error::Config("iters - burn_in must be a multiple of thin".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in) / self.thin
    }
}

/// One configuration of the augmented parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    /// `v[i - 1][j]` is `v_{i,j}`, i = 1..gamma.
    pub v: Vec<Vec<f64>>,
    pub lam: f64,
    pub b: f64,
    pub sigma2: f64,
}

impl PcgState {
    /// `beta = 0`, unit scales, `sigma2 = var(y)`.
    pub fn initial(data: &Dataset, gamma: u32) -> Self {
        let n = data.n as f64;
        let m = data.y.iter().sum::<f64>() / n;
        let var = data.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        PcgState {
            beta: vec![0.0; data.p],
            tau2: vec![1.0; data.p],
            v: vec![vec![1.0; data.p]; gamma as usize],
            lam: 1.0,
            b: 1.0,
            sigma2: if var > 0.0 { var } else { 1.0 },
        }
    }
}

/// Draws `beta ~ N(A^{-1} X^T y, sigma2 A^{-1})`, `A = X^T X + sigma2 diag(1/prior_var)`:
/// Cholesky of `A` when `p <= n`, the `n x n` augmentation otherwise.
pub(crate) struct GaussianStep<'a> {
    data: &'a Dataset,
    xtx: Option<Mat<f64>>,
    xty: Vec<f64>,
}

impl<'a> GaussianStep<'a> {
    pub(crate) fn new(data: &'a Dataset) -> Self {
        let xtx = (data.p <= data.n).then(|| {
            let mut m = Mat::<f64>::zeros(data.p, data.p);
            matmul(m.as_mut(), Accum::Replace, data.x.transpose(), data.x.as_ref(), 1.0, Par::Seq);
            m
        });
        let xty = mat_t_vec(&data.x, &data.y);
        GaussianStep { data, xtx, xty }
    }

    /// `ln_prior_var[j] = log` of the prior variance of `beta_j`.
    pub(crate) fn draw(&self, ln_prior_var: &[f64], sigma2: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
        match &self.xtx {
            Some(xtx) => {
                // sigma2 / prior_var, formed in log space
                let d_inv: Vec<f64> = ln_prior_var.iter().map(|lv| (-lv).exp().min(SCALE_MAX)).collect();
                sample_mvn_precision(xtx, &d_inv, sigma2, &self.xty, sigma2, rng)
            }
            None => {
                let sd = sigma2.sqrt();
                let row_scale = vec![1.0 / sd; self.data.n];
                let alpha: Vec<f64> = self.data.y.iter().map(|v| v / sd).collect();
                let prior_var: Vec<f64> = ln_prior_var.iter().map(|lv| lv.exp().min(SCALE_MAX)).collect();
                sample_mvn_augmented(&self.data.x, &row_scale, &alpha, &prior_var, rng)
            }
        }
    }
}

/// `1 / IG(exp(ln_mu), exp(ln_shape))`, clamped to the scale range.
fn recip_inverse_gaussian(ln_mu: f64, ln_shape: f64, rng: &mut RngStream) -> Result<f64> {
    let mu = ln_mu.exp().max(f64::MIN_POSITIVE);
    let shape = ln_shape.exp().clamp(f64::MIN_POSITIVE, f64::MAX);
    Ok(clamp_scale(1.0 / sample_inverse_gaussian(mu, shape, rng)?))
}

/// The PCG transition kernel for a fixed dataset.
pub struct PcgSampler<'a> {
    data: &'a Dataset,
    config: PcgConfig,
    gauss: GaussianStep<'a>,
}

impl<'a> PcgSampler<'a> {
    pub fn new(data: &'a Dataset, config: PcgConfig) -> Result<Self> {
        config.validate()?;
        Ok(PcgSampler { data, config, gauss: GaussianStep::new(data) })
    }

    pub fn config(&self) -> &PcgConfig {
        &self.config
    }

    /// `beta | tau2, lam, sigma2` with prior variance `tau2 / lam^(2^(g+1))`.
    pub fn draw_beta(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        let lv = ln_prior_var(state, self.config.gamma);
        state.beta = self.gauss.draw(&lv, state.sigma2, rng)?;
        Ok(())
    }

    /// `lam | beta ~ Gamma(2^g p + lam_shape, sum |beta_j|^(2^-g) + 1/b)`.
    pub fn draw_lambda(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        draw_lambda(state, self.config.gamma, self.config.hyper, rng)
    }

    /// Top-down: `1/v_g ~ IG(1/(2 lam |beta|^(2^-g)), 1/2)`, then for
    /// `i = g-1, ..., 1`:
    /// `1/v_i ~ IG(1/(2 v_{i+1} lam^(2^(g-i)) |beta|^(2^-i)), 1/(2 v_{i+1}^2))`.
    pub fn draw_v(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        draw_v(state, self.config.gamma, rng)
    }

    /// `1/tau2 ~ IG(1/(lam^(2^g) v_1 |beta|), 1/v_1^2)`; for `gamma = 0`,
    /// `IG(1/(lam |beta|), 1)`.
    pub fn draw_tau2(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        draw_tau2(state, self.config.gamma, rng)
    }

    pub fn draw_sigma2(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        state.sigma2 = draw_sigma2(self.data, &state.beta, self.config.sigma_prior, rng)?;
        Ok(())
    }

    /// `b | lam ~ InvGamma(b_shape + lam_shape, b_scale + lam)`.
    pub fn draw_b(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        draw_b(state, self.config.hyper, rng)
    }

    pub fn step(&self, state: &mut PcgState, rng: &mut RngStream) -> Result<()> {
        self.draw_beta(state, rng)?;
        self.draw_lambda(state, rng)?;
        self.draw_v(state, rng)?;
        self.draw_tau2(state, rng)?;
        self.draw_sigma2(state, rng)?;
        self.draw_b(state, rng)
    }
}

/// Log prior variance `ln tau2_j - 2^(g+1) ln lam` of each `beta_j`.
pub(crate) fn ln_prior_var(state: &PcgState, gamma: u32) -> Vec<f64> {
    let e = pow2(gamma + 1) * state.lam.ln();
    state.tau2.iter().map(|t| t.ln() - e).collect()
}

pub(crate) fn draw_lambda(state: &mut PcgState, gamma: u32, hyper: Hyper, rng: &mut RngStream) -> Result<()> {
    let shape = pow2(gamma) * state.beta.len() as f64 + hyper.lam_shape;
    state.lam = clamp_scale(sample_gamma(shape, bridge_sum(&state.beta, gamma) + 1.0 / state.b, rng)?);
    Ok(())
}

pub(crate) fn draw_v(state: &mut PcgState, gamma: u32, rng: &mut RngStream) -> Result<()> {
    let g = gamma;
    if g == 0 {
        return Ok(());
    }
    let ln_lam = state.lam.ln();
    let ln2 = std::f64::consts::LN_2;
    for j in 0..state.beta.len() {
        let a = state.beta[j].abs().max(BETA_FLOOR);
        let top = g as usize - 1;
        state.v[top][j] = recip_inverse_gaussian(-ln2 - ln_lam - root(a, g).ln(), -ln2, rng)?;
        for i in (1..g).rev() {
            let ln_up = state.v[i as usize][j].ln();
            let ln_mu = -ln2 - ln_up - pow2(g - i) * ln_lam - root(a, i).ln();
            let ln_shape = -ln2 - 2.0 * ln_up;
            state.v[i as usize - 1][j] = recip_inverse_gaussian(ln_mu, ln_shape, rng)?;
        }
    }
    Ok(())
}

pub(crate) fn draw_tau2(state: &mut PcgState, gamma: u32, rng: &mut RngStream) -> Result<()> {
    let ln_lam = state.lam.ln();
    for j in 0..state.beta.len() {
        let ln_a = state.beta[j].abs().max(BETA_FLOOR).ln();
        let ln_v1 = if gamma == 0 { 0.0 } else { state.v[0][j].ln() };
        let ln_mu = -pow2(gamma) * ln_lam - ln_v1 - ln_a;
        state.tau2[j] = recip_inverse_gaussian(ln_mu, -2.0 * ln_v1, rng)?;
    }
    Ok(())
}

pub(crate) fn draw_b(state: &mut PcgState, hyper: Hyper, rng: &mut RngStream) -> Result<()> {
    state.b = clamp_scale(sample_inv_gamma(hyper.b_shape + hyper.lam_shape, hyper.b_scale + state.lam, rng)?);
    Ok(())
}

fn draw_sigma2(data: &Dataset, beta: &[f64], prior: SigmaPrior, rng: &mut RngStream) -> Result<f64> {
    let rss = data.rss(beta);
    let (a0, b0) = match prior {
        SigmaPrior::Jeffreys => (0.0, 0.0),
        SigmaPrior::InvGamma { shape, scale } => (shape, scale),
    };
    Ok(clamp_scale(sample_inv_gamma(0.5 * data.n as f64 + a0, 0.5 * rss + b0, rng)?))
}

/// One PCG sweep; builds the kernel on each call, so prefer [`PcgSampler`]
/// in loops.
pub fn pcg_step(state: &mut PcgState, data: &Dataset, config: &PcgConfig, rng: &mut RngStream) -> Result<()> {
    PcgSampler::new(data, *config)?.step(state, rng)
}

/// Retained draws of one chain, row-major with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    /// `n_draws * names.len()` values, one row per retained sweep.
    pub values: Vec<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub chain_id: u64,
    /// Seconds spent sampling.
    pub wall_time: f64,
}

impl Trace {
    fn with_names(names: Vec<String>, run: &RunConfig, chain_id: u64) -> Self {
        let cap = run.retained() * names.len();
        Trace { names, values: Vec::with_capacity(cap), burn_in: run.burn_in, thin: run.thin, chain_id, wall_time: 0.0 }
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.values.len() / self.names.len()
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.n_cols()).copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|k| self.column(k))
    }

    /// Draws of `beta_j` (0-based `j`).
    pub fn beta(&self, j: usize) -> Vec<f64> {
        self.column_by_name(&format!("beta_{}", j + 1)).expect("trace holds beta columns")
    }

    /// Number of `beta_*` columns.
    pub fn p(&self) -> usize {
        self.names.iter().filter(|n| n.starts_with("beta_")).count()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_cols()..(t + 1) * self.n_cols()]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for t in 0..self.n_draws() {
            w.write_record(self.row(t).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Trace::write_csv`]; metadata is not stored in
    /// CSV and comes back as zero.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Parse { line: i + 2, msg: format!("expected {} fields", names.len()) });
            }
            for f in rec.iter() {
                values.push(f.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?);
            }
        }
        Ok(Trace { names, values, burn_in: 0, thin: 1, chain_id: 0, wall_time: 0.0 })
    }

    /// Binary layout, little-endian: magic `EPTR`, `u32` version 1, `u64`
    /// rows, cols, burn_in, thin, chain_id, `f64` wall time, per column a
    /// `u32` name length and UTF-8 bytes, then the values column by column.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [self.n_draws(), self.n_cols(), self.burn_in, self.thin] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.chain_id.to_le_bytes())?;
        w.write_all(&self.wall_time.to_le_bytes())?;
        for name in &self.names {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        for k in 0..self.n_cols() {
            for v in self.column(k) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |msg: &str| Error::Parse { line: 0, msg: msg.to_owned() };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(bad("not a trace file"));
        }
        if read_u32(&mut r)? != 1 {
            return Err(bad("unsupported trace version"));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let burn_in = read_u64(&mut r)? as usize;
        let thin = read_u64(&mut r)? as usize;
        let chain_id = read_u64(&mut r)?;
        let wall_time = f64::from_bits(read_u64(&mut r)?);
        let mut names = Vec::with_capacity(cols);
        for _ in 0..cols {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|_| bad("column name is not UTF-8"))?);
        }
        let mut values = vec![0.0; rows * cols];
        for k in 0..cols {
            for t in 0..rows {
                values[t * cols + k] = f64::from_bits(read_u64(&mut r)?);
            }
        }
        Ok(Trace { names, values, burn_in, thin, chain_id, wall_time })
    }
}

const BINARY_MAGIC: &[u8; 4] = b"EPTR";

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn beta_names(p: usize) -> impl Iterator<Item = String> {
    (1..=p).map(|j| format!("beta_{j}"))
}

/// Runs a chain: `step` is called `run.iters` times, `record` after each
/// retained sweep. Errors carry the 1-based sweep index.
pub(crate) fn run_chain<S>(
    run: &RunConfig,
    chain: usize,
    names: Vec<String>,
    mut state: S,
    mut step: impl FnMut(&mut S, &mut RngStream) -> Result<()>,
    record: impl Fn(&S, &mut Vec<f64>),
) -> Result<Trace> {
    let start = Instant::now();
    let mut rng = RngStream::new(run.seed, chain as u64);
    let mut trace = Trace::with_names(names, run, chain as u64);
    for it in 1..=run.iters {
        step(&mut state, &mut rng).map_err(|e| Error::AtIteration { iter: it, source: Box::new(e) })?;
        if it > run.burn_in && (it - run.burn_in) % run.thin == 0 {
            record(&state, &mut trace.values);
        }
    }
    trace.wall_time = start.elapsed().as_secs_f64();
    Ok(trace)
}

/// Independent PCG chains, chain `c` on stream `c` of `run.seed`, run in
/// parallel. Retains `beta`, `sigma2`, `lambda` (and the latents when
/// requested).
pub fn run_pcg(data: &Dataset, config: &PcgConfig, run: &RunConfig) -> Result<Vec<Trace>> {
    run.validate()?;
    let sampler = PcgSampler::new(data, *config)?;
    let p = data.p;
    let g = config.gamma as usize;
    let mut names: Vec<String> = beta_names(p).collect();
    names.push("sigma2".into());
    names.push("lambda".into());
    if config.retain_latents {
        names.extend((1..=p).map(|j| format!("tau2_{j}")));
        for i in 1..=g {
            names.extend((1..=p).map(|j| format!("v{i}_{j}")));
        }
    }
    let retain = config.retain_latents;
    (0..run.n_chains)
        .into_par_iter()
        .map(|c| {
            run_chain(
                run,
                c,
                names.clone(),
                PcgState::initial(data, config.gamma),
                |s, rng| sampler.step(s, rng),
                |s, out| {
                    out.extend_from_slice(&s.beta);
                    out.push(s.sigma2);
                    out.push(s.lam);
                    if retain {
                        out.extend_from_slice(&s.tau2);
                        for layer in &s.v {
                            out.extend_from_slice(layer);
                        }
                    }
                },
            )
        })
        .collect()
}

/// Comparison samplers targeting standard shrinkage priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// `beta_j ~ N(0, s_j)`, `s_j ~ Exp(lam^2/2)` (Laplace with rate `lam`),
    /// `lam | b ~ Gamma(1/2, 1/b)`, `b ~ InvGamma(1/2, 1)`: the same model as
    /// PCG with `gamma = 0`. `fixed_lambda` pins `lam`.
    BayesLasso { fixed_lambda: Option<f64> },
    /// `beta_j ~ N(0, lam_j^2 tau^2 sigma2)` with half-Cauchy `lam_j`, `tau`,
    /// using inverse-gamma auxiliaries; `p(sigma2) ∝ 1/sigma2`.
    Horseshoe,
}

#[derive(Debug, Clone)]
struct LassoState {
    beta: Vec<f64>,
    s: Vec<f64>,
    lam: f64,
    b: f64,
    sigma2: f64,
}

#[derive(Debug, Clone)]
struct HorseshoeState {
    beta: Vec<f64>,
    local2: Vec<f64>,
    nu: Vec<f64>,
    tau2: f64,
    xi: f64,
    sigma2: f64,
}

/// Exact draw from `f(lam) ∝ lam^(a-1) exp(-c lam^2 - d lam)` on `lam > 0`
/// (`a > 1`, `c > 0`, `d >= 0`), by rejection from `Gamma(a, d + 2 c m)` at
/// the mode `m`; the acceptance probability is `exp(-c (lam - m)^2)`.
pub fn sample_gamma_gaussian_tilt(a: f64, c: f64, d: f64, rng: &mut RngStream) -> Result<f64> {
    if !(a > 1.0 && c > 0.0 && d >= 0.0) {
        return Err(Error::Domain(format!("tilted gamma needs a > 1, c > 0, d >= 0; got ({a}, {c}, {d})")));
    }
    let m = (-d + (d * d + 8.0 * c * (a - 1.0)).sqrt()) / (4.0 * c);
    let rate = d + 2.0 * c * m;
    loop {
        let x = sample_gamma(a, rate, rng)?;
        if rng.uniform() <= (-c * (x - m) * (x - m)).exp() {
            return Ok(x);
        }
    }
}

fn initial_sigma2(data: &Dataset) -> f64 {
    PcgState::initial(data, 0).sigma2
}

/// Independent baseline Gibbs chains, parallel over chains with one stream
/// each. Columns: `beta_*`, `sigma2`, then `lambda` (lasso) or `tau2`
/// (horseshoe).
pub fn run_baseline_gibbs(data: &Dataset, which: Baseline, run: &RunConfig) -> Result<Vec<Trace>> {
    run.validate()?;
    let gauss = GaussianStep::new(data);
    let p = data.p;
    let mut names: Vec<String> = beta_names(p).collect();
    names.push("sigma2".into());
    match which {
        Baseline::BayesLasso { fixed_lambda } => {
            if let Some(l) = fixed_lambda {
                if !(l > 0.0) {
                    return Err(Error::Config(format!("fixed lambda must be positive, got {l}")));
                }
            }
            names.push("lambda".into());
            (0..run.n_chains)
                .into_par_iter()
                .map(|c| {
                    let init = LassoState {
                        beta: vec![0.0; p],
                        s: vec![1.0; p],
                        lam: fixed_lambda.unwrap_or(1.0),
                        b: 1.0,
                        sigma2: initial_sigma2(data),
                    };
                    run_chain(
                        run,
                        c,
                        names.clone(),
                        init,
                        |s, rng| lasso_step(data, &gauss, fixed_lambda, s, rng),
                        |s, out| {
                            out.extend_from_slice(&s.beta);
                            out.push(s.sigma2);
                            out.push(s.lam);
                        },
                    )
                })
                .collect()
        }
        Baseline::Horseshoe => {
            names.push("tau2".into());
            (0..run.n_chains)
                .into_par_iter()
                .map(|c| {
                    let init = HorseshoeState {
                        beta: vec![0.0; p],
                        local2: vec![1.0; p],
                        nu: vec![1.0; p],
                        tau2: 1.0,
                        xi: 1.0,
                        sigma2: initial_sigma2(data),
                    };
                    run_chain(
                        run,
                        c,
                        names.clone(),
                        init,
                        |s, rng| horseshoe_step(data, &gauss, s, rng),
                        |s, out| {
                            out.extend_from_slice(&s.beta);
                            out.push(s.sigma2);
                            out.push(s.tau2);
                        },
                    )
                })
                .collect()
        }
    }
}

fn lasso_step(
    data: &Dataset,
    gauss: &GaussianStep<'_>,
    fixed_lambda: Option<f64>,
    s: &mut LassoState,
    rng: &mut RngStream,
) -> Result<()> {
    let lv: Vec<f64> = s.s.iter().map(|v| v.ln()).collect();
    s.beta = gauss.draw(&lv, s.sigma2, rng)?;
    // 1/s_j ~ IG(lam/|beta_j|, lam^2)
    let ln_lam = s.lam.ln();
    for j in 0..data.p {
        let ln_a = s.beta[j].abs().max(BETA_FLOOR).ln();
        s.s[j] = recip_inverse_gaussian(ln_lam - ln_a, 2.0 * ln_lam, rng)?;
    }
    if fixed_lambda.is_none() {
        let sum_s: f64 = s.s.iter().sum();
        let a = 2.0 * data.p as f64 + 0.5;
        s.lam = clamp_scale(sample_gamma_gaussian_tilt(a, 0.5 * sum_s, 1.0 / s.b, rng)?);
        s.b = clamp_scale(sample_inv_gamma(1.0, 1.0 + s.lam, rng)?);
    }
    s.sigma2 = draw_sigma2(data, &s.beta, SigmaPrior::Jeffreys, rng)?;
    Ok(())
}

fn horseshoe_step(data: &Dataset, gauss: &GaussianStep<'_>, s: &mut HorseshoeState, rng: &mut RngStream) -> Result<()> {
    let ln_scale = s.tau2.ln() + s.sigma2.ln();
    let lv: Vec<f64> = s.local2.iter().map(|l| l.ln() + ln_scale).collect();
    s.beta = gauss.draw(&lv, s.sigma2, rng)?;
    // sum_j beta_j^2 / lam_j^2
    let ratio: f64 = s.beta.iter().zip(&s.local2).map(|(b, l)| b * b / l).sum();
    let shape = 0.5 * (data.n + data.p) as f64;
    s.sigma2 = clamp_scale(sample_inv_gamma(shape, 0.5 * data.rss(&s.beta) + 0.5 * ratio / s.tau2, rng)?);
    let scale2 = 2.0 * s.tau2 * s.sigma2;
    for j in 0..data.p {
        let bj2 = s.beta[j] * s.beta[j];
        s.local2[j] = clamp_scale(sample_inv_gamma(1.0, 1.0 / s.nu[j] + bj2 / scale2, rng)?);
    }
    let ratio: f64 = s.beta.iter().zip(&s.local2).map(|(b, l)| b * b / l).sum();
    let rate = 1.0 / s.xi + 0.5 * ratio / s.sigma2;
    s.tau2 = clamp_scale(sample_inv_gamma(0.5 * (data.p as f64 + 1.0), rate, rng)?);
    for j in 0..data.p {
        s.nu[j] = clamp_scale(sample_inv_gamma(1.0, 1.0 + 1.0 / s.local2[j], rng)?);
    }
    s.xi = clamp_scale(sample_inv_gamma(1.0, 1.0 + 1.0 / s.tau2, rng)?);
    Ok(())
}

/// Multi-chain ESS with a flag set when some chain has zero variance (the
/// ESS is then reported as the total draw count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    pub degenerate: bool,
}

/// Split-chain ESS: every chain is halved, the autocorrelation at lag `t` is
/// `1 - (W - mean_c acov_c(t)) / var+`, and the sum is truncated by Geyer's
/// initial monotone sequence over lag pairs.
pub fn ess_of_chains(chains: &[Vec<f64>]) -> Result<Ess> {
    if chains.is_empty() {
        return Err(Error::Config("ESS needs at least one chain".into()));
    }
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < 4 {
        return Err(Error::Config("ESS needs at least four draws per chain".into()));
    }
    let total = (len * chains.len()) as f64;
    let half = len / 2;
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        parts.push(&c[..half]);
        parts.push(&c[len - half..len]);
    }
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|x| x.iter().sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = parts.iter().zip(&means).map(|(x, mu)| x.iter().map(|v| v - mu).collect()).collect();
    let acov = |t: usize| -> f64 { centered.iter().map(|x| dot(&x[..half - t], &x[t..]) / n).sum::<f64>() / m };
    let acov0 = acov(0);
    let degenerate = chains.iter().any(|c| {
        let mu = c[..len].iter().sum::<f64>() / len as f64;
        c[..len].iter().all(|v| *v == mu)
    });
    if degenerate || !(acov0 > 0.0) {
        return Ok(Ess { value: total, degenerate: true });
    }
    let w = acov0 * n / (n - 1.0);
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n =
        if parts.len() > 1 { means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    let var_plus = (n - 1.0) / n * w + b_over_n;
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < half {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        k += 1;
    }
    // the floor caps ESS at total * log10(total) for antithetic chains
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * n).log10().max(1.0));
    Ok(Ess { value: m * n / tau, degenerate: false })
}

/// ESS of column `coord` across traces.
pub fn ess(traces: &[Trace], coord: usize) -> Result<Ess> {
    let chains: Vec<Vec<f64>> = traces.iter().map(|t| t.column(coord)).collect();
    ess_of_chains(&chains)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssSummary {
    pub max: f64,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
}

impl EssSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        let mean = v.iter().sum::<f64>() / k as f64;
        let sd =
            if k > 1 { (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64).sqrt() } else { 0.0 };
        Some(EssSummary { max: v[k - 1], min: v[0], median, mean, sd })
    }
}

/// ESS summaries of the `beta` coordinates, split by the truth when given.
#[derive(Debug, Clone, PartialEq)]
pub struct EssReport {
    pub per_coord: Vec<f64>,
    pub all: EssSummary,
    pub zero: Option<EssSummary>,
    pub nonzero: Option<EssSummary>,
    pub any_degenerate: bool,
}

pub fn ess_report(traces: &[Trace], truth: Option<&[f64]>) -> Result<EssReport> {
    let first = traces.first().ok_or_else(|| Error::Config("no traces".into()))?;
    let p = first.p();
    let mut per_coord = Vec::with_capacity(p);
    let mut any_degenerate = false;
    for j in 0..p {
        let chains: Vec<Vec<f64>> = traces.iter().map(|t| t.beta(j)).collect();
        let e = ess_of_chains(&chains)?;
        any_degenerate |= e.degenerate;
        per_coord.push(e.value);
    }
    let all = EssSummary::of(&per_coord).ok_or_else(|| Error::Config("no beta columns".into()))?;
    let (zero, nonzero) = match truth {
        Some(t) => {
            let z: Vec<f64> = (0..p).filter(|&j| t[j] == 0.0).map(|j| per_coord[j]).collect();
            let nz: Vec<f64> = (0..p).filter(|&j| t[j] != 0.0).map(|j| per_coord[j]).collect();
            (EssSummary::of(&z), EssSummary::of(&nz))
        }
        None => (None, None),
    };
    Ok(EssReport { per_coord, all, zero, nonzero, any_degenerate })
}

/// Posterior mean and sd of every `beta_j`, pooling chains.
pub fn posterior_beta_moments(traces: &[Trace]) -> (Vec<f64>, Vec<f64>) {
    let p = traces.first().map_or(0, Trace::p);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let draws: Vec<f64> = traces.iter().flat_map(|t| t.beta(j)).collect();
        let k = draws.len() as f64;
        let m = draws.iter().sum::<f64>() / k;
        let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0).max(1.0);
        means.push(m);
        sds.push(v.sqrt());
    }
    (means, sds)
}

/// Posterior mean of a named scalar column, pooling chains.
pub fn posterior_mean(traces: &[Trace], name: &str) -> Option<f64> {
    let mut sum = 0.0;
    let mut k = 0usize;
    for t in traces {
        let c = t.column_by_name(name)?;
        sum += c.iter().sum::<f64>();
        k += c.len();
    }
    (k > 0).then(|| sum / k as f64)
}

/// Selects `j` when `|mean_j| / sd_j` exceeds the two-sided normal quantile
/// at `level`; with `sd_j = 0`, when `mean_j != 0`.
pub fn select_by_t_test(traces: &[Trace], level: f64) -> Result<Vec<bool>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
    let (means, sds) = posterior_beta_moments(traces);
    Ok(means.iter().zip(&sds).map(|(m, s)| if *s > 0.0 { m.abs() / s > z } else { *m != 0.0 }).collect())
}
