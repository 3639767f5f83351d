//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use epbridge::prior::{ep_log_density, EpPriorSpec};

/// Two-sided Kolmogorov–Smirnov distance between a sample and a CDF given at
/// the sorted sample points.
pub fn ks_against(sorted: &[f64], cdf_at: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &f) in cdf_at.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-12).integral
}

/// CDF of the exponential-power prior obtained by numerically integrating
/// `exp(ep_log_density)`, evaluated at every point of `sorted` (ascending).
///
/// Mass on `[0, x]` is accumulated over consecutive gaps of the sorted
/// absolute values; each gap is integrated in `u = |beta|^alpha`, which
/// removes the cusp at zero and the heavy tail.
pub fn ep_quadrature_cdf(sorted: &[f64], spec: &EpPriorSpec) -> Vec<f64> {
    let a = spec.alpha();
    let dens = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let beta = u.powf(1.0 / a);
        ep_log_density(beta, spec).exp() * beta / (a * u)
    };
    let mut idx: Vec<usize> = (0..sorted.len()).collect();
    idx.sort_by(|&i, &j| sorted[i].abs().partial_cmp(&sorted[j].abs()).unwrap());
    let mut half = vec![0.0; sorted.len()];
    let (mut acc, mut prev) = (0.0, 0.0);
    for &i in &idx {
        let u = sorted[i].abs().powf(a);
        if u > prev {
            acc += integrate(dens, prev, u);
            prev = u;
        }
        half[i] = acc;
    }
    sorted.iter().zip(half).map(|(x, m)| if *x >= 0.0 { 0.5 + m } else { 0.5 - m }).collect()
}

/// Minimizer of `psi(b) = b + (c1/xtx) / (b + c2 b^(1-alpha))`, the root of
/// `psi' = 0`, by bisection in log space. `None` when `psi` is increasing on
/// the whole half-line (possible only for alpha = 1).
pub fn beta_tilde(xtx: f64, c1: f64, c2: f64, gamma: u32) -> Option<f64> {
    let a = 0.5f64.powi(gamma as i32);
    let k = c1 / xtx;
    let dpsi = |b: f64| {
        let den = b + c2 * b.powf(1.0 - a);
        1.0 - k * (1.0 + c2 * (1.0 - a) * b.powf(-a)) / (den * den)
    };
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    if dpsi(lo) >= 0.0 {
        return None;
    }
    while dpsi(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..3000 {
        let mid = (lo * hi).sqrt();
        let mid = if mid <= lo || mid >= hi { 0.5 * (lo + hi) } else { mid };
        if dpsi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn psi(b: f64, xtx: f64, c1: f64, c2: f64, gamma: u32) -> f64 {
    let a = 0.5f64.powi(gamma as i32);
    b + c1 / (xtx * (b + c2 * b.powf(1.0 - a)))
}

/// Largest root of `psi(b) = s` on `[lo, s]` by bisection (psi is increasing
/// right of its minimizer `lo`).
pub fn psi_root_above(s: f64, lo: f64, xtx: f64, c1: f64, c2: f64, gamma: u32) -> f64 {
    let (mut a, mut b) = (lo, s);
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if psi(m, xtx, c1, c2, gamma) < s {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Monte Carlo standard error of the mean of an autocorrelated series,
/// by non-overlapping batch means with `batches` batches.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let len = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|k| xs[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64).collect();
    mean_sd(&means).1 / (batches as f64).sqrt()
}

/// Standardized Gaussian design (`||X_j||^2 = n`), `y = X beta0 + sigma eps`
/// centered. Rows are independent N(0, I).
pub fn gaussian_dataset(n: usize, p: usize, beta0: &[f64], sigma: f64, seed: u64) -> epbridge::Dataset {
    let mut rng = epbridge::RngStream::new(seed, 0);
    let raw = epbridge::Mat::from_fn(n, p, |_, _| rng.normal());
    let xs = epbridge::Dataset::standardize(raw, vec![0.0; n]).unwrap().x;
    let mut y: Vec<f64> =
        (0..n).map(|i| (0..p).map(|j| xs[(i, j)] * beta0[j]).sum::<f64>() + sigma * rng.normal()).collect();
    let m = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= m);
    let mut d = epbridge::Dataset::new(xs, y).unwrap();
    d.standardized = true;
    d
}

/// One row of a joint-distribution comparison.
#[derive(Debug, Clone)]
pub struct GewekeRow {
    pub name: String,
    pub marginal: (f64, f64),
    pub successive: (f64, f64),
}

impl GewekeRow {
    /// `|difference|` in units of the combined standard error.
    pub fn z(&self) -> f64 {
        (self.marginal.0 - self.successive.0).abs() / self.marginal.1.hypot(self.successive.1)
    }
}

/// Bounded or log transforms whose moments exist under the heavy-tailed
/// hyper-prior: `atan(beta_j)`, `log sigma2`, `log lam`, and their squares.
fn geweke_stats(beta: &[f64], sigma2: f64, lam: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for b in beta {
        let a = b.atan();
        out.push(a);
        out.push(a * a);
    }
    let (ls, ll) = (sigma2.ln(), lam.ln());
    out.extend([ls, ls * ls, ll, ll * ll]);
    out
}

fn geweke_names(p: usize) -> Vec<String> {
    let mut v = Vec::new();
    for j in 1..=p {
        v.push(format!("atan(beta_{j})"));
        v.push(format!("atan(beta_{j})^2"));
    }
    v.extend(["log sigma2", "(log sigma2)^2", "log lam", "(log lam)^2"].map(String::from));
    v
}

/// Draws the full augmented parameter from the prior:
/// `b ~ IG(b_shape, b_scale)`, `lam ~ Gamma(lam_shape, 1/b)`, the mixture for
/// `(v, tau2, beta)`, `sigma2 ~ IG(a0, b0)`.
fn prior_state(
    gamma: u32,
    p: usize,
    h: epbridge::pcg::Hyper,
    a0: f64,
    b0: f64,
    rng: &mut epbridge::RngStream,
) -> epbridge::PcgState {
    use epbridge::distributions::{sample_gamma, sample_inv_gamma};
    use epbridge::prior::{sample_ep_mixture, EpPriorSpec};
    let b = sample_inv_gamma(h.b_shape, h.b_scale, rng).unwrap();
    let lam = sample_gamma(h.lam_shape, 1.0 / b, rng).unwrap();
    let spec = EpPriorSpec::new(gamma, lam).unwrap();
    let mut beta = vec![0.0; p];
    let mut tau2 = vec![0.0; p];
    let mut v = vec![vec![0.0; p]; gamma as usize];
    for j in 0..p {
        let d = sample_ep_mixture(&spec, rng).unwrap();
        beta[j] = d.beta;
        tau2[j] = d.tau2;
        for i in 0..gamma as usize {
            v[i][j] = d.v[i];
        }
    }
    let sigma2 = sample_inv_gamma(a0, b0, rng).unwrap();
    epbridge::PcgState { beta, tau2, v, lam, b, sigma2 }
}

fn simulate_y(x: &epbridge::Mat<f64>, beta: &[f64], sigma2: f64, rng: &mut epbridge::RngStream) -> Vec<f64> {
    let sd = sigma2.sqrt();
    (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + sd * rng.normal()).collect()
}

/// Joint-distribution ("getting it right") test of the PCG kernel: prior
/// moments from independent draws versus moments along the chain that
/// alternates a PCG sweep with a fresh `y | theta`.
///
/// The default hyper-prior spreads `log lam` over several units, and the
/// successive chain then crawls between scale regimes; a concentrated proper
/// hyper-prior centred at `lam0` keeps it mixing while every update still
/// runs.
pub fn geweke(gamma: u32, n: usize, p: usize, sweeps: usize, lam0: f64, seed: u64) -> Vec<GewekeRow> {
    use epbridge::pcg::{Hyper, PcgSampler, SigmaPrior};
    let (a0, b0) = (3.0, 2.0);
    let hyper = Hyper { lam_shape: 30.0, b_shape: 30.0, b_scale: 29.0 * lam0 / 30.0 };
    let config = epbridge::PcgConfig {
        sigma_prior: SigmaPrior::InvGamma { shape: a0, scale: b0 },
        hyper,
        experimental: true,
        ..epbridge::PcgConfig::new(gamma)
    };
    let mut rng = epbridge::RngStream::new(seed, 0);
    let x = {
        let raw = epbridge::Mat::from_fn(n, p, |_, _| rng.normal());
        epbridge::Dataset::standardize(raw, vec![0.0; n]).unwrap().x
    };
    let names = geweke_names(p);
    let k = names.len();

    let mut marg = vec![Vec::with_capacity(sweeps); k];
    let mut mrng = epbridge::RngStream::new(seed, 1);
    for _ in 0..sweeps {
        let s = prior_state(gamma, p, hyper, a0, b0, &mut mrng);
        for (col, v) in marg.iter_mut().zip(geweke_stats(&s.beta, s.sigma2, s.lam)) {
            col.push(v);
        }
    }

    let mut succ = vec![Vec::with_capacity(sweeps); k];
    let mut srng = epbridge::RngStream::new(seed, 2);
    let mut state = prior_state(gamma, p, hyper, a0, b0, &mut srng);
    let mut y = simulate_y(&x, &state.beta, state.sigma2, &mut srng);
    for _ in 0..sweeps {
        let data = epbridge::Dataset::new(x.clone(), y).unwrap();
        PcgSampler::new(&data, config).unwrap().step(&mut state, &mut srng).unwrap();
        for (col, v) in succ.iter_mut().zip(geweke_stats(&state.beta, state.sigma2, state.lam)) {
            col.push(v);
        }
        y = simulate_y(&x, &state.beta, state.sigma2, &mut srng);
    }

    names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let (mm, ms) = mean_sd(&marg[i]);
            let (sm, _) = mean_sd(&succ[i]);
            GewekeRow {
                name,
                marginal: (mm, ms / (sweeps as f64).sqrt()),
                successive: (sm, batch_means_se(&succ[i], 50)),
            }
        })
        .collect()
}
