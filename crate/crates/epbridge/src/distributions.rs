//! Random variate generation for every full conditional used by the samplers.
//!
//! All samplers take an [`RngStream`], a ChaCha8 generator keyed by
//! `(seed, stream_id)`. ChaCha is counter based, so distinct stream ids give
//! non-overlapping sequences without any shared state.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::{Error, Result};

/// A reproducible random stream; one per chain, fold or replication.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Inverse Gaussian with mean `mu` and shape `lam`.
///
/// Michael–Schucany–Haas transformation with rejection. The smaller root is
/// evaluated as `mu / (1 + c + sqrt(c^2 + 2c))` with `c = mu nu^2 / (2 lam)`,
/// and rewritten as `(2 lam / nu^2) / (1/c + 1 + sqrt(1 + 2/c))` for large
/// `c`, so huge means (the `beta -> 0` regime of the local-scale updates)
/// neither cancel nor overflow. `mu = inf` yields the Lévy limit.
pub fn sample_inverse_gaussian(mu: f64, lam: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("inverse Gaussian mean", mu)?;
    check_positive("inverse Gaussian shape", lam)?;
    if !lam.is_finite() {
        return Err(Error::Domain("inverse Gaussian shape must be finite".into()));
    }
    let nu = rng.normal();
    let y = nu * nu;
    if y == 0.0 {
        return Ok(mu.min(f64::MAX));
    }
    let c = mu * y / (2.0 * lam);
    let x1 = if c < 1e8 {
        mu / (1.0 + c + (c * (c + 2.0)).sqrt())
    } else {
        let ic = 1.0 / c;
        (2.0 * lam / y) / (ic + 1.0 + (1.0 + 2.0 * ic).sqrt())
    };
    let x1 = x1.max(f64::MIN_POSITIVE);
    let u = rng.uniform();
    // accept x1 with probability mu / (mu + x1)
    let x = if u * (mu + x1) <= mu { x1 } else { mu * (mu / x1) };
    Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
}

/// Gamma with the given shape and rate (mean `shape / rate`).
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    if !shape.is_finite() || !rate.is_finite() {
        return Err(Error::Domain(format!("gamma parameters must be finite ({shape}, {rate})")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

/// Inverse gamma: the reciprocal of a `Gamma(shape, rate = scale)` draw.
pub fn sample_inv_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    let g = sample_gamma(shape, scale, rng)?;
    Ok((1.0 / g).min(f64::MAX))
}

/// Exponential with the given rate.
pub fn sample_exponential(rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("exponential rate", rate)?;
    Ok((rng.exp1() / rate).max(f64::MIN_POSITIVE))
}

/// Standard normal CDF.
pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

// Truncation point of the alternating-series sampler.
const PG_T: f64 = 0.64;

/// Coefficient `a_n(x)` of the alternating series for the J*(1, z) density.
fn pg_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > PG_T {
        k * (-0.5 * k * k * x).exp()
    } else {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    }
}

/// Probability of the exponential-tail branch of the J*(1, z) proposal.
fn pg_tail_mass(z: f64) -> f64 {
    let t = PG_T;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + norm_cdf(b).ln();
    let xa = x0 + z + norm_cdf(a).ln();
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse Gaussian IG(1/z, 1) truncated to (0, t).
fn pg_truncated_ig(z: f64, rng: &mut RngStream) -> f64 {
    let t = PG_T;
    if z < 1.0 / t {
        // mean beyond the truncation point: Lévy proposal with rejection
        loop {
            let (mut e1, mut e2) = (rng.exp1(), rng.exp1());
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.exp1();
                e2 = rng.exp1();
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            if rng.uniform() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let x = sample_inverse_gaussian(1.0 / z, 1.0, rng).expect("positive parameters");
            if x <= t {
                return x;
            }
        }
    }
}

/// One draw of J*(1, z), z >= 0.
fn sample_jstar(z: f64, rng: &mut RngStream) -> f64 {
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_tail = pg_tail_mass(z);
    loop {
        let x = if rng.uniform() < p_tail { PG_T + rng.exp1() / fz } else { pg_truncated_ig(z, rng) };
        let mut s = pg_coef(0, x);
        let y = rng.uniform() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= pg_coef(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += pg_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Pólya–Gamma PG(count, tilt).
///
/// Exact alternating-series sampler for unit count; integer counts are sums of
/// independent unit draws.
pub fn sample_polya_gamma(count: u32, tilt: f64, rng: &mut RngStream) -> Result<f64> {
    if count < 1 {
        return Err(Error::Domain("Polya-Gamma count must be >= 1".into()));
    }
    if !tilt.is_finite() {
        return Err(Error::Domain(format!("Polya-Gamma tilt must be finite, got {tilt}")));
    }
    let z = 0.5 * tilt.abs();
    Ok((0..count).map(|_| 0.25 * sample_jstar(z, rng)).sum())
}

/// PG(count, tilt) through its infinite convolution of gammas, truncated after
/// `terms` terms, with the truncated tail replaced by its mean.
///
/// Approximate; kept as an independent cross-check of [`sample_polya_gamma`].
pub fn sample_polya_gamma_truncated(count: f64, tilt: f64, terms: usize, rng: &mut RngStream) -> Result<f64> {
    check_positive("Polya-Gamma count", count)?;
    let d2 = tilt * tilt / (4.0 * PI * PI);
    let mut acc = 0.0;
    for k in 1..=terms {
        let h = k as f64 - 0.5;
        acc += sample_gamma(count, 1.0, rng)? / (h * h + d2);
    }
    // sum over k > terms of 1/((k - 1/2)^2 + d^2), midpoint rule
    let d = d2.sqrt();
    let kk = terms as f64;
    let tail = if d > 0.0 { (0.5 * PI - (kk / d).atan()) / d } else { 1.0 / kk };
    Ok((acc + count * tail) / (2.0 * PI * PI))
}

/// Cholesky factor of a symmetric positive definite matrix after Jacobi
/// equilibration. Returns `(L, s)` with `A = S L L^T S`, `S = diag(s)`.
///
/// The ridge `1e-12 (1 + max diag)` is applied to the equilibrated matrix
/// (unit diagonal), so it perturbs every coordinate by the same relative
/// amount however wide the dynamic range of `A`. One retry uses `1e-8`.
fn equilibrated_cholesky(a: &Mat<f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let p = a.nrows();
    let s: Vec<f64> = (0..p).map(|i| a[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut min_diag = f64::INFINITY;
    for i in 0..p {
        min_diag = min_diag.min(a[(i, i)]);
    }
    if !(min_diag > 0.0) {
        return Err(Error::Singular { min_diag });
    }
    for jitter in [1e-12, 1e-8] {
        let mut e = Mat::from_fn(p, p, |i, j| a[(i, j)] / (s[i] * s[j]));
        for i in 0..p {
            e[(i, i)] = 1.0 + 2.0 * jitter;
        }
        if let Ok(llt) = e.llt(Side::Lower) {
            return Ok((llt.L().to_owned(), s));
        }
    }
    Err(Error::Singular { min_diag })
}

fn solve_lower(l: MatRef<'_, f64>, rhs: &mut Mat<f64>) {
    solve_lower_triangular_in_place(l, rhs.as_mut(), Par::Seq);
}

fn solve_upper_t(l: MatRef<'_, f64>, rhs: &mut Mat<f64>) {
    solve_upper_triangular_in_place(l.transpose(), rhs.as_mut(), Par::Seq);
}

// Upper limit on a precision diagonal; keeps the equilibration finite.
const MAX_PRECISION: f64 = 1e300;

/// Draw from `N(A^{-1} xty, sigma2 A^{-1})` with
/// `A = xtx + scale * diag(d_inv)`, by Cholesky of the `p x p` precision.
pub fn sample_mvn_precision(
    xtx: &Mat<f64>,
    d_inv: &[f64],
    scale: f64,
    xty: &[f64],
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let p = xty.len();
    if xtx.nrows() != p || xtx.ncols() != p || d_inv.len() != p {
        return Err(Error::Config("dimension mismatch in Gaussian draw".into()));
    }
    check_positive("precision scale", scale)?;
    check_positive("noise variance", sigma2)?;
    let mut a = xtx.clone();
    for j in 0..p {
        let add = (scale * d_inv[j]).min(MAX_PRECISION);
        a[(j, j)] = (a[(j, j)] + add).min(MAX_PRECISION);
    }
    let (l, s) = equilibrated_cholesky(&a)?;
    let l = l.as_ref();

    // mean: S^{-1} (L L^T)^{-1} S^{-1} xty
    let mut m = Mat::from_fn(p, 1, |i, _| xty[i] / s[i]);
    solve_lower(l, &mut m);
    solve_upper_t(l, &mut m);
    // noise: sigma S^{-1} L^{-T} z
    let mut e = Mat::from_fn(p, 1, |_, _| 0.0);
    for i in 0..p {
        e[(i, 0)] = rng.normal();
    }
    solve_upper_t(l, &mut e);
    let sd = sigma2.sqrt();
    Ok((0..p).map(|i| (m[(i, 0)] + sd * e[(i, 0)]) / s[i]).collect())
}

/// Draw from `N(Q^{-1} Phi^T alpha, Q^{-1})`, `Q = Phi^T Phi + diag(1/prior_var)`,
/// where `Phi = diag(row_scale) X`.
///
/// Data-augmentation route for `p > n`: with `u ~ N(0, D)` and
/// `delta ~ N(0, I_n)`, solve `(Phi D Phi^T + I) w = alpha - Phi u - delta` and
/// return `u + D Phi^T w`. Costs O(n^2 p) instead of O(p^3).
pub fn sample_mvn_augmented(
    x: &Mat<f64>,
    row_scale: &[f64],
    alpha: &[f64],
    prior_var: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    if row_scale.len() != n || alpha.len() != n || prior_var.len() != p {
        return Err(Error::Config("dimension mismatch in Gaussian draw".into()));
    }
    if prior_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("prior variances must be finite and non-negative".into()));
    }
    // u ~ N(0, D)
    let u: Vec<f64> = prior_var.iter().map(|v| v.sqrt() * rng.normal()).collect();
    let delta: Vec<f64> = (0..n).map(|_| rng.normal()).collect();

    // M = Phi D Phi^T + I
    let xd = Mat::from_fn(n, p, |i, j| x[(i, j)] * prior_var[j]);
    let mut m = Mat::<f64>::zeros(n, n);
    matmul(m.as_mut(), Accum::Replace, xd.as_ref(), x.transpose(), 1.0, Par::Seq);
    for i in 0..n {
        for k in 0..n {
            m[(i, k)] *= row_scale[i] * row_scale[k];
        }
        m[(i, i)] += 1.0;
    }
    let xu = crate::data::mat_vec(x, &u);
    let mut w = Mat::from_fn(n, 1, |i, _| alpha[i] - row_scale[i] * xu[i] - delta[i]);
    // wide prior-variance ranges make M badly scaled; factor it equilibrated
    let (l, s) = equilibrated_cholesky(&m)?;
    let l = l.as_ref();
    for i in 0..n {
        w[(i, 0)] /= s[i];
    }
    solve_lower(l, &mut w);
    solve_upper_t(l, &mut w);
    for i in 0..n {
        w[(i, 0)] /= s[i];
    }
    let sw: Vec<f64> = (0..n).map(|i| row_scale[i] * w[(i, 0)]).collect();
    let xtw = crate::data::mat_t_vec(x, &sw);
    Ok((0..p).map(|j| u[j] + prior_var[j] * xtw[j]).collect())
}
