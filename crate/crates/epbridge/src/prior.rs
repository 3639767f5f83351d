//! The exponential-power prior `pi(beta) ∝ exp(-lam |beta|^alpha)` with
//! `alpha = 2^-gamma`, its normal scale-mixture representation, and the
//! non-separable bridge (NSB) marginal obtained by integrating `lam` out.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::distributions::{sample_exponential, sample_gamma, RngStream};
use crate::{Error, Result};

/// `2^gamma` as a float.
pub(crate) fn pow2(gamma: u32) -> f64 {
    (1u64 << gamma) as f64
}

/// `alpha = 2^-gamma`.
pub(crate) fn alpha(gamma: u32) -> f64 {
    1.0 / pow2(gamma)
}

/// `|b|^(2^-gamma)` by repeated square roots, exact at zero.
pub(crate) fn root(b: f64, gamma: u32) -> f64 {
    let mut r = b.abs();
    for _ in 0..gamma {
        r = r.sqrt();
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpPriorSpec {
    pub gamma: u32,
    pub lam: f64,
}

impl EpPriorSpec {
    pub fn new(gamma: u32, lam: f64) -> Result<Self> {
        if gamma > 8 {
            return Err(Error::Domain(format!("gamma = {gamma} is beyond the supported range")));
        }
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::Domain(format!("prior rate must be positive, got {lam}")));
        }
        Ok(EpPriorSpec { gamma, lam })
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.gamma)
    }
}

/// Log density `log(lam^(2^g) / (2 (2^g)!)) - lam |beta|^(2^-g)`.
pub fn ep_log_density(beta: f64, spec: &EpPriorSpec) -> f64 {
    let k = pow2(spec.gamma);
    k * spec.lam.ln() - std::f64::consts::LN_2 - ln_gamma(k + 1.0) - spec.lam * root(beta, spec.gamma)
}

/// CDF of the exponential-power law: `lam |beta|^alpha` is `Gamma(2^g, 1)`.
pub fn ep_cdf(beta: f64, spec: &EpPriorSpec) -> f64 {
    let u = spec.lam * root(beta, spec.gamma);
    let g = if u > 0.0 { gamma_lr(pow2(spec.gamma), u) } else { 0.0 };
    if beta >= 0.0 {
        0.5 + 0.5 * g
    } else {
        0.5 - 0.5 * g
    }
}

/// One draw from the hierarchical representation of the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct EpMixtureDraw {
    pub beta: f64,
    /// `v[i - 1]` holds `v_i`, i = 1..gamma; empty for the Laplace case.
    pub v: Vec<f64>,
    pub tau2: f64,
}

/// Samples `beta` through the chain
/// `v_g ~ Gamma((2^g+1)/2, 1/4)`, `v_i | v_{i+1} ~ Gamma((2^i+1)/2, 1/(4 v_{i+1}^2))`,
/// `tau2 | v_1 ~ Exp(1/(2 v_1^2))`, `beta | tau2 ~ N(0, tau2 / lam^(2^(g+1)))`
/// (gamma/exponential parameters are rates).
///
/// `gamma = 0` is the Laplace case: `tau2 ~ Exp(1/2)`, `beta ~ N(0, tau2/lam^2)`.
pub fn sample_ep_mixture(spec: &EpPriorSpec, rng: &mut RngStream) -> Result<EpMixtureDraw> {
    let g = spec.gamma;
    let mut v = vec![0.0; g as usize];
    let tau2 = if g == 0 {
        sample_exponential(0.5, rng)?
    } else {
        let top = (pow2(g) + 1.0) / 2.0;
        v[g as usize - 1] = sample_gamma(top, 0.25, rng)?;
        for i in (1..g).rev() {
            let upper = v[i as usize];
            v[i as usize - 1] = sample_gamma((pow2(i) + 1.0) / 2.0, 1.0 / (4.0 * upper * upper), rng)?;
        }
        sample_exponential(1.0 / (2.0 * v[0] * v[0]), rng)?
    };
    let log_sd = 0.5 * (tau2.ln() - pow2(g + 1) * spec.lam.ln());
    let beta = log_sd.exp() * rng.normal();
    Ok(EpMixtureDraw { beta, v, tau2 })
}

/// Parameters of the NSB marginal prior `pi(beta | b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsbSpec {
    pub gamma: u32,
    /// May be `+inf`, meaning `1/b = 0`.
    pub b: f64,
    pub p: usize,
}

impl NsbSpec {
    pub fn new(gamma: u32, b: f64, p: usize) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::Domain(format!("b must be positive, got {b}")));
        }
        if p == 0 {
            return Err(Error::Domain("p must be positive".into()));
        }
        Ok(NsbSpec { gamma, b, p })
    }

    /// `C1 = p + 2^-(gamma+1)`.
    pub fn c1(&self) -> f64 {
        self.p as f64 + 0.5 / pow2(self.gamma)
    }

    /// Exponent `2^gamma p + 1/2` of the marginal.
    pub fn kexp(&self) -> f64 {
        pow2(self.gamma) * self.p as f64 + 0.5
    }

    pub fn inv_b(&self) -> f64 {
        1.0 / self.b
    }
}

/// `sum_j |beta_j|^(2^-gamma)`.
pub fn bridge_sum(beta: &[f64], gamma: u32) -> f64 {
    beta.iter().map(|b| root(*b, gamma)).sum()
}

/// [`bridge_sum`] accumulated in sorted order, so the result does not depend
/// on the order of `beta`.
fn bridge_sum_sorted(beta: &[f64], gamma: u32) -> f64 {
    let mut terms: Vec<f64> = beta.iter().map(|b| root(*b, gamma)).collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Log of
/// `Gamma(2^g p + 1/2) / (sqrt(pi b) 2^p ((2^g)!)^p) (S + 1/b)^-(2^g p + 1/2)`,
/// `S = sum |beta_j|^(2^-g)`, evaluated in log space.
pub fn nsb_log_prior(beta: &[f64], spec: &NsbSpec) -> f64 {
    let p = spec.p as f64;
    let k = pow2(spec.gamma);
    let s = bridge_sum_sorted(beta, spec.gamma);
    ln_gamma(spec.kexp())
        - 0.5 * (std::f64::consts::PI * spec.b).ln()
        - p * std::f64::consts::LN_2
        - p * ln_gamma(k + 1.0)
        - spec.kexp() * (s + spec.inv_b()).ln()
}

/// The penalty `(2^g p + 1/2) log(S + 1/b)`, i.e. `-log pi(beta | b)` up to a
/// constant in `beta`.
pub fn nsb_penalty(beta: &[f64], spec: &NsbSpec) -> f64 {
    spec.kexp() * (bridge_sum(beta, spec.gamma) + spec.inv_b()).ln()
}

/// `d pen / d|beta_j| = C1 / (|beta_j| + C2 |beta_j|^(1 - 2^-g))` with
/// `C2 = sum_{i != j} |beta_i|^(2^-g) + 1/b`.
pub fn nsb_penalty_derivative(beta_abs: f64, c1: f64, c2: f64, gamma: u32) -> f64 {
    c1 / (beta_abs + c2 * beta_abs / root(beta_abs, gamma))
}

/// Density of the shrinkage factor `kappa = 1/(1 + tau2)` under the
/// `alpha = 1/2` prior with `lam = 1`:
/// `(8 sqrt(pi) kappa^2)^-1 ∫ v^-1.5 exp(-v/4 + 1/(2v^2) - 1/(2 v^2 kappa)) dv`.
pub fn kappa_density(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    // exponent -v/4 - c/v^2 with c = (1/kappa - 1)/2
    let c = 0.5 * (1.0 / kappa - 1.0);
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        (-1.5 * v.ln() - 0.25 * v - c / (v * v)).exp()
    };
    let tol = 1e-10;
    // integrand peaks near sqrt(4c/3) when that is small
    let peak = (4.0 * c / 3.0).sqrt();
    let mut total = 0.0;
    if peak < 1.0 {
        total += quadrature::double_exponential::integrate(f, 0.0, peak, tol).integral;
        total += quadrature::double_exponential::integrate(f, peak, 1.0, tol).integral;
    } else {
        total += quadrature::double_exponential::integrate(f, 0.0, 1.0, tol).integral;
    }
    // [1, inf) through v = 1/w
    let g = |w: f64| if w <= 0.0 { 0.0 } else { f(1.0 / w) / (w * w) };
    total += quadrature::double_exponential::integrate(g, 0.0, 1.0, tol).integral;
    Ok(total / (8.0 * std::f64::consts::PI.sqrt() * kappa * kappa))
}
