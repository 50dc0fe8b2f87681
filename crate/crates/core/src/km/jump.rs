//! Jump-parameter estimation from annulus exceedance rates.
//!
//! For a fixed ratio `m` the closed-form rate is
//! `ln r(ε) = ln(σ^α c S (1 - m^{-α}) / α) - α ln ε`, so a least-squares
//! line through `(ln ε, ln r)` gives `-α` as its slope and σ from the
//! intercept once α is known.

use serde::{Deserialize, Serialize};

use super::kernel::{sphere_area, stable_constant};
use crate::error::{Error, Result};

/// Fraction of samples in an annulus, scaled by `1/t*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRate {
    pub rate: f64,
    pub count: usize,
    /// Set when the annulus holds no samples at all.
    pub low_statistics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEstimate {
    pub alpha_hat: f64,
    pub sigma_hat: f64,
    pub epsilons: Vec<f64>,
    pub m: f64,
    /// Pooled rate per ε.
    pub rates: Vec<f64>,
    /// Root-mean-square residual of the log-rate fit.
    pub residual: f64,
    /// Annulus counts, one row per burst, one column per ε.
    pub per_z_counts: Vec<Vec<usize>>,
    pub samples_per_z: Vec<usize>,
}

fn check_annulus(eps: f64, m: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) || !(m > 1.0 && m.is_finite()) {
        return Err(Error::Parameter(format!(
            "need ε > 0 and m > 1, got ε = {eps}, m = {m}"
        )));
    }
    Ok(())
}

/// Number of row-major points with `ε ≤ ‖x - z‖ < mε`, for each ε.
pub fn annulus_counts(samples: &[f64], z: &[f64], eps_list: &[f64], m: f64) -> Vec<usize> {
    let dim = z.len();
    let bounds: Vec<(f64, f64)> = eps_list
        .iter()
        .map(|e| (e * e, (m * e) * (m * e)))
        .collect();
    let mut counts = vec![0; eps_list.len()];
    for x in samples.chunks_exact(dim) {
        let r2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        for (c, (lo, hi)) in counts.iter_mut().zip(&bounds) {
            if r2 >= *lo && r2 < *hi {
                *c += 1;
            }
        }
    }
    counts
}

pub fn annulus_mass_rate(
    samples: &[f64],
    z: &[f64],
    eps: f64,
    m: f64,
    t_star: f64,
) -> Result<AnnulusRate> {
    check_annulus(eps, m)?;
    if !(t_star > 0.0) {
        return Err(Error::Parameter(format!(
            "t_star must be positive, got {t_star}"
        )));
    }
    let n = samples.len() / z.len();
    if n == 0 {
        return Err(Error::Parameter("no samples".into()));
    }
    let count = annulus_counts(samples, z, &[eps], m)[0];
    Ok(AnnulusRate {
        rate: count as f64 / n as f64 / t_star,
        count,
        low_statistics: count == 0,
    })
}

/// Inverts exact or noisy rates `r(ε_k)` for `(α, σ, rms residual)`.
pub fn fit_rates(eps_list: &[f64], rates: &[f64], m: f64, n: usize) -> Result<(f64, f64, f64)> {
    if eps_list.len() < 2 || eps_list.len() != rates.len() {
        return Err(Error::Parameter(
            "need at least two radii with one rate each".into(),
        ));
    }
    let mut sorted = eps_list.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parameter("radii must be distinct".into()));
    }
    for &e in eps_list {
        check_annulus(e, m)?;
    }
    if let Some(k) = rates.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::Estimation(format!(
            "annulus at ε = {} is empty; rates {rates:?}",
            eps_list[k]
        )));
    }
    let mut by_eps: Vec<(f64, f64)> = eps_list
        .iter()
        .copied()
        .zip(rates.iter().copied())
        .collect();
    by_eps.sort_by(|a, b| a.0.total_cmp(&b.0));
    if by_eps.windows(2).any(|w| w[1].1 >= w[0].1) {
        return Err(Error::Estimation(format!(
            "rates do not decrease with ε: {by_eps:?}"
        )));
    }
    let xs: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let alpha = -slope;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Estimation(format!(
            "fitted stability index {alpha} outside (0, 2); rates {rates:?} at ε {eps_list:?}"
        )));
    }
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let base = stable_constant(n, alpha) * sphere_area(n) * (1.0 - m.powf(-alpha)) / alpha;
    let sigma = ((intercept - base.ln()) / alpha).exp();
    Ok((alpha, sigma, residual))
}

/// Pools annulus counts over all bursts and fits `(α, σ)`.
/// `bursts` pairs each initial point with its row-major samples.
pub fn fit_jump_params(
    bursts: &[(&[f64], &[f64])],
    eps_list: &[f64],
    m: f64,
    t_star: f64,
) -> Result<JumpEstimate> {
    let Some(&(z0, _)) = bursts.first() else {
        return Err(Error::Parameter("no bursts to pool".into()));
    };
    let n = z0.len();
    if !(t_star > 0.0) {
        return Err(Error::Parameter(format!(
            "t_star must be positive, got {t_star}"
        )));
    }
    let per_z_counts: Vec<Vec<usize>> = bursts
        .iter()
        .map(|(z, s)| annulus_counts(s, z, eps_list, m))
        .collect();
    let samples_per_z: Vec<usize> = bursts.iter().map(|(_, s)| s.len() / n).collect();
    let total: usize = samples_per_z.iter().sum();
    let rates: Vec<f64> = (0..eps_list.len())
        .map(|k| per_z_counts.iter().map(|c| c[k]).sum::<usize>() as f64 / total as f64 / t_star)
        .collect();
    let (alpha_hat, sigma_hat, residual) = fit_rates(eps_list, &rates, m, n)?;
    Ok(JumpEstimate {
        alpha_hat,
        sigma_hat,
        epsilons: eps_list.to_vec(),
        m,
        rates,
        residual,
        per_z_counts,
        samples_per_z,
    })
}
