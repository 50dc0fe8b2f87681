//! Symmetric and rotationally invariant α-stable random variables.
//!
//! All draws use the standard parametrization with characteristic function
//! `exp(-‖u‖^α)`; the noise intensity σ is applied by the SDE integrator.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stability index, Lévy noise intensity and spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl StableParams {
    pub fn new(alpha: f64, sigma: f64, dim: usize) -> Result<Self> {
        let params = Self { alpha, sigma, dim };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "stability index must lie in (0, 2], got {alpha}"
        )))
    }
}

/// One Chambers–Mallows–Stuck draw from `S_α(1, 0, 0)`.
#[inline]
pub fn standard_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    if alpha == 2.0 {
        return 2.0 * v.sin() * w.sqrt();
    }
    let cos_v = v.cos();
    (alpha * v).sin() / cos_v.powf(1.0 / alpha)
        * ((v * (1.0 - alpha)).cos() / w).powf((1.0 - alpha) / alpha)
}

/// One draw of a positive stable variable with Laplace transform
/// `E[exp(-λA)] = exp(-λ^a)`, `0 < a ≤ 1` (Kanter's representation).
#[inline]
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == 1.0 {
        return 1.0;
    }
    // Open interval (0, π) keeps sin(u) away from zero.
    let u = PI * (1.0 - rng.random::<f64>()).min(1.0 - f64::EPSILON);
    let w: f64 = Exp1.sample(rng);
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
}

/// Writes one isotropic standard α-stable vector into `out` by Gaussian
/// subordination `X = √(2A)·G`, `A` positive (α/2)-stable.
#[inline]
pub fn isotropic_stable_into<R: Rng + ?Sized>(alpha: f64, out: &mut [f64], rng: &mut R) {
    if out.len() == 1 {
        out[0] = standard_symmetric_stable(alpha, rng);
        return;
    }
    let scale = (2.0 * positive_stable(alpha / 2.0, rng)).sqrt();
    for x in out.iter_mut() {
        let g: f64 = StandardNormal.sample(rng);
        *x = scale * g;
    }
}

pub fn sample_standard_symmetric_stable<R: Rng + ?Sized>(
    alpha: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if count == 0 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    Ok((0..count)
        .map(|_| standard_symmetric_stable(alpha, rng))
        .collect())
}

/// `count` isotropic draws in `params.dim` dimensions (σ is not applied).
pub fn sample_isotropic_stable<R: Rng + ?Sized>(
    params: &StableParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    if count == 0 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    Ok((0..count)
        .map(|_| {
            let mut x = vec![0.0; params.dim];
            isotropic_stable_into(params.alpha, &mut x, rng);
            x
        })
        .collect())
}
