//! Closed forms for the isotropic α-stable jump kernel
//! `W(y) = c(n,α)‖y‖^{-n-α}` scaled by the noise intensity σ.

use std::f64::consts::PI;

use libm::tgamma;

use crate::error::{Error, Result};

fn check(alpha: f64, sigma: f64, n: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!(
            "jump kernel needs 0 < α < 2, got {alpha}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) || n == 0 {
        return Err(Error::Parameter(format!(
            "need σ > 0 and n ≥ 1, got σ = {sigma}, n = {n}"
        )));
    }
    Ok(())
}

/// `c(n,α) = α Γ((n+α)/2) / (2^{1-α} π^{n/2} Γ(1-α/2))`.
pub fn stable_constant(n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    alpha * tgamma(0.5 * (n + alpha))
        / (2f64.powf(1.0 - alpha) * PI.powf(0.5 * n) * tgamma(1.0 - 0.5 * alpha))
}

/// Surface measure of the unit sphere in `ℝⁿ`: 2 for n = 1, 2π for n = 2.
pub fn sphere_area(n: usize) -> f64 {
    let h = 0.5 * n as f64;
    2.0 * PI.powf(h) / tgamma(h)
}

/// Jump rate into the annulus `ε ≤ ‖y‖ < mε`:
/// `σ^α c(n,α) S_{n-1} (ε^{-α} - (mε)^{-α}) / α`.
pub fn theoretical_annulus_rate(alpha: f64, sigma: f64, n: usize, eps: f64, m: f64) -> Result<f64> {
    check(alpha, sigma, n)?;
    if !(eps > 0.0) || !(m >= 1.0) {
        return Err(Error::Parameter(format!(
            "need ε > 0 and m ≥ 1, got {eps}, {m}"
        )));
    }
    Ok(sigma.powf(alpha)
        * stable_constant(n, alpha)
        * sphere_area(n)
        * (eps.powf(-alpha) - (m * eps).powf(-alpha))
        / alpha)
}

/// Second moment of the jump kernel inside the ε-ball, row-major `n × n`.
/// Off-diagonal entries vanish by symmetry; each diagonal entry is
/// `σ^α c(n,α) S_{n-1} ε^{2-α} / (n(2-α))`.
pub fn jump_correction(alpha: f64, sigma: f64, n: usize, eps: f64) -> Result<Vec<f64>> {
    check(alpha, sigma, n)?;
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("need ε > 0, got {eps}")));
    }
    let diag =
        sigma.powf(alpha) * stable_constant(n, alpha) * sphere_area(n) * eps.powf(2.0 - alpha)
            / (n as f64 * (2.0 - alpha));
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = diag;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_constants() {
        // Cauchy in 1D: c = 1/π.
        assert!((stable_constant(1, 1.0) - 1.0 / PI).abs() < 1e-14);
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn scaling_laws() {
        let r = theoretical_annulus_rate(1.5, 1.0, 2, 0.5, 2.0).unwrap();
        let r2 = theoretical_annulus_rate(1.5, 2.0, 2, 0.5, 2.0).unwrap();
        assert!((r2 / r - 2f64.powf(1.5)).abs() < 1e-12);
        assert_eq!(
            theoretical_annulus_rate(1.5, 1.0, 1, 0.5, 1.0).unwrap(),
            0.0
        );
        let a = jump_correction(1.3, 1.0, 2, 0.4).unwrap();
        let b = jump_correction(1.3, 1.0, 2, 0.8).unwrap();
        assert!((b[0] / a[0] - 2f64.powf(0.7)).abs() < 1e-12);
        assert_eq!(a[1], 0.0);
        assert_eq!(a[2], 0.0);
    }

    #[test]
    fn gaussian_limit_is_a_domain_error() {
        assert!(matches!(
            theoretical_annulus_rate(2.0, 1.0, 1, 0.5, 2.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            jump_correction(2.0, 1.0, 1, 0.5),
            Err(Error::Domain(_))
        ));
    }
}
