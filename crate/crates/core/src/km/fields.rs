//! Drift and diffusion from truncated moments of a fitted density.

use serde::{Deserialize, Serialize};

use super::jump::JumpEstimate;
use super::kernel::jump_correction;
use super::quadrature::BallRule;
use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// `∫_{‖x-z‖<ε} (x-z)^k p(x) dx` for k = 0, 1, 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallMoments {
    pub mass: f64,
    pub first: Vec<f64>,
    /// Row-major `n × n`.
    pub second: Vec<f64>,
}

pub fn ball_moments(model: &FlowModel, z: &[f64], rule: &BallRule) -> Result<BallMoments> {
    let n = z.len();
    if model.dim() != n || rule.dim != n {
        return Err(Error::Parameter(format!(
            "model, rule and z dimensions differ ({}, {}, {n})",
            model.dim(),
            rule.dim
        )));
    }
    let log_p = model.log_density_batch(&rule.nodes(z));
    let mut mass = 0.0;
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n * n];
    for ((d, w), lp) in rule.offsets.chunks_exact(n).zip(&rule.weights).zip(&log_p) {
        let wp = w * lp.exp();
        mass += wp;
        for i in 0..n {
            first[i] += wp * d[i];
            for j in 0..n {
                second[i * n + j] += wp * d[i] * d[j];
            }
        }
    }
    if !mass.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite density mass near z = {z:?}"
        )));
    }
    Ok(BallMoments {
        mass,
        first,
        second,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    /// Symmetric row-major `n × n`.
    pub matrix: Vec<f64>,
    /// True when a negative diagonal entry was clamped to zero.
    pub clamped: bool,
}

/// `b̂ = (1/t*)·first moment`.
pub fn drift_from_moments(m: &BallMoments, t_star: f64) -> Vec<f64> {
    m.first.iter().map(|v| v / t_star).collect()
}

/// `â = (1/t*)·second moment − jump correction`, symmetrized, with
/// negative diagonals clamped.
pub fn diffusion_from_moments(
    m: &BallMoments,
    t_star: f64,
    correction: Option<&[f64]>,
) -> DiffusionEstimate {
    let n = m.first.len();
    let raw: Vec<f64> = m
        .second
        .iter()
        .enumerate()
        .map(|(k, v)| v / t_star - correction.map_or(0.0, |c| c[k]))
        .collect();
    let mut matrix = vec![0.0; n * n];
    let mut clamped = false;
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (raw[i * n + j] + raw[j * n + i]);
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
        if matrix[i * n + i] < 0.0 {
            matrix[i * n + i] = 0.0;
            clamped = true;
        }
    }
    DiffusionEstimate { matrix, clamped }
}

pub fn estimate_drift(
    model: &FlowModel,
    z: &[f64],
    eps: f64,
    t_star: f64,
    resolution: usize,
) -> Result<Vec<f64>> {
    let rule = BallRule::new(z.len(), eps, resolution)?;
    Ok(drift_from_moments(&ball_moments(model, z, &rule)?, t_star))
}

/// With `jump = None` no correction is subtracted (Brownian-only systems).
pub fn estimate_diffusion(
    model: &FlowModel,
    z: &[f64],
    eps: f64,
    t_star: f64,
    resolution: usize,
    jump: Option<&JumpEstimate>,
) -> Result<DiffusionEstimate> {
    let rule = BallRule::new(z.len(), eps, resolution)?;
    let moments = ball_moments(model, z, &rule)?;
    let correction = jump
        .map(|j| jump_correction(j.alpha_hat, j.sigma_hat, z.len(), eps))
        .transpose()?;
    Ok(diffusion_from_moments(
        &moments,
        t_star,
        correction.as_deref(),
    ))
}
