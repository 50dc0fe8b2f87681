//! SDE definitions `dx = b(x)dt + Λ(x)dB + σ dL^α` and burst simulation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::stable::{isotropic_stable_into, StableParams};

/// Time-stepping rule for the drift term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain Euler–Maruyama: `x += b(x)Δt + ...`.
    #[default]
    EulerMaruyama,
    /// Euler–Maruyama with the drift increment tamed to
    /// `b(x)Δt / (1 + Δt‖b(x)‖)`. Identical to the plain scheme to first
    /// order; keeps superlinear drifts from overflowing after a large jump.
    TamedEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    /// Drift components `b_i(x)`.
    pub drift: Vec<Expr>,
    /// Brownian coefficient `Λ(x)`, row-major `n × n`.
    pub diffusion: Vec<Vec<Expr>>,
    /// Lévy noise; `None` disables the jump term.
    pub levy: Option<StableParams>,
    /// Burst horizon `t*`.
    pub t_star: f64,
    /// Integrator step; defaults to `t*/1000`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SdeSpec {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn step_size(&self) -> f64 {
        self.dt.unwrap_or(self.t_star * 1e-3)
    }

    /// Number of integrator steps per burst.
    pub fn steps(&self) -> usize {
        (self.t_star / self.step_size()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Parameter(
                "drift must have at least one component".into(),
            ));
        }
        if self.diffusion.len() != n || self.diffusion.iter().any(|row| row.len() != n) {
            return Err(Error::Parameter(format!(
                "diffusion matrix must be {n}x{n}"
            )));
        }
        for (i, e) in self.drift.iter().enumerate() {
            if e.arity() > n {
                return Err(Error::Parameter(format!(
                    "drift component {} reads x{} in a {n}-dimensional system",
                    i + 1,
                    e.arity()
                )));
            }
        }
        for row in &self.diffusion {
            for e in row {
                if e.arity() > n {
                    return Err(Error::Parameter(format!(
                        "diffusion entry '{e}' reads x{} in a {n}-dimensional system",
                        e.arity()
                    )));
                }
            }
        }
        if let Some(levy) = &self.levy {
            levy.validate()?;
            if levy.dim != n {
                return Err(Error::Parameter(format!(
                    "Lévy dimension {} does not match system dimension {n}",
                    levy.dim
                )));
            }
        }
        let dt = self.step_size();
        if !(self.t_star > 0.0 && self.t_star.is_finite()) {
            return Err(Error::Parameter(format!(
                "t_star must be positive, got {}",
                self.t_star
            )));
        }
        if !(dt > 0.0 && dt <= self.t_star) {
            return Err(Error::Parameter(format!(
                "dt must lie in (0, t_star], got {dt}"
            )));
        }
        let steps = self.t_star / dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::Parameter(format!(
                "t_star/dt = {steps} is not an integer step count"
            )));
        }
        Ok(())
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        self.drift.iter().map(|e| e.eval(x)).collect()
    }

    /// `a(x) = Λ(x)Λ(x)ᵀ`, row-major.
    pub fn diffusion_matrix_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let lam: Vec<f64> = self.diffusion.iter().flatten().map(|e| e.eval(x)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| lam[i * n + k] * lam[j * n + k]).sum();
            }
        }
        a
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("SdeSpec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Precomputed per-step constants for one spec.
struct Stepper<'a> {
    spec: &'a SdeSpec,
    dim: usize,
    steps: usize,
    dt: f64,
    sqrt_dt: f64,
    levy: Option<(f64, f64)>,
    brownian: Vec<(usize, usize, &'a Expr)>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a SdeSpec) -> Self {
        let dt = spec.step_size();
        let brownian = spec
            .diffusion
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, e)| !e.is_zero())
                    .map(move |(j, e)| (i, j, e))
            })
            .collect();
        Self {
            spec,
            dim: spec.dim(),
            steps: spec.steps(),
            dt,
            sqrt_dt: dt.sqrt(),
            levy: spec
                .levy
                .map(|p| (p.alpha, p.sigma * dt.powf(1.0 / p.alpha))),
            brownian,
        }
    }

    fn endpoint<R: Rng + ?Sized>(&self, z: &[f64], out: &mut [f64], rng: &mut R) -> Result<()> {
        let n = self.dim;
        let mut x = z.to_vec();
        let mut b = vec![0.0; n];
        let mut xi = vec![0.0; n];
        let mut eta = vec![0.0; n];
        let mut dx = vec![0.0; n];
        let tamed = self.spec.scheme == Scheme::TamedEuler;
        for step in 0..self.steps {
            for (bi, e) in b.iter_mut().zip(&self.spec.drift) {
                *bi = e.eval(&x);
            }
            let drift_scale = if tamed {
                let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                self.dt / (1.0 + self.dt * norm)
            } else {
                self.dt
            };
            for (d, bi) in dx.iter_mut().zip(&b) {
                *d = bi * drift_scale;
            }
            if !self.brownian.is_empty() {
                for v in xi.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                for &(i, j, e) in &self.brownian {
                    dx[i] += e.eval(&x) * self.sqrt_dt * xi[j];
                }
            }
            if let Some((alpha, scale)) = self.levy {
                isotropic_stable_into(alpha, &mut eta, rng);
                for (d, h) in dx.iter_mut().zip(&eta) {
                    *d += scale * h;
                }
            }
            for (xv, d) in x.iter_mut().zip(&dx) {
                *xv += d;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { step, state: x });
            }
        }
        out.copy_from_slice(&x);
        Ok(())
    }
}

/// Simulates `n_samples` independent endpoints `x(t*)` from `x(0) = z`.
/// Returns them flattened row-major (`n_samples × dim`).
pub fn euler_maruyama_burst<R: Rng + ?Sized>(
    spec: &SdeSpec,
    z: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    if z.len() != spec.dim() {
        return Err(Error::Parameter(format!(
            "initial point has dimension {}, system has {}",
            z.len(),
            spec.dim()
        )));
    }
    let stepper = Stepper::new(spec);
    let mut samples = vec![0.0; n_samples * spec.dim()];
    for out in samples.chunks_exact_mut(spec.dim()) {
        stepper.endpoint(z, out, rng)?;
    }
    Ok(samples)
}
