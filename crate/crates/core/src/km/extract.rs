//! End-to-end extraction over a burst dataset and its fitted flows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{ball_moments, diffusion_from_moments, drift_from_moments};
use super::jump::{fit_jump_params, JumpEstimate};
use super::kernel::jump_correction;
use super::quadrature::BallRule;
use crate::dataset::{burst_rng, write_atomic, BurstDataset};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::sde::SdeSpec;

/// Which samples feed the annulus counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSource {
    /// Resampled from each burst's fitted flow.
    #[default]
    Flow,
    /// The simulated burst endpoints themselves.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractSettings {
    /// Estimate (α, σ) and subtract the jump correction. Disable for
    /// Brownian-only systems.
    pub jumps: bool,
    /// Inner annulus radii.
    pub eps_list: Vec<f64>,
    /// Annulus ratio.
    pub m: f64,
    /// Ball radius for drift and diffusion.
    pub ball_eps: f64,
    /// Simpson points per axis; 201 in 1D and 129 in 2D when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_points: Option<usize>,
    pub jump_source: JumpSource,
    /// Flow resamples per burst; the burst size when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_count: Option<usize>,
    pub seed: u64,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        Self {
            jumps: true,
            eps_list: vec![0.3, 0.5, 0.8, 1.2],
            m: 2.0,
            ball_eps: 0.5,
            quad_points: None,
            jump_source: JumpSource::Flow,
            resample_count: None,
            seed: 0,
        }
    }
}

impl ExtractSettings {
    pub fn quad_points_for(&self, dim: usize) -> usize {
        self.quad_points.unwrap_or(if dim == 1 { 201 } else { 129 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.jumps {
            if self.eps_list.len() < 2 {
                return Err(Error::Parameter("eps_list needs at least two radii".into()));
            }
            if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(Error::Parameter("annulus radii must be positive".into()));
            }
            if !(self.m > 1.0 && self.m.is_finite()) {
                return Err(Error::Parameter(format!(
                    "annulus ratio m must exceed 1, got {}",
                    self.m
                )));
            }
        }
        if !(self.ball_eps > 0.0 && self.ball_eps.is_finite()) {
            return Err(Error::Parameter("ball_eps must be positive".into()));
        }
        if self.resample_count == Some(0) {
            return Err(Error::Parameter("resample_count must be positive".into()));
        }
        if let Some(q) = self.quad_points {
            if q < 33 || q % 2 == 0 {
                return Err(Error::Parameter(format!(
                    "quad_points must be odd and at least 33, got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// One source's jump fit, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDiagnostic {
    pub source: JumpSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<JumpEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub z: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub grid: Vec<Vec<f64>>,
    /// `b̂(z)`; `None` where the point failed.
    pub drift: Vec<Option<Vec<f64>>>,
    /// `â(z)`, row-major `n × n`.
    pub diffusion: Vec<Option<Vec<f64>>>,
    /// Density mass inside the ball, a quadrature sanity check.
    pub ball_mass: Vec<Option<f64>>,
    pub clamped: Vec<bool>,
    pub epsilon: f64,
    pub quad_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub dim: usize,
    pub t_star: f64,
    pub settings: ExtractSettings,
    /// The estimate used for the diffusion correction.
    pub jump: Option<JumpEstimate>,
    pub jump_diagnostics: Vec<JumpDiagnostic>,
    pub fields: FieldEstimate,
    pub failures: Vec<PointFailure>,
}

fn flow_resamples(
    models: &[Option<FlowModel>],
    dataset: &BurstDataset,
    settings: &ExtractSettings,
) -> Vec<Option<Vec<f64>>> {
    let count = settings.resample_count.unwrap_or(dataset.n_samples());
    models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            m.as_ref()
                .map(|m| m.sample(count, &mut burst_rng(settings.seed, i)))
        })
        .collect()
}

fn fit_source(
    source: JumpSource,
    dataset: &BurstDataset,
    samples: &[Option<Vec<f64>>],
    settings: &ExtractSettings,
) -> JumpDiagnostic {
    let pairs: Vec<(&[f64], &[f64])> = dataset
        .bursts
        .iter()
        .zip(samples)
        .filter_map(|(b, s)| s.as_deref().map(|s| (b.z.as_slice(), s)))
        .collect();
    match fit_jump_params(&pairs, &settings.eps_list, settings.m, dataset.t_star) {
        Ok(e) => JumpDiagnostic {
            source,
            estimate: Some(e),
            error: None,
        },
        Err(e) => JumpDiagnostic {
            source,
            estimate: None,
            error: Some(e.to_string()),
        },
    }
}

/// Fits `(α, σ)` once from pooled counts, then evaluates drift and
/// diffusion at every grid point whose model is present.
pub fn extract(
    dataset: &BurstDataset,
    models: &[Option<FlowModel>],
    settings: &ExtractSettings,
) -> Result<ExtractionResult> {
    settings.validate()?;
    if models.len() != dataset.bursts.len() {
        return Err(Error::Parameter(format!(
            "{} models for {} bursts",
            models.len(),
            dataset.bursts.len()
        )));
    }
    let dim = dataset.dim();
    let (jump, jump_diagnostics) = if settings.jumps {
        let raw: Vec<Option<Vec<f64>>> = dataset
            .bursts
            .iter()
            .map(|b| Some(b.samples.clone()))
            .collect();
        let flow = flow_resamples(models, dataset, settings);
        let diags = vec![
            fit_source(JumpSource::Flow, dataset, &flow, settings),
            fit_source(JumpSource::Raw, dataset, &raw, settings),
        ];
        let primary = diags
            .iter()
            .find(|d| d.source == settings.jump_source)
            .unwrap();
        match &primary.estimate {
            Some(e) => (Some(e.clone()), diags),
            None => {
                return Err(Error::Estimation(format!(
                    "{:?} jump fit failed: {}",
                    settings.jump_source,
                    primary.error.as_deref().unwrap_or("unknown")
                )))
            }
        }
    } else {
        (None, Vec::new())
    };
    let correction = jump
        .as_ref()
        .map(|j| jump_correction(j.alpha_hat, j.sigma_hat, dim, settings.ball_eps))
        .transpose()?;

    let quad_points = settings.quad_points_for(dim);
    let rule = BallRule::new(dim, settings.ball_eps, quad_points)?;
    let per_point: Vec<Result<_>> = dataset
        .bursts
        .par_iter()
        .zip(models)
        .map(|(b, m)| {
            let m = m
                .as_ref()
                .ok_or_else(|| Error::Parameter("no trained model".into()))?;
            let moments = ball_moments(m, &b.z, &rule)?;
            let drift = drift_from_moments(&moments, dataset.t_star);
            let diff = diffusion_from_moments(&moments, dataset.t_star, correction.as_deref());
            if drift.iter().chain(&diff.matrix).any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite moment".into()));
            }
            Ok((drift, diff, moments.mass))
        })
        .collect();

    let n = dataset.bursts.len();
    let mut fields = FieldEstimate {
        grid: dataset.grid(),
        drift: Vec::with_capacity(n),
        diffusion: Vec::with_capacity(n),
        ball_mass: Vec::with_capacity(n),
        clamped: Vec::with_capacity(n),
        epsilon: settings.ball_eps,
        quad_points,
    };
    let mut failures = Vec::new();
    for (index, r) in per_point.into_iter().enumerate() {
        match r {
            Ok((drift, diff, mass)) => {
                fields.drift.push(Some(drift));
                fields.clamped.push(diff.clamped);
                fields.diffusion.push(Some(diff.matrix));
                fields.ball_mass.push(Some(mass));
            }
            Err(e) => {
                failures.push(PointFailure {
                    index,
                    z: dataset.bursts[index].z.clone(),
                    message: e.to_string(),
                });
                fields.drift.push(None);
                fields.diffusion.push(None);
                fields.ball_mass.push(None);
                fields.clamped.push(false);
            }
        }
    }
    Ok(ExtractionResult {
        dim,
        t_star: dataset.t_star,
        settings: settings.clone(),
        jump,
        jump_diagnostics,
        fields,
        failures,
    })
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Upper-triangle index pairs `(i, j)` of an `n × n` matrix.
pub fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

impl ExtractionResult {
    pub fn drift_csv(&self, truth: Option<&SdeSpec>) -> String {
        let n = self.dim;
        let mut out = String::new();
        let mut header: Vec<String> = (1..=n).map(|i| format!("z{i}")).collect();
        header.extend((1..=n).map(|i| format!("b{i}")));
        if truth.is_some() {
            header.extend((1..=n).map(|i| format!("b{i}_true")));
        }
        push_row(&mut out, &header);
        for (z, b) in self.fields.grid.iter().zip(&self.fields.drift) {
            let mut row: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
            row.extend((0..n).map(|i| fmt_opt(b.as_ref().map(|b| b[i]))));
            if let Some(spec) = truth {
                row.extend(spec.drift_at(z).iter().map(|v| format!("{v}")));
            }
            push_row(&mut out, &row);
        }
        out
    }

    pub fn diffusion_csv(&self, truth: Option<&SdeSpec>) -> String {
        let n = self.dim;
        let pairs = upper_pairs(n);
        let mut out = String::new();
        let mut header: Vec<String> = (1..=n).map(|i| format!("z{i}")).collect();
        header.extend(pairs.iter().map(|(i, j)| format!("a{}{}", i + 1, j + 1)));
        if truth.is_some() {
            header.extend(
                pairs
                    .iter()
                    .map(|(i, j)| format!("a{}{}_true", i + 1, j + 1)),
            );
        }
        header.push("clamped".into());
        push_row(&mut out, &header);
        for k in 0..self.fields.grid.len() {
            let z = &self.fields.grid[k];
            let a = self.fields.diffusion[k].as_ref();
            let mut row: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
            row.extend(pairs.iter().map(|(i, j)| fmt_opt(a.map(|a| a[i * n + j]))));
            if let Some(spec) = truth {
                let t = spec.diffusion_matrix_at(z);
                row.extend(pairs.iter().map(|(i, j)| format!("{}", t[i * n + j])));
            }
            row.push(u8::from(self.fields.clamped[k]).to_string());
            push_row(&mut out, &row);
        }
        out
    }

    /// Writes `result.json`, `drift.csv` and `diffusion.csv` into `dir`.
    pub fn save(&self, dir: &Path, truth: Option<&SdeSpec>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("drift.csv"), self.drift_csv(truth).as_bytes())?;
        write_atomic(
            &dir.join("diffusion.csv"),
            self.diffusion_csv(truth).as_bytes(),
        )?;
        let mut json = serde_json::to_string_pretty(self)?;
        writeln!(json).unwrap();
        write_atomic(&dir.join("result.json"), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("result.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}
