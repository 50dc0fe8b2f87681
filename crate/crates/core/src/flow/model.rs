//! Flow models: architecture, flat parameter vector and data standardization.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::coupling::{BackwardScratch, Coupling, CouplingBatchTape, Orientation};
use super::dense::{DenseNet, Tape};
use super::spline::{KnotGrad, RqSpline, SplineParametrization};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Points per batched pass through coupling networks.
const CHUNK: usize = 128;

/// Layer structure of a flow. Parameters live in [`FlowModel::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// 1D composition of rational-quadratic splines. Each layer's knot
    /// parameters come from its own network fed a constant input.
    Spline {
        layers: usize,
        bins: usize,
        bound: f64,
        hidden: Vec<usize>,
    },
    /// 2D composition of affine couplings with per-layer μ and ν networks.
    Coupling {
        orientations: Vec<Orientation>,
        hidden: Vec<usize>,
        scale_c: f64,
    },
}

impl Architecture {
    /// 32 spline layers, `K = 5` bins on `[-3, 3]`, 3×32 networks.
    pub fn nsf1d() -> Self {
        Architecture::Spline {
            layers: 32,
            bins: 5,
            bound: 3.0,
            hidden: vec![32; 3],
        }
    }

    /// Three couplings (x2, x1, x2) with `C = 1/3` and 3×16 networks.
    pub fn realnvp2d() -> Self {
        Architecture::Coupling {
            orientations: vec![
                Orientation::TransformX2,
                Orientation::TransformX1,
                Orientation::TransformX2,
            ],
            hidden: vec![16; 3],
            scale_c: 1.0 / 3.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Architecture::Spline { .. } => 1,
            Architecture::Coupling { .. } => 2,
        }
    }

    pub fn layer_count(&self) -> usize {
        match self {
            Architecture::Spline { layers, .. } => *layers,
            Architecture::Coupling { orientations, .. } => orientations.len(),
        }
    }

    /// The network shape shared by every layer.
    pub fn net(&self) -> DenseNet {
        let (hidden, out) = match self {
            Architecture::Spline { bins, hidden, .. } => (hidden, 3 * bins - 1),
            Architecture::Coupling { hidden, .. } => (hidden, 1),
        };
        let mut sizes = vec![1];
        sizes.extend(hidden);
        sizes.push(out);
        DenseNet::new(sizes)
    }

    /// Networks per layer: one for splines, μ and ν for couplings.
    fn nets_per_layer(&self) -> usize {
        match self {
            Architecture::Spline { .. } => 1,
            Architecture::Coupling { .. } => 2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_count() * self.nets_per_layer() * self.net().param_count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count() == 0 {
            return Err(Error::Parameter("flow needs at least one layer".into()));
        }
        match self {
            Architecture::Spline {
                bins,
                bound,
                hidden,
                ..
            } => {
                if *bins < 2 || !(*bound > 0.0) {
                    return Err(Error::Parameter(
                        "spline flow needs at least 2 bins and a positive bound".into(),
                    ));
                }
                if hidden.contains(&0) {
                    return Err(Error::Parameter(
                        "hidden layer widths must be positive".into(),
                    ));
                }
            }
            Architecture::Coupling {
                hidden, scale_c, ..
            } => {
                if !(*scale_c > 0.0 && scale_c.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "coupling scale C must be positive, got {scale_c}"
                    )));
                }
                if hidden.contains(&0) {
                    return Err(Error::Parameter(
                        "hidden layer widths must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-coordinate affine map `u = (x - mean) / scale` applied before the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Samples beyond this many standard deviations are clipped for training.
    pub const CLIP: f64 = 6.0;

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Sample mean and standard deviation of row-major `points`.
    pub fn fit(points: &[f64], dim: usize) -> Result<Self> {
        let n = points.len() / dim;
        if n < 2 {
            return Err(Error::Parameter(
                "need at least two samples to standardize".into(),
            ));
        }
        let mut mean = vec![0.0; dim];
        for p in points.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for p in points.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();
        // Rounding in the mean leaves constant data a spread of order ε|mean|.
        if scale
            .iter()
            .zip(&mean)
            .any(|(s, m)| !(*s > 1e-12 * m.abs() && *s > 0.0 && s.is_finite()))
        {
            return Err(Error::Parameter(
                "samples have zero or non-finite spread".into(),
            ));
        }
        Ok(Self { mean, scale })
    }

    /// Clamps each coordinate to `mean ± CLIP·scale`.
    pub fn clip(&self, points: &mut [f64]) {
        let dim = self.mean.len();
        for p in points.chunks_exact_mut(dim) {
            for ((v, m), s) in p.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = v.clamp(m - Self::CLIP * s, m + Self::CLIP * s);
            }
        }
    }

    fn log_scale(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub standardization: Standardization,
}

/// Spline layers resolved from the current parameters.
struct SplineStack {
    param: SplineParametrization,
    raws: Vec<Vec<f64>>,
    tapes: Vec<Tape>,
    splines: Vec<RqSpline>,
}

impl FlowModel {
    /// All networks output zero: identity splines, or pure `1/C` scalings.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let dim = arch.dim();
        Ok(Self {
            params: vec![0.0; arch.param_count()],
            arch,
            standardization: Standardization::identity(dim),
        })
    }

    /// Random hidden weights with zero output layers. For couplings the μ
    /// output bias starts at `ln C` so that the fresh flow is the identity.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let net = model.arch.net();
        let p = net.param_count();
        for chunk in model.params.chunks_exact_mut(p) {
            net.init(chunk, rng);
        }
        if let Architecture::Coupling { scale_c, .. } = model.arch {
            for l in 0..model.arch.layer_count() {
                model.params[2 * l * p + p - 1] = scale_c.ln();
            }
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.arch.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.params.len() != self.arch.param_count() {
            return Err(Error::Parameter(format!(
                "model has {} parameters, architecture needs {}",
                self.params.len(),
                self.arch.param_count()
            )));
        }
        let d = self.dim();
        let s = &self.standardization;
        if s.mean.len() != d || s.scale.len() != d || s.scale.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter("invalid standardization".into()));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("model parameters must be finite".into()));
        }
        Ok(())
    }

    fn spline_stack(&self) -> SplineStack {
        let Architecture::Spline {
            layers,
            bins,
            bound,
            ..
        } = self.arch
        else {
            unreachable!("spline stack on a coupling flow")
        };
        let net = self.arch.net();
        let p = net.param_count();
        let param = SplineParametrization { bins, bound };
        let mut raws = Vec::with_capacity(layers);
        let mut tapes = Vec::with_capacity(layers);
        let mut splines = Vec::with_capacity(layers);
        for l in 0..layers {
            let mut tape = Tape::default();
            net.forward(&self.params[l * p..(l + 1) * p], &[1.0], &mut tape);
            let raw = tape.output(&net).to_vec();
            splines.push(RqSpline::new(&param.params(&raw)));
            raws.push(raw);
            tapes.push(tape);
        }
        SplineStack {
            param,
            raws,
            tapes,
            splines,
        }
    }

    /// The spline of each layer, in application order.
    pub fn splines(&self) -> Vec<RqSpline> {
        self.spline_stack().splines
    }

    /// Coupling layer `l` borrowing this model's parameters.
    pub fn coupling<'a>(&'a self, net: &'a DenseNet, l: usize) -> Coupling<'a> {
        let Architecture::Coupling {
            ref orientations,
            scale_c,
            ..
        } = self.arch
        else {
            unreachable!("coupling layer on a spline flow")
        };
        let p = net.param_count();
        Coupling {
            net,
            mu: &self.params[2 * l * p..(2 * l + 1) * p],
            nu: &self.params[(2 * l + 1) * p..(2 * l + 2) * p],
            orientation: orientations[l],
            scale_c,
        }
    }

    /// Standardized 2D points as coordinate columns.
    fn standardized_columns(&self, points: &[f64]) -> [Vec<f64>; 2] {
        let s = &self.standardization;
        let col = |k: usize| -> Vec<f64> {
            points
                .iter()
                .skip(k)
                .step_by(2)
                .map(|v| (v - s.mean[k]) / s.scale[k])
                .collect()
        };
        [col(0), col(1)]
    }

    fn standardize(&self, x: &[f64], u: &mut [f64]) {
        let s = &self.standardization;
        for i in 0..u.len() {
            u[i] = (x[i] - s.mean[i]) / s.scale[i];
        }
    }

    /// Standardized-space map `u ↦ (T(u), log|det ∂T/∂u|)` for row-major
    /// `points` in original coordinates.
    pub fn transform(&self, points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let n = points.len() / d;
        let mut z = vec![0.0; n * d];
        let mut ld = vec![0.0; n];
        match self.arch {
            Architecture::Spline { .. } => {
                let stack = self.spline_stack();
                for i in 0..n {
                    let mut u = [0.0];
                    self.standardize(&points[i..i + 1], &mut u);
                    let mut acc = 0.0;
                    for s in &stack.splines {
                        let (y, l) = s.forward(u[0]);
                        u[0] = y;
                        acc += l;
                    }
                    z[i] = u[0];
                    ld[i] = acc;
                }
            }
            Architecture::Coupling { .. } => {
                let net = self.arch.net();
                let layers: Vec<_> = (0..self.arch.layer_count())
                    .map(|l| self.coupling(&net, l))
                    .collect();
                let mut tape = CouplingBatchTape::default();
                for (c, chunk) in points.chunks(2 * CHUNK).enumerate() {
                    let mut cols = self.standardized_columns(chunk);
                    let ld_chunk = &mut ld[c * CHUNK..c * CHUNK + chunk.len() / 2];
                    for layer in &layers {
                        layer.forward_batch(&mut cols, ld_chunk, &mut tape);
                    }
                    for (b, out) in z[2 * c * CHUNK..2 * c * CHUNK + chunk.len()]
                        .chunks_exact_mut(2)
                        .enumerate()
                    {
                        out[0] = cols[0][b];
                        out[1] = cols[1][b];
                    }
                }
            }
        }
        (z, ld)
    }

    /// `log p_x(x)` for each row of `points`.
    pub fn log_density_batch(&self, points: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let (z, ld) = self.transform(points);
        let shift = self.standardization.log_scale() + d as f64 * HALF_LN_2PI;
        z.chunks_exact(d)
            .zip(&ld)
            .map(|(zi, l)| -0.5 * zi.iter().map(|v| v * v).sum::<f64>() + l - shift)
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_batch(x)[0]
    }

    /// Maps prior-space points back to data space.
    pub fn inverse_batch(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = z.to_vec();
        match self.arch {
            Architecture::Spline { .. } => {
                let splines = self.splines();
                for v in out.iter_mut() {
                    for s in splines.iter().rev() {
                        *v = s.inverse(*v);
                    }
                }
            }
            Architecture::Coupling { .. } => {
                let net = self.arch.net();
                let mut tape = CouplingBatchTape::default();
                for chunk in out.chunks_mut(2 * CHUNK) {
                    let mut cols: [Vec<f64>; 2] = [
                        chunk.iter().step_by(2).copied().collect(),
                        chunk.iter().skip(1).step_by(2).copied().collect(),
                    ];
                    for l in (0..self.arch.layer_count()).rev() {
                        self.coupling(&net, l).inverse_batch(&mut cols, &mut tape);
                    }
                    for (b, p) in chunk.chunks_exact_mut(2).enumerate() {
                        p[0] = cols[0][b];
                        p[1] = cols[1][b];
                    }
                }
            }
        }
        let s = &self.standardization;
        for p in out.chunks_exact_mut(d) {
            for ((v, m), sc) in p.iter_mut().zip(&s.mean).zip(&s.scale) {
                *v = m + sc * *v;
            }
        }
        out
    }

    /// `count` draws, row-major, by pushing prior samples through `T⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..count * self.dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.inverse_batch(&z)
    }

    /// Summed negative log-likelihood of `batch` and its exact gradient with
    /// respect to [`FlowModel::params`].
    pub fn nll_loss_and_grad(&self, batch: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.nll_accumulate(batch, &mut grad);
        (loss, grad)
    }

    /// As [`FlowModel::nll_loss_and_grad`], adding into `grad`.
    pub fn nll_accumulate(&self, batch: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let n = batch.len() / d;
        let constant = n as f64 * (self.standardization.log_scale() + d as f64 * HALF_LN_2PI);
        let net = self.arch.net();
        let p = net.param_count();
        let mut scratch = Vec::new();
        let mut loss = constant;
        match self.arch {
            Architecture::Spline { bins, .. } => {
                let stack = self.spline_stack();
                let layers = stack.splines.len();
                let mut knots = vec![KnotGrad::zeros(bins); layers];
                let mut inputs = vec![0.0; layers];
                for i in 0..n {
                    let mut u = [0.0];
                    self.standardize(&batch[i..i + 1], &mut u);
                    let mut v = u[0];
                    for (l, s) in stack.splines.iter().enumerate() {
                        inputs[l] = v;
                        let (y, ld) = s.forward(v);
                        v = y;
                        loss -= ld;
                    }
                    loss += 0.5 * v * v;
                    let mut g = v;
                    for l in (0..layers).rev() {
                        g = stack.splines[l].backward(inputs[l], g, -1.0, &mut knots[l]);
                    }
                }
                let mut g_raw = vec![0.0; stack.param.raw_len()];
                for l in 0..layers {
                    g_raw.fill(0.0);
                    stack.param.backward(&stack.raws[l], &knots[l], &mut g_raw);
                    net.backward(
                        &self.params[l * p..(l + 1) * p],
                        &stack.tapes[l],
                        &g_raw,
                        &mut grad[l * p..(l + 1) * p],
                        None,
                        &mut scratch,
                    );
                }
            }
            Architecture::Coupling { .. } => {
                let layers: Vec<_> = (0..self.arch.layer_count())
                    .map(|l| self.coupling(&net, l))
                    .collect();
                let mut tapes = vec![CouplingBatchTape::default(); layers.len()];
                let mut bs = BackwardScratch::default();
                for chunk in batch.chunks(2 * CHUNK) {
                    let mut cols = self.standardized_columns(chunk);
                    let mut ld = vec![0.0; chunk.len() / 2];
                    for (layer, tape) in layers.iter().zip(&mut tapes) {
                        layer.forward_batch(&mut cols, &mut ld, tape);
                    }
                    for b in 0..ld.len() {
                        loss += 0.5 * (cols[0][b] * cols[0][b] + cols[1][b] * cols[1][b]) - ld[b];
                    }
                    // ∂(½‖z‖²)/∂z = z; every log-det enters with weight −1.
                    for l in (0..layers.len()).rev() {
                        let (g_mu, g_nu) = grad[2 * l * p..(2 * l + 2) * p].split_at_mut(p);
                        layers[l].backward_batch(&tapes[l], &mut cols, -1.0, g_mu, g_nu, &mut bs);
                    }
                }
                let _ = &mut scratch;
            }
        }
        loss
    }

    /// Summed negative log-likelihood without gradients.
    pub fn nll(&self, batch: &[f64]) -> f64 {
        -self.log_density_batch(batch).iter().sum::<f64>()
    }
}

/// `log N(0, I)` at `z`.
pub fn standard_normal_log_density(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 0.5 * z.len() as f64 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_models_give_prior_density() {
        let m1 = FlowModel::zeros(Architecture::nsf1d()).unwrap();
        assert!((m1.log_density(&[0.0]) + 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        let m2 =
            FlowModel::init(Architecture::realnvp2d(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((m2.log_density(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-12);
        assert!(
            (m2.log_density(&[0.3, -1.0]) - standard_normal_log_density(&[0.3, -1.0])).abs()
                < 1e-12
        );
    }

    #[test]
    fn identity_batch_loss() {
        let m = FlowModel::zeros(Architecture::nsf1d()).unwrap();
        let (loss, grad) = m.nll_loss_and_grad(&[0.0]);
        assert!((loss - 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        assert_eq!(grad.len(), m.params.len());
    }

    #[test]
    fn architecture_sizes() {
        let a = Architecture::nsf1d();
        let p = 32 + 32 + 2 * (32 * 32 + 32) + 32 * 14 + 14;
        assert_eq!(a.param_count(), 32 * p);
        let c = Architecture::realnvp2d();
        assert_eq!(c.param_count(), 6 * (16 + 16 + 2 * 272 + 17));
    }
}
