//! Two-dimensional affine coupling layers.
//!
//! One coordinate passes through unchanged and conditions the other:
//! `z_t = (x_t·e^{μ(x_p)} + ν(x_p)) / C`, so `log|det J| = μ(x_p) − ln C`.

use serde::{Deserialize, Serialize};

use super::dense::{BatchTape, DenseNet, Tape};

/// Which coordinate a layer transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    TransformX2,
    TransformX1,
}

impl Orientation {
    /// `(passthrough, transformed)` coordinate indices.
    #[inline]
    pub fn indices(self) -> (usize, usize) {
        match self {
            Orientation::TransformX2 => (0, 1),
            Orientation::TransformX1 => (1, 0),
        }
    }
}

/// Parameters of one coupling layer, borrowed from a model's flat vector.
#[derive(Debug, Clone, Copy)]
pub struct Coupling<'a> {
    pub net: &'a DenseNet,
    pub mu: &'a [f64],
    pub nu: &'a [f64],
    pub orientation: Orientation,
    pub scale_c: f64,
}

/// Network activations kept between forward and backward.
#[derive(Debug, Clone, Default)]
pub struct CouplingTape {
    mu: Tape,
    nu: Tape,
}

/// Batched counterpart of [`CouplingTape`]; also keeps the transformed
/// coordinate's inputs.
#[derive(Debug, Clone, Default)]
pub struct CouplingBatchTape {
    mu: BatchTape,
    nu: BatchTape,
    trans_in: Vec<f64>,
}

impl Coupling<'_> {
    #[inline]
    fn shift_scale(&self, pass: f64, tape: &mut CouplingTape) -> (f64, f64) {
        self.net.forward(self.mu, &[pass], &mut tape.mu);
        self.net.forward(self.nu, &[pass], &mut tape.nu);
        (tape.mu.output(self.net)[0], tape.nu.output(self.net)[0])
    }

    pub fn forward(&self, x: [f64; 2], tape: &mut CouplingTape) -> ([f64; 2], f64) {
        let (p, t) = self.orientation.indices();
        let (mu, nu) = self.shift_scale(x[p], tape);
        let mut z = x;
        z[t] = (x[t] * mu.exp() + nu) / self.scale_c;
        (z, mu - self.scale_c.ln())
    }

    pub fn inverse(&self, z: [f64; 2], tape: &mut CouplingTape) -> [f64; 2] {
        let (p, t) = self.orientation.indices();
        let (mu, nu) = self.shift_scale(z[p], tape);
        let mut x = z;
        x[t] = (self.scale_c * z[t] - nu) * (-mu).exp();
        x
    }

    /// In-place forward map of coordinate columns `cols[k][b]`, adding each
    /// point's log-det into `ld`.
    pub fn forward_batch(
        &self,
        cols: &mut [Vec<f64>; 2],
        ld: &mut [f64],
        tape: &mut CouplingBatchTape,
    ) {
        let (p, t) = self.orientation.indices();
        let batch = cols[p].len();
        self.net
            .forward_batch(self.mu, &cols[p], batch, &mut tape.mu);
        self.net
            .forward_batch(self.nu, &cols[p], batch, &mut tape.nu);
        tape.trans_in.clear();
        tape.trans_in.extend_from_slice(&cols[t]);
        let ln_c = self.scale_c.ln();
        let mu = tape.mu.output(self.net);
        let nu = tape.nu.output(self.net);
        for b in 0..batch {
            cols[t][b] = (cols[t][b] * mu[b].exp() + nu[b]) / self.scale_c;
            ld[b] += mu[b] - ln_c;
        }
    }

    pub fn inverse_batch(&self, cols: &mut [Vec<f64>; 2], tape: &mut CouplingBatchTape) {
        let (p, t) = self.orientation.indices();
        let batch = cols[p].len();
        self.net
            .forward_batch(self.mu, &cols[p], batch, &mut tape.mu);
        self.net
            .forward_batch(self.nu, &cols[p], batch, &mut tape.nu);
        let mu = tape.mu.output(self.net);
        let nu = tape.nu.output(self.net);
        for b in 0..batch {
            cols[t][b] = (self.scale_c * cols[t][b] - nu[b]) * (-mu[b]).exp();
        }
    }

    /// Batched backward pass: `g` holds `∂L/∂z` on entry and `∂L/∂x` on
    /// exit; every point's log-det has upstream gradient `gl`.
    pub fn backward_batch(
        &self,
        tape: &CouplingBatchTape,
        g: &mut [Vec<f64>; 2],
        gl: f64,
        grad_mu: &mut [f64],
        grad_nu: &mut [f64],
        scratch: &mut BackwardScratch,
    ) {
        let (p, t) = self.orientation.indices();
        let batch = g[t].len();
        let mu = tape.mu.output(self.net);
        let s = scratch;
        s.g_mu.resize(batch, 0.0);
        s.g_nu.resize(batch, 0.0);
        s.d_mu.resize(batch, 0.0);
        s.d_nu.resize(batch, 0.0);
        for b in 0..batch {
            let e_over_c = mu[b].exp() / self.scale_c;
            s.g_mu[b] = g[t][b] * tape.trans_in[b] * e_over_c + gl;
            s.g_nu[b] = g[t][b] / self.scale_c;
            g[t][b] *= e_over_c;
        }
        self.net.backward_batch(
            self.mu,
            &tape.mu,
            &s.g_mu,
            grad_mu,
            Some(&mut s.d_mu),
            &mut s.net,
        );
        self.net.backward_batch(
            self.nu,
            &tape.nu,
            &s.g_nu,
            grad_nu,
            Some(&mut s.d_nu),
            &mut s.net,
        );
        for ((gp, dm), dn) in g[p][..batch].iter_mut().zip(&s.d_mu).zip(&s.d_nu) {
            *gp += dm + dn;
        }
    }

    /// Given `∂L/∂z` and `∂L/∂log_det` for the forward pass that filled
    /// `tape`, accumulates network gradients and returns `∂L/∂x`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: [f64; 2],
        tape: &CouplingTape,
        gz: [f64; 2],
        gl: f64,
        grad_mu: &mut [f64],
        grad_nu: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> [f64; 2] {
        let (p, t) = self.orientation.indices();
        let mu = tape.mu.output(self.net)[0];
        let e_over_c = mu.exp() / self.scale_c;
        let g_mu = gz[t] * x[t] * e_over_c + gl;
        let g_nu = gz[t] / self.scale_c;
        let mut d_mu = [0.0];
        let mut d_nu = [0.0];
        self.net.backward(
            self.mu,
            &tape.mu,
            &[g_mu],
            grad_mu,
            Some(&mut d_mu),
            scratch,
        );
        self.net.backward(
            self.nu,
            &tape.nu,
            &[g_nu],
            grad_nu,
            Some(&mut d_nu),
            scratch,
        );
        let mut gx = [0.0; 2];
        gx[t] = gz[t] * e_over_c;
        gx[p] = gz[p] + d_mu[0] + d_nu[0];
        gx
    }
}

/// Reusable buffers for [`Coupling::backward_batch`].
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    g_mu: Vec<f64>,
    g_nu: Vec<f64>,
    d_mu: Vec<f64>,
    d_nu: Vec<f64>,
    net: Vec<f64>,
}
