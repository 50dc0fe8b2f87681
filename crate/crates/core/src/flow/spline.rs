//! Monotonic rational-quadratic splines on `[-B, B]` with identity tails.
//!
//! Each of the `K` bins maps `[x_k, x_{k+1}]` onto `[y_k, y_{k+1}]` by a
//! ratio of quadratics that matches the knot values and the knot
//! derivatives `d_k`. The outer derivatives `d_0 = d_K = 1` make the spline
//! join the identity tails with a continuous first derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_BIN: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Knot widths, heights and interior derivatives of one spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqSplineParams {
    pub widths: Vec<f64>,
    pub heights: Vec<f64>,
    /// `K - 1` interior knot derivatives.
    pub derivs: Vec<f64>,
    pub bound: f64,
}

impl RqSplineParams {
    pub fn identity(bins: usize, bound: f64) -> Self {
        let w = 2.0 * bound / bins as f64;
        Self {
            widths: vec![w; bins],
            heights: vec![w; bins],
            derivs: vec![1.0; bins - 1],
            bound,
        }
    }

    pub fn bins(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.widths.len();
        if k == 0 || self.heights.len() != k || self.derivs.len() + 1 != k {
            return Err(Error::Parameter(
                "spline needs K widths, K heights and K-1 derivatives".into(),
            ));
        }
        if !(self.bound > 0.0) {
            return Err(Error::Parameter("spline bound must be positive".into()));
        }
        let all_positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !all_positive(&self.widths)
            || !all_positive(&self.heights)
            || !all_positive(&self.derivs)
        {
            return Err(Error::Parameter(
                "spline knots must be strictly positive".into(),
            ));
        }
        let span = 2.0 * self.bound;
        for (name, v) in [("widths", &self.widths), ("heights", &self.heights)] {
            let s: f64 = v.iter().sum();
            if (s - span).abs() > 1e-9 * span {
                return Err(Error::Parameter(format!(
                    "{name} sum to {s}, expected {span}"
                )));
            }
        }
        Ok(())
    }
}

/// Precomputed knot table.
#[derive(Debug, Clone, PartialEq)]
pub struct RqSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    bound: f64,
}

/// Gradient accumulator over knot positions and knot derivatives.
#[derive(Debug, Clone, Default)]
pub struct KnotGrad {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ds: Vec<f64>,
}

impl KnotGrad {
    pub fn zeros(bins: usize) -> Self {
        Self {
            xs: vec![0.0; bins + 1],
            ys: vec![0.0; bins + 1],
            ds: vec![0.0; bins + 1],
        }
    }

    pub fn clear(&mut self) {
        self.xs.fill(0.0);
        self.ys.fill(0.0);
        self.ds.fill(0.0);
    }
}

fn cumulative(bound: f64, sizes: &[f64]) -> Vec<f64> {
    let mut knots = Vec::with_capacity(sizes.len() + 1);
    let mut acc = -bound;
    knots.push(acc);
    for s in &sizes[..sizes.len() - 1] {
        acc += s;
        knots.push(acc);
    }
    knots.push(bound);
    knots
}

/// Bin quantities shared by the forward and backward passes.
struct BinEval {
    w: f64,
    h: f64,
    s: f64,
    xi: f64,
    d0: f64,
    d1: f64,
    num: f64,
    den: f64,
    m: f64,
}

impl RqSpline {
    pub fn new(params: &RqSplineParams) -> Self {
        let k = params.bins();
        let mut ds = Vec::with_capacity(k + 1);
        ds.push(1.0);
        ds.extend_from_slice(&params.derivs);
        ds.push(1.0);
        Self {
            xs: cumulative(params.bound, &params.widths),
            ys: cumulative(params.bound, &params.heights),
            ds,
            bound: params.bound,
        }
    }

    pub fn bins(&self) -> usize {
        self.xs.len() - 1
    }

    fn bin_of(knots: &[f64], v: f64) -> usize {
        let k = knots.len() - 1;
        let mut i = 0;
        while i + 1 < k && v >= knots[i + 1] {
            i += 1;
        }
        i
    }

    #[inline]
    fn eval_bin(&self, k: usize, x: f64) -> BinEval {
        let w = self.xs[k + 1] - self.xs[k];
        let h = self.ys[k + 1] - self.ys[k];
        let s = h / w;
        let xi = ((x - self.xs[k]) / w).clamp(0.0, 1.0);
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let q = xi * (1.0 - xi);
        let num = h * (s * xi * xi + d0 * q);
        let den = s + (d1 + d0 - 2.0 * s) * q;
        let m = d1 * xi * xi + 2.0 * s * q + d0 * (1.0 - xi) * (1.0 - xi);
        BinEval {
            w,
            h,
            s,
            xi,
            d0,
            d1,
            num,
            den,
            m,
        }
    }

    #[inline]
    fn inside(&self, v: f64) -> bool {
        v >= -self.bound && v <= self.bound
    }

    /// `(T(x), log T'(x))`.
    #[inline]
    pub fn forward(&self, x: f64) -> (f64, f64) {
        if !self.inside(x) {
            return (x, 0.0);
        }
        let k = Self::bin_of(&self.xs, x);
        let e = self.eval_bin(k, x);
        let y = self.ys[k] + e.num / e.den;
        let log_det = 2.0 * e.s.ln() + e.m.ln() - 2.0 * e.den.ln();
        (y, log_det)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if !self.inside(y) {
            return y;
        }
        let k = Self::bin_of(&self.ys, y);
        let w = self.xs[k + 1] - self.xs[k];
        let h = self.ys[k + 1] - self.ys[k];
        let s = h / w;
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let dy = y - self.ys[k];
        let c_sum = d1 + d0 - 2.0 * s;
        let a = h * (s - d0) + dy * c_sum;
        let b = h * d0 - dy * c_sum;
        let c = -s * dy;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        // Root form that stays stable when a is near zero.
        let xi = (2.0 * c) / (-b - disc.sqrt());
        let xi = if xi.is_finite() {
            xi.clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.xs[k] + xi * w
    }

    /// Backpropagates `gy = ∂L/∂T(x)` and `gl = ∂L/∂log T'(x)` through one
    /// evaluation at `x`. Knot gradients are accumulated into `acc`; the
    /// return value is `∂L/∂x`.
    pub fn backward(&self, x: f64, gy: f64, gl: f64, acc: &mut KnotGrad) -> f64 {
        if !self.inside(x) {
            return gy;
        }
        let k = Self::bin_of(&self.xs, x);
        let BinEval {
            w,
            h,
            s,
            xi,
            d0,
            d1,
            num,
            den,
            m,
        } = self.eval_bin(k, x);
        let q = xi * (1.0 - xi);
        let dq = 1.0 - 2.0 * xi;
        let c_sum = d1 + d0 - 2.0 * s;

        // y = y_k + num/den, partials over (h, s, ξ, d0, d1).
        let inv_den = 1.0 / den;
        let ratio = num * inv_den * inv_den;
        let dn_dh = s * xi * xi + d0 * q;
        let dn_ds = h * xi * xi;
        let dn_dxi = h * (2.0 * s * xi + d0 * dq);
        let dn_dd0 = h * q;
        let dd_ds = 1.0 - 2.0 * q;
        let dd_dxi = c_sum * dq;
        let dd_dd = q;
        let y_h = dn_dh * inv_den;
        let y_s = dn_ds * inv_den - ratio * dd_ds;
        let y_xi = dn_dxi * inv_den - ratio * dd_dxi;
        let y_d0 = dn_dd0 * inv_den - ratio * dd_dd;
        let y_d1 = -ratio * dd_dd;

        // log T' = 2 ln s + ln m - 2 ln den.
        let inv_m = 1.0 / m;
        let l_s = 2.0 / s + 2.0 * q * inv_m - 2.0 * dd_ds * inv_den;
        let dm_dxi = 2.0 * d1 * xi + 2.0 * s * dq - 2.0 * d0 * (1.0 - xi);
        let l_xi = dm_dxi * inv_m - 2.0 * dd_dxi * inv_den;
        let l_d0 = (1.0 - xi) * (1.0 - xi) * inv_m - 2.0 * dd_dd * inv_den;
        let l_d1 = xi * xi * inv_m - 2.0 * dd_dd * inv_den;

        let g_s = gy * y_s + gl * l_s;
        let g_xi = gy * y_xi + gl * l_xi;
        let mut g_h = gy * y_h;
        acc.ds[k] += gy * y_d0 + gl * l_d0;
        acc.ds[k + 1] += gy * y_d1 + gl * l_d1;

        // s = h / w, ξ = (x - x_k) / w.
        g_h += g_s / w;
        let mut g_w = -g_s * s / w;
        let g_x = g_xi / w;
        let mut g_xk = -g_xi / w;
        g_w += -g_xi * xi / w;
        g_xk -= g_w;
        acc.xs[k] += g_xk;
        acc.xs[k + 1] += g_w;
        acc.ys[k] += gy - g_h;
        acc.ys[k + 1] += g_h;
        g_x
    }
}

/// Maps an unconstrained vector `θ = [θw (K), θh (K), θd (K-1)]` to spline
/// parameters: softmax for widths and heights with a floor of
/// `MIN_BIN · 2B`, softplus for derivatives with a floor of
/// `MIN_DERIVATIVE`. `θ = 0` gives the identity spline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineParametrization {
    pub bins: usize,
    pub bound: f64,
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn derivative_shift() -> f64 {
    ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln()
}

impl SplineParametrization {
    pub fn raw_len(&self) -> usize {
        3 * self.bins - 1
    }

    pub fn params(&self, raw: &[f64]) -> RqSplineParams {
        let k = self.bins;
        let span = 2.0 * self.bound;
        let scale = 1.0 - MIN_BIN * k as f64;
        let to_sizes = |v: &[f64]| -> Vec<f64> {
            softmax(v)
                .into_iter()
                .map(|p| span * (MIN_BIN + scale * p))
                .collect()
        };
        let shift = derivative_shift();
        RqSplineParams {
            widths: to_sizes(&raw[..k]),
            heights: to_sizes(&raw[k..2 * k]),
            derivs: raw[2 * k..]
                .iter()
                .map(|&t| MIN_DERIVATIVE + softplus(t + shift))
                .collect(),
            bound: self.bound,
        }
    }

    /// Chains knot gradients back to `∂L/∂θ`, accumulated into `out`.
    pub fn backward(&self, raw: &[f64], knots: &KnotGrad, out: &mut [f64]) {
        let k = self.bins;
        let span = 2.0 * self.bound;
        let scale = 1.0 - MIN_BIN * k as f64;
        let chain_sizes = |logits: &[f64], knot_grad: &[f64], out: &mut [f64]| {
            // knot_j = -B + Σ_{i<j} size_i for interior j = 1..K-1.
            let mut g_size = vec![0.0; k];
            let mut running = 0.0;
            for j in (1..k).rev() {
                running += knot_grad[j];
                g_size[j - 1] = running;
            }
            let p = softmax(logits);
            let g_p: Vec<f64> = g_size.iter().map(|g| g * span * scale).collect();
            let dot: f64 = p.iter().zip(&g_p).map(|(a, b)| a * b).sum();
            for i in 0..k {
                out[i] += p[i] * (g_p[i] - dot);
            }
        };
        chain_sizes(&raw[..k], &knots.xs, &mut out[..k]);
        chain_sizes(&raw[k..2 * k], &knots.ys, &mut out[k..2 * k]);
        let shift = derivative_shift();
        for j in 0..k - 1 {
            out[2 * k + j] += knots.ds[j + 1] * sigmoid(raw[2 * k + j] + shift);
        }
    }
}
