//! Tensor-product Simpson rules over ε-balls.
//!
//! In 1D the ball is an interval and the rule is exact Simpson. In 2D the
//! rule covers the square `[z-ε, z+ε]²`; each node's weight is multiplied
//! by the fraction of its cell that lies inside the disk, so boundary
//! nodes contribute partially instead of being switched on or off.

use crate::error::{Error, Result};

/// Sub-samples per cell axis when measuring disk coverage.
const COVERAGE_SUBSAMPLES: usize = 32;

/// Composite Simpson weights for `n` (odd) equally spaced nodes, spacing `h`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Nodes (offsets from the ball centre) and weights of a ball rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRule {
    pub dim: usize,
    pub eps: f64,
    pub resolution: usize,
    /// Row-major `len × dim` offsets `x - z`.
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

fn disk_coverage(cx: f64, cy: f64, h: f64, eps: f64) -> f64 {
    let half = 0.5 * h;
    let corner_max = (cx.abs() + half).hypot(cy.abs() + half);
    if corner_max <= eps {
        return 1.0;
    }
    let nearest = (cx.abs() - half).max(0.0).hypot((cy.abs() - half).max(0.0));
    if nearest >= eps {
        return 0.0;
    }
    let k = COVERAGE_SUBSAMPLES;
    let step = h / k as f64;
    let mut inside = 0usize;
    for a in 0..k {
        let x = cx - half + (a as f64 + 0.5) * step;
        for b in 0..k {
            let y = cy - half + (b as f64 + 0.5) * step;
            if x * x + y * y < eps * eps {
                inside += 1;
            }
        }
    }
    inside as f64 / (k * k) as f64
}

impl BallRule {
    pub fn new(dim: usize, eps: f64, resolution: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Parameter(format!(
                "ball rules exist for n = 1, 2; got {dim}"
            )));
        }
        if resolution < 33 || resolution.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "quadrature resolution must be odd and at least 33, got {resolution}"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Parameter(format!(
                "ball radius must be positive, got {eps}"
            )));
        }
        let h = 2.0 * eps / (resolution - 1) as f64;
        let w = simpson_weights(resolution, h);
        let axis: Vec<f64> = (0..resolution).map(|i| -eps + i as f64 * h).collect();
        let (mut offsets, mut weights) = (Vec::new(), Vec::new());
        if dim == 1 {
            offsets = axis;
            weights = w;
        } else {
            for (i, &x) in axis.iter().enumerate() {
                for (j, &y) in axis.iter().enumerate() {
                    let cover = disk_coverage(x, y, h, eps);
                    if cover > 0.0 {
                        offsets.extend_from_slice(&[x, y]);
                        weights.push(w[i] * w[j] * cover);
                    }
                }
            }
        }
        Ok(Self {
            dim,
            eps,
            resolution,
            offsets,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Absolute node positions around `z`, row-major.
    pub fn nodes(&self, z: &[f64]) -> Vec<f64> {
        self.offsets
            .chunks_exact(self.dim)
            .flat_map(|o| o.iter().zip(z).map(|(a, b)| a + b))
            .collect()
    }
}

/// `∫_{‖x-z‖<ε} f(x) dx` by the ball rule.
pub fn ball_quadrature(
    f: impl Fn(&[f64]) -> f64,
    z: &[f64],
    eps: f64,
    resolution: usize,
) -> Result<f64> {
    let rule = BallRule::new(z.len(), eps, resolution)?;
    let nodes = rule.nodes(z);
    Ok(nodes
        .chunks_exact(z.len())
        .zip(&rule.weights)
        .map(|(x, w)| w * f(x))
        .sum())
}
