//! Trainable mask decoder head.
//!
//! Backbone tokens are mixed to `H` channels, bilinearly upsampled to the
//! input resolution, and combined with a per-pixel color term and the mean
//! prompt token before a tanh and a 1×1 readout:
//!
//! ```text
//! pre_p  = up(F U_fᵀ)_p + U_x rgb_p + V q + c
//! logit  = w · tanh(pre_p) + b
//! ```

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, sigmoid};
use crate::resample::bilinear_taps;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderHead {
    /// `H × C` token mix.
    pub u_f: Array2<f64>,
    /// `H × 3` color term.
    pub u_x: Array2<f64>,
    /// `H × token_dim` prompt term.
    pub v: Array2<f64>,
    pub c: Array1<f64>,
    pub w: Array1<f64>,
    /// Length-1 readout bias.
    pub b: Array1<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub hidden: Array3<f64>,
    pub prob: Array2<f64>,
}

impl DecoderHead {
    pub fn init(hidden: usize, channels: usize, token_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            u_f: fan_in_uniform(hidden, channels, rng),
            u_x: fan_in_uniform(hidden, 3, rng),
            v: fan_in_uniform(hidden, token_dim, rng),
            c: Array1::zeros(hidden),
            w: fan_in_uniform(1, hidden, rng).row(0).to_owned(),
            b: Array1::zeros(1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            u_f: Array2::zeros(self.u_f.dim()),
            u_x: Array2::zeros(self.u_x.dim()),
            v: Array2::zeros(self.v.dim()),
            c: Array1::zeros(self.c.len()),
            w: Array1::zeros(self.w.len()),
            b: Array1::zeros(1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self, channels: usize, token_dim: usize) -> Result<()> {
        let h = self.hidden();
        let checks = [
            ("decoder token mix", (h, channels), self.u_f.dim()),
            ("decoder color term", (h, 3), self.u_x.dim()),
            ("decoder prompt term", (h, token_dim), self.v.dim()),
            ("decoder readout", (h, 1), (self.w.len(), self.b.len())),
        ];
        for (stage, expected, got) in checks {
            if expected != got {
                return Err(Error::dim(
                    stage,
                    format!("{expected:?}"),
                    format!("{got:?}"),
                ));
            }
        }
        Ok(())
    }

    /// `features` is `(gh·gw, C)` in row-major grid order, `rgb` is `(3, R, R)`.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        grid: (usize, usize),
        rgb: &Array3<f64>,
        q: ArrayView1<f64>,
    ) -> DecoderTrace {
        let (_, rh, rw) = rgb.dim();
        let (gh, gw) = grid;
        let h = self.hidden();
        let mixed = features.dot(&self.u_f.t());
        let ty = bilinear_taps(gh, rh);
        let tx = bilinear_taps(gw, rw);
        let shift = self.v.dot(&q) + &self.c;
        let mut hidden = Array3::zeros((h, rh, rw));
        let mut prob = Array2::zeros((rh, rw));
        let mut pre = vec![0.0; h];
        for y in 0..rh {
            for x in 0..rw {
                for (k, p) in pre.iter_mut().enumerate() {
                    let mut acc = shift[k];
                    for &(yy, wy) in &ty[y] {
                        for &(xx, wx) in &tx[x] {
                            acc += wy * wx * mixed[[yy * gw + xx, k]];
                        }
                    }
                    for ch in 0..3 {
                        acc += self.u_x[[k, ch]] * rgb[[ch, y, x]];
                    }
                    *p = acc;
                }
                let mut logit = self.b[0];
                for (k, &p) in pre.iter().enumerate() {
                    let t = p.tanh();
                    hidden[[k, y, x]] = t;
                    logit += self.w[k] * t;
                }
                prob[[y, x]] = sigmoid(logit);
            }
        }
        DecoderTrace { hidden, prob }
    }

    /// Accumulates parameter gradients; returns `dL/d features` and `dL/dq`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        features: &Array2<f64>,
        grid: (usize, usize),
        rgb: &Array3<f64>,
        q: ArrayView1<f64>,
        trace: &DecoderTrace,
        d_prob: &Array2<f64>,
        grad: &mut DecoderHead,
    ) -> (Array2<f64>, Array1<f64>) {
        let (_, rh, rw) = rgb.dim();
        let (gh, gw) = grid;
        let h = self.hidden();
        let ty = bilinear_taps(gh, rh);
        let tx = bilinear_taps(gw, rw);
        let mut d_mixed = Array2::<f64>::zeros((gh * gw, h));
        let mut d_shift = Array1::<f64>::zeros(h);
        for y in 0..rh {
            for x in 0..rw {
                let p = trace.prob[[y, x]];
                let d_logit = d_prob[[y, x]] * p * (1.0 - p);
                if d_logit == 0.0 {
                    continue;
                }
                grad.b[0] += d_logit;
                for k in 0..h {
                    let t = trace.hidden[[k, y, x]];
                    grad.w[k] += d_logit * t;
                    let d_pre = d_logit * self.w[k] * (1.0 - t * t);
                    d_shift[k] += d_pre;
                    for ch in 0..3 {
                        grad.u_x[[k, ch]] += d_pre * rgb[[ch, y, x]];
                    }
                    for &(yy, wy) in &ty[y] {
                        for &(xx, wx) in &tx[x] {
                            d_mixed[[yy * gw + xx, k]] += wy * wx * d_pre;
                        }
                    }
                }
            }
        }
        grad.c += &d_shift;
        for k in 0..h {
            grad.v.row_mut(k).scaled_add(d_shift[k], &q);
        }
        grad.u_f += &d_mixed.t().dot(features);
        let d_features = d_mixed.dot(&self.u_f);
        let d_q = self.v.t().dot(&d_shift);
        (d_features, d_q)
    }
}

/// Mean over prompt tokens.
pub fn mean_token(tokens: &Array2<f64>) -> Array1<f64> {
    tokens.mean_axis(Axis(0)).expect("at least one token")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::component_rng;

    #[test]
    fn probabilities_in_unit_interval_and_shape_matches() {
        let mut rng = component_rng(1, "dec");
        let head = DecoderHead::init(4, 5, 3, &mut rng);
        let feats = Array2::from_shape_fn((6, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let rgb = Array3::from_shape_fn((3, 8, 12), |(c, y, x)| ((c + y + x) % 7) as f64 / 7.0);
        let q = ndarray::array![0.2, -0.1, 0.4];
        let tr = head.forward(&feats, (2, 3), &rgb, q.view());
        assert_eq!(tr.prob.dim(), (8, 12));
        assert!(tr.prob.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
