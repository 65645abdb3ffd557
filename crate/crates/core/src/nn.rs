//! Small differentiable building blocks used by every trainable component.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Smooth activations available to the projection MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// tanh-approximated GELU.
    #[default]
    Gelu,
    Silu,
    Tanh,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()),
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_K * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for both weight and bias.
    pub fn fan_in_uniform(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: fan_in_uniform(out_dim, in_dim, rng),
            bias: Array1::from_shape_fn(out_dim, |_| {
                let bound = 1.0 / (in_dim as f64).sqrt();
                rng.random_range(-bound..bound)
            }),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        x: ArrayView1<f64>,
        dy: ArrayView1<f64>,
        grad: &mut Affine,
    ) -> Array1<f64> {
        accumulate_outer(&mut grad.weight, dy, x);
        grad.bias += &dy;
        self.weight.t().dot(&dy)
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }
}

/// `m += a bᵀ`.
pub fn accumulate_outer(m: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = m.row_mut(i);
        row.scaled_add(ai, &b);
    }
}

pub fn fan_in_uniform(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
    Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound))
}

/// Gaussian matrix with standard deviation `1/sqrt(in_dim)`.
pub fn gaussian_matrix(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0 / (in_dim.max(1) as f64).sqrt()).expect("valid std");
    Array2::from_shape_fn((out_dim, in_dim), |_| normal.sample(rng))
}

/// Deterministic RNG for a named component derived from a run seed.
pub fn component_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(tag.as_bytes());
    let mut salt = [0u8; 8];
    salt.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(salt))
}

/// Hex SHA-256 over the little-endian bytes of a sequence of values.
pub fn checksum<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn l2_normalize(v: &mut Array1<f64>) -> f64 {
    let norm = v.dot(v).sqrt();
    if norm > 0.0 {
        v.mapv_inplace(|x| x / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_derivatives_match_central_differences() {
        let h = 1e-5;
        for act in [
            Activation::Gelu,
            Activation::Silu,
            Activation::Tanh,
            Activation::Identity,
        ] {
            for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn component_rngs_differ_by_tag() {
        let a: u64 = component_rng(3, "a").random();
        let b: u64 = component_rng(3, "b").random();
        let a2: u64 = component_rng(3, "a").random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
