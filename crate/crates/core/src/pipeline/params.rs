//! The trainable parameter set and its optimizer.

use serde::{Deserialize, Serialize};

use super::decoder::DecoderHead;
use crate::adapter::AdapterStack;
use crate::config::OptimizerConfig;
use crate::fusion::ProjectionParams;
use crate::nn::Affine;

/// Name of the decoder group in frozen sets.
pub const DECODER_GROUP: &str = "decoder_head";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainable {
    pub projection: ProjectionParams,
    pub adapters: AdapterStack,
    pub decoder: DecoderHead,
}

/// A named parameter tensor: `(name, group, shape, values)`.
pub type TensorRef<'a> = (String, &'static str, Vec<usize>, &'a [f64]);
pub type TensorMut<'a> = (String, &'static str, &'a mut [f64]);

fn zero_affine(a: &Affine) -> Affine {
    Affine::zeros(a.out_dim(), a.in_dim())
}

macro_rules! slice {
    ($a:expr) => {
        $a.as_slice_memory_order()
            .expect("contiguous parameter tensor")
    };
}

macro_rules! slice_mut {
    ($a:expr) => {
        $a.as_slice_memory_order_mut()
            .expect("contiguous parameter tensor")
    };
}

impl Trainable {
    pub fn zeros_like(&self) -> Self {
        let p = &self.projection;
        let mut adapters = self.adapters.clone();
        adapters.maps = adapters.maps.iter().map(zero_affine).collect();
        Self {
            projection: ProjectionParams {
                w_audio: ndarray::Array2::zeros(p.w_audio.dim()),
                w_visual: ndarray::Array2::zeros(p.w_visual.dim()),
                mlp_hidden: zero_affine(&p.mlp_hidden),
                mlp_out: zero_affine(&p.mlp_out),
                activation: p.activation,
            },
            adapters,
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Every tensor in a fixed order. Groups: `projection`, `adapters`, `decoder_head`.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let p = &self.projection;
        let d = &self.decoder;
        let mut out: Vec<TensorRef<'_>> = vec![
            (
                "projection.w_audio".into(),
                "projection",
                p.w_audio.shape().to_vec(),
                slice!(p.w_audio),
            ),
            (
                "projection.w_visual".into(),
                "projection",
                p.w_visual.shape().to_vec(),
                slice!(p.w_visual),
            ),
            (
                "projection.mlp_hidden.weight".into(),
                "projection",
                p.mlp_hidden.weight.shape().to_vec(),
                slice!(p.mlp_hidden.weight),
            ),
            (
                "projection.mlp_hidden.bias".into(),
                "projection",
                p.mlp_hidden.bias.shape().to_vec(),
                slice!(p.mlp_hidden.bias),
            ),
            (
                "projection.mlp_out.weight".into(),
                "projection",
                p.mlp_out.weight.shape().to_vec(),
                slice!(p.mlp_out.weight),
            ),
            (
                "projection.mlp_out.bias".into(),
                "projection",
                p.mlp_out.bias.shape().to_vec(),
                slice!(p.mlp_out.bias),
            ),
        ];
        for (&j, m) in self
            .adapters
            .layer_selection
            .iter()
            .zip(&self.adapters.maps)
        {
            out.push((
                format!("adapters.layer{j}.weight"),
                "adapters",
                m.weight.shape().to_vec(),
                slice!(m.weight),
            ));
            out.push((
                format!("adapters.layer{j}.bias"),
                "adapters",
                m.bias.shape().to_vec(),
                slice!(m.bias),
            ));
        }
        out.extend([
            (
                "decoder.u_f".to_string(),
                DECODER_GROUP,
                d.u_f.shape().to_vec(),
                slice!(d.u_f),
            ),
            (
                "decoder.u_x".to_string(),
                DECODER_GROUP,
                d.u_x.shape().to_vec(),
                slice!(d.u_x),
            ),
            (
                "decoder.v".to_string(),
                DECODER_GROUP,
                d.v.shape().to_vec(),
                slice!(d.v),
            ),
            (
                "decoder.c".to_string(),
                DECODER_GROUP,
                d.c.shape().to_vec(),
                slice!(d.c),
            ),
            (
                "decoder.w".to_string(),
                DECODER_GROUP,
                d.w.shape().to_vec(),
                slice!(d.w),
            ),
            (
                "decoder.b".to_string(),
                DECODER_GROUP,
                d.b.shape().to_vec(),
                slice!(d.b),
            ),
        ]);
        out
    }

    /// Same order as [`Trainable::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let p = &mut self.projection;
        let d = &mut self.decoder;
        let mut out: Vec<TensorMut<'_>> = vec![
            (
                "projection.w_audio".into(),
                "projection",
                slice_mut!(p.w_audio),
            ),
            (
                "projection.w_visual".into(),
                "projection",
                slice_mut!(p.w_visual),
            ),
            (
                "projection.mlp_hidden.weight".into(),
                "projection",
                slice_mut!(p.mlp_hidden.weight),
            ),
            (
                "projection.mlp_hidden.bias".into(),
                "projection",
                slice_mut!(p.mlp_hidden.bias),
            ),
            (
                "projection.mlp_out.weight".into(),
                "projection",
                slice_mut!(p.mlp_out.weight),
            ),
            (
                "projection.mlp_out.bias".into(),
                "projection",
                slice_mut!(p.mlp_out.bias),
            ),
        ];
        for (&j, m) in self
            .adapters
            .layer_selection
            .iter()
            .zip(self.adapters.maps.iter_mut())
        {
            out.push((
                format!("adapters.layer{j}.weight"),
                "adapters",
                slice_mut!(m.weight),
            ));
            out.push((
                format!("adapters.layer{j}.bias"),
                "adapters",
                slice_mut!(m.bias),
            ));
        }
        out.extend([
            ("decoder.u_f".to_string(), DECODER_GROUP, slice_mut!(d.u_f)),
            ("decoder.u_x".to_string(), DECODER_GROUP, slice_mut!(d.u_x)),
            ("decoder.v".to_string(), DECODER_GROUP, slice_mut!(d.v)),
            ("decoder.c".to_string(), DECODER_GROUP, slice_mut!(d.c)),
            ("decoder.w".to_string(), DECODER_GROUP, slice_mut!(d.w)),
            ("decoder.b".to_string(), DECODER_GROUP, slice_mut!(d.b)),
        ]);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: OptimizerConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: OptimizerConfig, params: &Trainable) -> Self {
        let sizes: Vec<usize> = params
            .tensors()
            .iter()
            .map(|(_, _, _, v)| v.len())
            .collect();
        Self {
            config,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update of every tensor whose group is not in `frozen`.
    pub fn step(
        &mut self,
        params: &mut Trainable,
        grads: &Trainable,
        frozen: &dyn Fn(&str) -> bool,
    ) {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let grads = grads.tensors();
        for (k, (_, group, values)) in params.tensors_mut().into_iter().enumerate() {
            if frozen(group) {
                continue;
            }
            let g = grads[k].3;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..values.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                values[i] -= c.learning_rate * c.weight_decay * values[i];
                values[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.eps);
            }
        }
    }
}
