//! Audio/visual prompt construction.
//!
//! Both normalized embeddings are projected into a shared space by bias-free
//! linear maps (`f_clap = W_a a`, `f_clip = W_v v`), combined by elementwise
//! product, and mapped into the text-prompt space by a two-layer MLP with an
//! activation after the hidden layer only. The fused vector is not
//! re-normalized.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{AudioEmbedding, ImageEmbedding};
use crate::error::{Error, Result};
use crate::nn::{accumulate_outer, fan_in_uniform, Activation, Affine};

/// Which vector prompts the model.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    /// `f_clip ⊙ f_clap`.
    #[default]
    Fused,
    /// `f_clip` alone (vision only).
    ClipOnly,
    /// `f_clap` alone (audio only).
    ClapOnly,
}

impl PromptSource {
    pub const ALL: [PromptSource; 3] = [
        PromptSource::ClipOnly,
        PromptSource::ClapOnly,
        PromptSource::Fused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptSource::Fused => "fused",
            PromptSource::ClipOnly => "clip_only",
            PromptSource::ClapOnly => "clap_only",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            PromptSource::Fused => "f_CLIP ⊙ f_CLAP",
            PromptSource::ClipOnly => "CLIP",
            PromptSource::ClapOnly => "CLAP",
        }
    }
}

impl std::str::FromStr for PromptSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fused" => Ok(PromptSource::Fused),
            "clip_only" | "clip" => Ok(PromptSource::ClipOnly),
            "clap_only" | "clap" => Ok(PromptSource::ClapOnly),
            other => Err(format!("unknown prompt source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    /// `d_s × d_a`.
    pub w_audio: Array2<f64>,
    /// `d_s × d_v`.
    pub w_visual: Array2<f64>,
    pub mlp_hidden: Affine,
    pub mlp_out: Affine,
    pub activation: Activation,
}

impl ProjectionParams {
    /// Fan-in-scaled uniform initialization.
    pub fn init(
        d_a: usize,
        d_v: usize,
        d_s: usize,
        d_h: usize,
        d_text: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            w_audio: fan_in_uniform(d_s, d_a, rng),
            w_visual: fan_in_uniform(d_s, d_v, rng),
            mlp_hidden: Affine::fan_in_uniform(d_h, d_s, rng),
            mlp_out: Affine::fan_in_uniform(d_text, d_h, rng),
            activation,
        }
    }

    pub fn zeros(d_a: usize, d_v: usize, d_s: usize, d_h: usize, d_text: usize) -> Self {
        Self {
            w_audio: Array2::zeros((d_s, d_a)),
            w_visual: Array2::zeros((d_s, d_v)),
            mlp_hidden: Affine::zeros(d_h, d_s),
            mlp_out: Affine::zeros(d_text, d_h),
            activation: Activation::default(),
        }
    }

    pub fn d_s(&self) -> usize {
        self.w_audio.nrows()
    }

    pub fn d_text(&self) -> usize {
        self.mlp_out.out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d_s = self.d_s();
        if self.w_visual.nrows() != d_s {
            return Err(Error::dim("W_v rows", d_s, self.w_visual.nrows()));
        }
        if self.mlp_hidden.in_dim() != d_s {
            return Err(Error::dim(
                "mlp hidden input",
                d_s,
                self.mlp_hidden.in_dim(),
            ));
        }
        if self.mlp_out.in_dim() != self.mlp_hidden.out_dim() {
            return Err(Error::dim(
                "mlp output input",
                self.mlp_hidden.out_dim(),
                self.mlp_out.in_dim(),
            ));
        }
        let finite = self
            .w_audio
            .iter()
            .chain(self.w_visual.iter())
            .all(|v| v.is_finite())
            && self.mlp_hidden.is_finite()
            && self.mlp_out.is_finite();
        if !finite {
            return Err(Error::NonFinite("projection parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFeature {
    pub f_clap: Array1<f64>,
    pub f_clip: Array1<f64>,
    /// Vector fed to the MLP: `f_clip ⊙ f_clap` for the fused source, the
    /// single projection for the `*_only` sources.
    pub fused: Array1<f64>,
    pub text_space: Array1<f64>,
    pub source: PromptSource,
}

pub fn project_audio(a: &AudioEmbedding, params: &ProjectionParams) -> Result<Array1<f64>> {
    if a.dim() != params.w_audio.ncols() {
        return Err(Error::dim(
            "audio embedding",
            params.w_audio.ncols(),
            a.dim(),
        ));
    }
    Ok(params.w_audio.dot(&a.0))
}

pub fn project_visual(v: &ImageEmbedding, params: &ProjectionParams) -> Result<Array1<f64>> {
    if v.dim() != params.w_visual.ncols() {
        return Err(Error::dim(
            "image embedding",
            params.w_visual.ncols(),
            v.dim(),
        ));
    }
    Ok(params.w_visual.dot(&v.0))
}

/// Elementwise (Hadamard) product.
pub fn fuse(f_clip: ArrayView1<f64>, f_clap: ArrayView1<f64>) -> Result<Array1<f64>> {
    if f_clip.len() != f_clap.len() {
        return Err(Error::dim("fusion operands", f_clip.len(), f_clap.len()));
    }
    Ok(&f_clip * &f_clap)
}

/// Hidden pre-activation and activation of the MLP, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub hidden_pre: Array1<f64>,
    pub hidden: Array1<f64>,
}

pub fn to_text_space(fused: ArrayView1<f64>, params: &ProjectionParams) -> Result<Array1<f64>> {
    Ok(to_text_space_traced(fused, params)?.0)
}

pub fn to_text_space_traced(
    fused: ArrayView1<f64>,
    params: &ProjectionParams,
) -> Result<(Array1<f64>, MlpTrace)> {
    if fused.len() != params.mlp_hidden.in_dim() {
        return Err(Error::dim(
            "mlp input",
            params.mlp_hidden.in_dim(),
            fused.len(),
        ));
    }
    if fused.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mlp input".into()));
    }
    let hidden_pre = params.mlp_hidden.forward(fused);
    let hidden = hidden_pre.mapv(|x| params.activation.apply(x));
    let out = params.mlp_out.forward(hidden.view());
    Ok((out, MlpTrace { hidden_pre, hidden }))
}

pub fn build_prompt(
    a: &AudioEmbedding,
    v: &ImageEmbedding,
    params: &ProjectionParams,
    source: PromptSource,
) -> Result<PromptFeature> {
    Ok(build_prompt_traced(a, v, params, source)?.0)
}

pub fn build_prompt_traced(
    a: &AudioEmbedding,
    v: &ImageEmbedding,
    params: &ProjectionParams,
    source: PromptSource,
) -> Result<(PromptFeature, MlpTrace)> {
    let f_clap = project_audio(a, params)?;
    let f_clip = project_visual(v, params)?;
    if f_clap.len() != f_clip.len() {
        return Err(Error::dim(
            "projected embeddings",
            f_clip.len(),
            f_clap.len(),
        ));
    }
    let fused = match source {
        PromptSource::Fused => fuse(f_clip.view(), f_clap.view())?,
        PromptSource::ClipOnly => f_clip.clone(),
        PromptSource::ClapOnly => f_clap.clone(),
    };
    let (text_space, trace) = to_text_space_traced(fused.view(), params)?;
    Ok((
        PromptFeature {
            f_clap,
            f_clip,
            fused,
            text_space,
            source,
        },
        trace,
    ))
}

/// Accumulates parameter gradients of a scalar loss into `grad`.
///
/// `d_text` is `dL/d text_space`; `d_fused_extra` is any gradient reaching the
/// fused vector by another route (the adapter tap).
#[allow(clippy::too_many_arguments)]
pub fn backward(
    a: &AudioEmbedding,
    v: &ImageEmbedding,
    params: &ProjectionParams,
    prompt: &PromptFeature,
    trace: &MlpTrace,
    d_text: ArrayView1<f64>,
    d_fused_extra: Option<ArrayView1<f64>>,
    grad: &mut ProjectionParams,
) {
    let d_hidden = params
        .mlp_out
        .backward(trace.hidden.view(), d_text, &mut grad.mlp_out);
    let d_hidden_pre = &d_hidden * &trace.hidden_pre.mapv(|x| params.activation.derivative(x));
    let mut d_fused = params.mlp_hidden.backward(
        prompt.fused.view(),
        d_hidden_pre.view(),
        &mut grad.mlp_hidden,
    );
    if let Some(extra) = d_fused_extra {
        d_fused += &extra;
    }
    let (d_clip, d_clap) = match prompt.source {
        PromptSource::Fused => (&d_fused * &prompt.f_clap, &d_fused * &prompt.f_clip),
        PromptSource::ClipOnly => (d_fused, Array1::zeros(prompt.f_clap.len())),
        PromptSource::ClapOnly => (Array1::zeros(prompt.f_clip.len()), d_fused),
    };
    accumulate_outer(&mut grad.w_visual, d_clip.view(), v.0.view());
    accumulate_outer(&mut grad.w_audio, d_clap.view(), a.0.view());
}
