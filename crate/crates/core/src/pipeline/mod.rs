//! End-to-end model: frozen encoders, the trainable prompt path, adapters and
//! the mask decoder head. Inference, training, evaluation and checkpoints.
//!
//! Frames are processed independently. Each frame is resized to the square
//! input resolution for the backbone and the decoder, and the soft mask is
//! resized back to the frame's native size on output.

mod checkpoint;
pub mod decoder;
mod manifest;
pub mod params;
mod train;

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decoder::{DecoderHead, DecoderTrace};
pub use manifest::{read_loss_csv, write_loss_csv, LossRecord, RunManifest};
pub use params::{AdamW, Trainable, DECODER_GROUP};
pub use train::{train, TrainOutcome};

use crate::adapter::{AdapterStack, AdapterTap};
use crate::config::{EvalConfig, RunConfig};
use crate::datamodel::{AudioSegment, Frame, MaskSet, VideoClip};
use crate::encoders::{
    AudioEmbedding, BackendDescriptor, EncoderSuite, ImageEmbedding, PromptTokens,
};
use crate::error::{Error, Result};
use crate::fusion::{self, MlpTrace, ProjectionParams, PromptFeature};
use crate::metrics::{self, MetricsReport};
use crate::nn::component_rng;
use crate::resample::{resize_bilinear_2d, resize_bilinear_chw};

/// Encoder components that never receive updates.
pub const ALWAYS_FROZEN: [&str; 4] = [
    "audio_encoder",
    "backbone_trunk",
    "image_encoder",
    "multimodal_encoder",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: RunConfig,
    pub descriptor: BackendDescriptor,
    pub params: Trainable,
    pub frozen: BTreeSet<String>,
    pub seed: u64,
    pub step: u64,
}

impl ModelState {
    /// Fresh state: seeded projection and decoder, zero adapters.
    pub fn init(config: &RunConfig, descriptor: &BackendDescriptor) -> Result<Self> {
        config.validate()?;
        descriptor.validate()?;
        let m = &config.model;
        let projection = ProjectionParams::init(
            descriptor.d_a,
            descriptor.d_v,
            m.d_s,
            m.d_h(),
            descriptor.d_text,
            m.activation,
            &mut component_rng(config.seed, "init/projection"),
        );
        let tap_dim = match m.adapter_tap {
            AdapterTap::Fused => m.d_s,
            AdapterTap::TextSpace => descriptor.d_text,
        };
        let adapters = AdapterStack::zeros(
            descriptor,
            m.adapter_layers.as_deref(),
            m.adapter_tap,
            tap_dim,
        )?;
        let decoder = DecoderHead::init(
            m.decoder_hidden,
            descriptor.output_channels(),
            descriptor.token_dim,
            &mut component_rng(config.seed, "init/decoder"),
        );
        Ok(Self {
            config: config.clone(),
            descriptor: descriptor.clone(),
            params: Trainable {
                projection,
                adapters,
                decoder,
            },
            frozen: frozen_set(config),
            seed: config.seed,
            step: 0,
        })
    }

    pub fn is_frozen(&self, group: &str) -> bool {
        self.frozen.contains(group)
    }

    /// Checks every component against the suite, naming the first stage that disagrees.
    pub fn check(&self, suite: &EncoderSuite) -> Result<()> {
        let d = suite.descriptor();
        let p = &self.params.projection;
        p.validate()?;
        if p.w_audio.ncols() != d.d_a {
            return Err(Error::dim("audio projection", d.d_a, p.w_audio.ncols()));
        }
        if p.w_visual.ncols() != d.d_v {
            return Err(Error::dim("visual projection", d.d_v, p.w_visual.ncols()));
        }
        if p.d_text() != d.d_text {
            return Err(Error::dim("text-space MLP output", d.d_text, p.d_text()));
        }
        let a = &self.params.adapters;
        a.validate()?;
        if a.layer_channels != d.channels {
            return Err(Error::dim(
                "adapter layer channels",
                format!("{:?}", d.channels),
                format!("{:?}", a.layer_channels),
            ));
        }
        let tap_dim = match a.tap {
            AdapterTap::Fused => p.d_s(),
            AdapterTap::TextSpace => p.d_text(),
        };
        if let Some(m) = a.maps.iter().find(|m| m.in_dim() != tap_dim) {
            return Err(Error::dim("adapter input", tap_dim, m.in_dim()));
        }
        self.params
            .decoder
            .validate(d.output_channels(), d.token_dim)
    }
}

pub fn frozen_set(config: &RunConfig) -> BTreeSet<String> {
    let mut s: BTreeSet<String> = ALWAYS_FROZEN.iter().map(|s| s.to_string()).collect();
    if !config.train.train_decoder {
        s.insert(DECODER_GROUP.to_string());
    }
    s
}

/// Frozen-encoder quantities of one frame at the model's input resolution.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub audio: AudioEmbedding,
    pub image: ImageEmbedding,
    /// Patch embedding `X_0`, `(tokens, channels[0])`.
    pub x0: Array2<f64>,
    pub grid: (usize, usize),
    /// Resized frame, `(3, R, R)`.
    pub rgb: Array3<f64>,
}

pub fn prepare_frame(
    suite: &EncoderSuite,
    frame: &Frame,
    audio: &AudioSegment,
    resolution: usize,
) -> Result<FrameInput> {
    let image = suite.encode_image(frame)?;
    let audio = suite.encode_audio(audio)?;
    let rgb = resize_bilinear_chw(&frame.pixels, resolution, resolution);
    let resized = Frame::new(frame.index, rgb);
    let grid = suite.token_grid(resolution, resolution)?;
    let x0 = suite.embed_patches(&resized)?;
    Ok(FrameInput {
        audio,
        image,
        x0,
        grid,
        rgb: resized.pixels,
    })
}

/// Everything the backward pass needs from one frame's forward pass.
#[derive(Debug, Clone)]
pub struct FrameForward {
    pub prompt: PromptFeature,
    pub mlp: MlpTrace,
    pub tokens: PromptTokens,
    pub q: Array1<f64>,
    pub layer_outputs: Vec<Array2<f64>>,
    pub decoder: DecoderTrace,
}

impl FrameForward {
    pub fn prob(&self) -> &Array2<f64> {
        &self.decoder.prob
    }
}

pub fn forward_frame(
    suite: &EncoderSuite,
    state: &ModelState,
    input: &FrameInput,
) -> Result<FrameForward> {
    let t = &state.config.train;
    let p = &state.params;
    let (prompt, mlp) =
        fusion::build_prompt_traced(&input.audio, &input.image, &p.projection, t.prompt_source)?;
    let tokens = suite.multimodal_tokens(prompt.text_space.view(), &input.image)?;
    let q = decoder::mean_token(&tokens.0);
    let n = input.x0.nrows();
    let layer_outputs = if t.adapter_enabled {
        let vectors: Vec<Option<Array1<f64>>> = (0..p.adapters.num_layers())
            .map(|j| {
                if p.adapters.map_for(j).is_some() {
                    p.adapters.layer_vector(&prompt, j).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let tensors: Vec<Array2<f64>> = vectors
            .iter()
            .enumerate()
            .map(|(j, v)| match v {
                Some(v) => v.broadcast((n, v.len())).expect("row broadcast").to_owned(),
                None => Array2::zeros((n, state.descriptor.layer_in_channels(j))),
            })
            .collect();
        let views: Vec<ArrayView2<f64>> = tensors.iter().map(|t| t.view()).collect();
        suite.run_layers(&input.x0, Some(&views))
    } else {
        suite.run_layers(&input.x0, None)
    };
    let features = layer_outputs.last().expect("at least one layer");
    let decoder = p
        .decoder
        .forward(features, input.grid, &input.rgb, q.view());
    Ok(FrameForward {
        prompt,
        mlp,
        tokens,
        q,
        layer_outputs,
        decoder,
    })
}

/// Accumulates `dL/dθ` for every trainable tensor given `dL/d prob`.
pub fn backward_frame(
    suite: &EncoderSuite,
    state: &ModelState,
    input: &FrameInput,
    fwd: &FrameForward,
    d_prob: &Array2<f64>,
    grads: &mut Trainable,
) {
    let p = &state.params;
    let features = fwd.layer_outputs.last().expect("at least one layer");
    let (d_features, d_q) = p.decoder.backward(
        features,
        input.grid,
        &input.rgb,
        fwd.q.view(),
        &fwd.decoder,
        d_prob,
        &mut grads.decoder,
    );

    let mut d_tap = None;
    if state.config.train.adapter_enabled {
        let d_inputs = suite.backward_layers(&fwd.layer_outputs, d_features);
        let per_layer: Vec<Array1<f64>> = d_inputs.iter().map(|g| g.sum_axis(Axis(0))).collect();
        d_tap = Some(
            p.adapters
                .backward(&fwd.prompt, &per_layer, &mut grads.adapters),
        );
    }

    let k = fwd.tokens.0.nrows() as f64;
    let d_tokens = Array2::from_shape_fn(fwd.tokens.0.dim(), |(_, c)| d_q[c] / k);
    let mut d_text = suite.multimodal_backward(&fwd.tokens, &d_tokens);
    let mut d_fused_extra = None;
    if let Some(d) = d_tap {
        match p.adapters.tap {
            AdapterTap::Fused => d_fused_extra = Some(d),
            AdapterTap::TextSpace => d_text += &d,
        }
    }
    fusion::backward(
        &input.audio,
        &input.image,
        &p.projection,
        &fwd.prompt,
        &fwd.mlp,
        d_text.view(),
        d_fused_extra.as_ref().map(|d| d.view()),
        &mut grads.projection,
    );
}

/// Soft masks for every frame of a clip, at each frame's native size.
pub fn infer_clip(suite: &EncoderSuite, state: &ModelState, clip: &VideoClip) -> Result<MaskSet> {
    state.check(suite)?;
    if clip.frames.len() != clip.audio.len() {
        return Err(Error::dim(
            format!("{}: audio segments", clip.clip_id),
            clip.frames.len(),
            clip.audio.len(),
        ));
    }
    let resolution = state.config.input_resolution();
    let mut indices = Vec::with_capacity(clip.frames.len());
    let mut masks = Vec::with_capacity(clip.frames.len());
    for (frame, audio) in clip.frames.iter().zip(&clip.audio) {
        let input = prepare_frame(suite, frame, audio, resolution)?;
        let fwd = forward_frame(suite, state, &input)?;
        let soft =
            resize_bilinear_2d(fwd.prob(), frame.height, frame.width).mapv(|p| p.clamp(0.0, 1.0));
        indices.push(frame.index);
        masks.push(soft);
    }
    Ok(MaskSet::soft(indices, masks))
}

/// Runs inference on every clip (in parallel across clips) and scores it.
pub fn evaluate_run(
    suite: &EncoderSuite,
    state: &ModelState,
    clips: &[VideoClip],
    eval: &EvalConfig,
) -> Result<MetricsReport> {
    let missing: Vec<String> = clips
        .iter()
        .filter(|c| !c.fully_annotated())
        .map(|c| c.clip_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    state.check(suite)?;
    let predictions = infer_all(suite, state, clips)?;
    let mut report = metrics::evaluate(&predictions, clips, eval.threshold, eval.beta2)?;
    report.provenance = Some(serde_json::json!({
        "config": state.config,
        "seed": state.seed,
        "step": state.step,
        "prompt_source": state.config.train.prompt_source,
        "adapter_enabled": state.config.train.adapter_enabled,
        "backend": state.descriptor.name,
        "clips": clips.len(),
    }));
    Ok(report)
}

/// `infer_clip` over many clips, results in input order.
pub fn infer_all(
    suite: &EncoderSuite,
    state: &ModelState,
    clips: &[VideoClip],
) -> Result<Vec<MaskSet>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(clips.len())
        .max(1);
    let chunk = clips.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = clips
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|c| infer_clip(suite, state, c))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(clips.len());
        for h in handles {
            out.extend(h.join().expect("inference worker panicked")?);
        }
        Ok(out)
    })
}
