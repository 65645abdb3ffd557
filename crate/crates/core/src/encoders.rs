//! Encoder backends: image and audio embedders, the layered segmentation
//! backbone with per-layer prompt injection, and the multimodal prompt
//! encoder that turns a text-space vector into decoder prompt tokens.
//!
//! Two suites share one network family. The stub suite generates all of its
//! weights from a seed, so it needs no files and is reproducible across
//! processes. The pretrained suite reads the same tensors from a weight file
//! under the backend directory and fails with the missing path when it is
//! absent; it never falls back to the stub.
//!
//! Every component here is frozen: nothing in this module is updated by
//! training. The backbone and the multimodal encoder expose backward passes
//! so gradients can flow *through* them to the trainable prompt path.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datamodel::{AudioSegment, Frame};
use crate::error::{Error, Result};
use crate::nn::{checksum, component_rng, gaussian_matrix, l2_normalize, Affine};
use crate::resample::{area_pool_chw, resample_linear};
use crate::tensorfile::TensorFile;

pub const BACKEND_DIR_ENV: &str = "AV2T_BACKEND_DIR";
pub const WEIGHTS_FILE: &str = "encoders.av2t";

/// Tolerance for the unit-norm contract on embeddings.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Pretrained,
}

/// Shapes and seeds of an encoder suite.
///
/// Backbone layer `j` consumes `channels[j]` features per token and emits
/// `channels[j + 1]` (the last layer keeps its width). Prompt tensors for
/// layer `j` therefore have `channels[j]` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub d_v: usize,
    pub d_a: usize,
    pub d_text: usize,
    pub num_layers: usize,
    pub channels: Vec<usize>,
    /// Backbone patch side in pixels.
    pub patch_size: usize,
    /// Side of the pooled grid the image encoder reads.
    pub image_side: usize,
    /// Samples per second the audio encoder reads after resampling.
    pub audio_samples: usize,
    pub prompt_tokens: usize,
    pub token_dim: usize,
    /// Backbone layer built without a nonlinearity (test hook for additivity checks).
    #[serde(default)]
    pub linear_layer: Option<usize>,
    pub seed: u64,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self::stub(0)
    }
}

impl BackendDescriptor {
    pub fn stub(seed: u64) -> Self {
        Self {
            name: "stub".into(),
            kind: BackendKind::Stub,
            d_v: 16,
            d_a: 12,
            d_text: 8,
            num_layers: 3,
            channels: vec![8, 8, 8],
            patch_size: 8,
            image_side: 16,
            audio_samples: 1024,
            prompt_tokens: 2,
            token_dim: 8,
            linear_layer: None,
            seed,
        }
    }

    /// Dimension defaults for the pretrained suite; the weight file is authoritative.
    pub fn pretrained_defaults() -> Self {
        Self {
            name: "pretrained".into(),
            kind: BackendKind::Pretrained,
            d_v: 768,
            d_a: 512,
            d_text: 1024,
            num_layers: 4,
            channels: vec![256; 4],
            patch_size: 16,
            image_side: 32,
            audio_samples: 16_000,
            prompt_tokens: 4,
            token_dim: 256,
            linear_layer: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_v", self.d_v),
            ("d_a", self.d_a),
            ("d_text", self.d_text),
            ("num_layers", self.num_layers),
            ("patch_size", self.patch_size),
            ("image_side", self.image_side),
            ("audio_samples", self.audio_samples),
            ("prompt_tokens", self.prompt_tokens),
            ("token_dim", self.token_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("backend {name} must be positive")));
            }
        }
        if self.channels.len() != self.num_layers {
            return Err(Error::dim(
                "backend channels",
                self.num_layers,
                self.channels.len(),
            ));
        }
        if self.channels.contains(&0) {
            return Err(Error::Invalid("backend channels must be positive".into()));
        }
        if let Some(j) = self.linear_layer {
            if j >= self.num_layers {
                return Err(Error::Invalid(format!("linear_layer {j} out of range")));
            }
        }
        Ok(())
    }

    pub fn layer_in_channels(&self, layer: usize) -> usize {
        self.channels[layer]
    }

    pub fn layer_out_channels(&self, layer: usize) -> usize {
        self.channels
            .get(layer + 1)
            .copied()
            .unwrap_or(self.channels[layer])
    }

    pub fn output_channels(&self) -> usize {
        self.layer_out_channels(self.num_layers - 1)
    }
}

/// Where to find weights and which suite to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub weights_dir: Option<PathBuf>,
    pub descriptor: BackendDescriptor,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            weights_dir: None,
            descriptor: BackendDescriptor::stub(0),
        }
    }
}

impl BackendConfig {
    /// The environment variable takes precedence over the configured directory.
    pub fn resolve_weights_dir(&self) -> Option<PathBuf> {
        self.resolve_weights_dir_with(std::env::var_os(BACKEND_DIR_ENV))
    }

    pub fn resolve_weights_dir_with(&self, env: Option<OsString>) -> Option<PathBuf> {
        env.filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.weights_dir.clone())
    }

    pub fn open(&self) -> Result<EncoderSuite> {
        match self.kind {
            BackendKind::Stub => EncoderSuite::stub(self.descriptor.clone()),
            BackendKind::Pretrained => {
                let dir = self
                    .resolve_weights_dir()
                    .ok_or_else(|| Error::BackendUnavailable {
                        path: PathBuf::from(format!("${BACKEND_DIR_ENV}/{WEIGHTS_FILE}")),
                    })?;
                EncoderSuite::load_pretrained(&dir)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEmbedding(pub Array1<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioEmbedding(pub Array1<f64>);

impl ImageEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AudioEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-layer backbone outputs; layer `j` has shape `(T, tokens, out_channels(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneFeatures {
    pub layer_outputs: Vec<Array3<f64>>,
    pub num_layers: usize,
    /// Token grid `(rows, cols)`; `rows * cols` is the spatial axis length.
    pub grid: (usize, usize),
}

/// Prompt tokens for the mask decoder, shape `(prompt_tokens, token_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTokens(pub Array2<f64>);

/// Frozen weights of one suite.
#[derive(Debug, Clone)]
pub struct EncoderSuite {
    descriptor: BackendDescriptor,
    image_proj: Array2<f64>,
    audio_proj: Array2<f64>,
    patch_embed: Affine,
    layers: Vec<Affine>,
    mm_text: Vec<Array2<f64>>,
    mm_image: Vec<Array2<f64>>,
    mm_bias: Array2<f64>,
    blank_image: Array1<f64>,
    silent_audio: Array1<f64>,
}

fn reserved_unit_vector(seed: u64, tag: &str, dim: usize) -> Array1<f64> {
    let mut rng = component_rng(seed, tag);
    let mut v = gaussian_matrix(dim, 1, &mut rng).column(0).to_owned();
    if l2_normalize(&mut v) == 0.0 {
        v = Array1::zeros(dim);
        v[0] = 1.0;
    }
    v
}

impl EncoderSuite {
    /// Seeded random-projection suite.
    pub fn stub(descriptor: BackendDescriptor) -> Result<Self> {
        descriptor.validate()?;
        let seed = descriptor.seed;
        let d = &descriptor;
        let image_in = 3 * d.image_side * d.image_side;
        let patch_in = 3 * d.patch_size * d.patch_size;

        let image_proj = gaussian_matrix(d.d_v, image_in, &mut component_rng(seed, "image"));
        let audio_proj = gaussian_matrix(d.d_a, d.audio_samples, &mut component_rng(seed, "audio"));

        let mut rng = component_rng(seed, "patch_embed");
        let patch_embed = Affine {
            weight: gaussian_matrix(d.channels[0], patch_in, &mut rng),
            bias: gaussian_matrix(d.channels[0], 1, &mut rng)
                .column(0)
                .to_owned()
                * 0.1,
        };

        let layers = (0..d.num_layers)
            .map(|j| {
                let mut rng = component_rng(seed, &format!("layer{j}"));
                let (cin, cout) = (d.layer_in_channels(j), d.layer_out_channels(j));
                Affine {
                    weight: gaussian_matrix(cout, cin, &mut rng),
                    bias: gaussian_matrix(cout, 1, &mut rng).column(0).to_owned() * 0.1,
                }
            })
            .collect();

        let mut rng = component_rng(seed, "multimodal");
        let mm_text = (0..d.prompt_tokens)
            .map(|_| gaussian_matrix(d.token_dim, d.d_text, &mut rng))
            .collect();
        let mm_image = (0..d.prompt_tokens)
            .map(|_| gaussian_matrix(d.token_dim, d.d_v, &mut rng) * 0.5)
            .collect();
        let mm_bias = gaussian_matrix(d.prompt_tokens, d.token_dim, &mut rng) * 0.1;

        Ok(Self {
            blank_image: reserved_unit_vector(seed, "reserved/blank-image", d.d_v),
            silent_audio: reserved_unit_vector(seed, "reserved/silent-audio", d.d_a),
            descriptor,
            image_proj,
            audio_proj,
            patch_embed,
            layers,
            mm_text,
            mm_image,
            mm_bias,
        })
    }

    /// Reads `dir/encoders.av2t`.
    pub fn load_pretrained(dir: &Path) -> Result<Self> {
        let path = dir.join(WEIGHTS_FILE);
        if !path.is_file() {
            return Err(Error::BackendUnavailable { path });
        }
        let file = TensorFile::read(&path)?;
        let mut descriptor: BackendDescriptor =
            serde_json::from_value(file.meta.get("descriptor").cloned().unwrap_or_default())
                .map_err(|e| Error::Corrupt {
                    path: path.clone(),
                    message: format!("descriptor: {e}"),
                })?;
        descriptor.kind = BackendKind::Pretrained;
        descriptor.validate()?;
        let d = &descriptor;

        let expect =
            |name: &str, m: Array2<f64>, rows: usize, cols: usize| -> Result<Array2<f64>> {
                if m.dim() != (rows, cols) {
                    return Err(Error::dim(
                        format!("{} tensor {name}", path.display()),
                        format!("{rows}x{cols}"),
                        format!("{:?}", m.dim()),
                    ));
                }
                Ok(m)
            };
        let image_proj = expect(
            "image_proj",
            file.matrix("image_proj")?,
            d.d_v,
            3 * d.image_side * d.image_side,
        )?;
        let audio_proj = expect(
            "audio_proj",
            file.matrix("audio_proj")?,
            d.d_a,
            d.audio_samples,
        )?;
        let patch_embed = Affine {
            weight: expect(
                "patch_embed.weight",
                file.matrix("patch_embed.weight")?,
                d.channels[0],
                3 * d.patch_size * d.patch_size,
            )?,
            bias: file.vector("patch_embed.bias")?,
        };
        let mut layers = Vec::with_capacity(d.num_layers);
        for j in 0..d.num_layers {
            layers.push(Affine {
                weight: expect(
                    &format!("layer{j}.weight"),
                    file.matrix(&format!("layer{j}.weight"))?,
                    d.layer_out_channels(j),
                    d.layer_in_channels(j),
                )?,
                bias: file.vector(&format!("layer{j}.bias"))?,
            });
        }
        let mut mm_text = Vec::new();
        let mut mm_image = Vec::new();
        for k in 0..d.prompt_tokens {
            mm_text.push(expect(
                "mm_text",
                file.matrix(&format!("mm_text{k}"))?,
                d.token_dim,
                d.d_text,
            )?);
            mm_image.push(expect(
                "mm_image",
                file.matrix(&format!("mm_image{k}"))?,
                d.token_dim,
                d.d_v,
            )?);
        }
        let mm_bias = expect(
            "mm_bias",
            file.matrix("mm_bias")?,
            d.prompt_tokens,
            d.token_dim,
        )?;
        Ok(Self {
            blank_image: file.vector("blank_image")?,
            silent_audio: file.vector("silent_audio")?,
            descriptor,
            image_proj,
            audio_proj,
            patch_embed,
            layers,
            mm_text,
            mm_image,
            mm_bias,
        })
    }

    /// Writes this suite's weights in the format `load_pretrained` reads.
    pub fn export(&self, dir: &Path) -> Result<PathBuf> {
        let mut descriptor = self.descriptor.clone();
        descriptor.kind = BackendKind::Pretrained;
        let mut file = TensorFile::new(serde_json::json!({ "descriptor": descriptor }));
        file.push_matrix("image_proj", &self.image_proj);
        file.push_matrix("audio_proj", &self.audio_proj);
        file.push_matrix("patch_embed.weight", &self.patch_embed.weight);
        file.push_vector("patch_embed.bias", &self.patch_embed.bias);
        for (j, layer) in self.layers.iter().enumerate() {
            file.push_matrix(format!("layer{j}.weight"), &layer.weight);
            file.push_vector(format!("layer{j}.bias"), &layer.bias);
        }
        for (k, (t, i)) in self.mm_text.iter().zip(&self.mm_image).enumerate() {
            file.push_matrix(format!("mm_text{k}"), t);
            file.push_matrix(format!("mm_image{k}"), i);
        }
        file.push_matrix("mm_bias", &self.mm_bias);
        file.push_vector("blank_image", &self.blank_image);
        file.push_vector("silent_audio", &self.silent_audio);
        let path = dir.join(WEIGHTS_FILE);
        file.write(&path)?;
        Ok(path)
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    /// SHA-256 of every frozen component, keyed by component name.
    pub fn frozen_checksums(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert(
            "image_encoder".into(),
            checksum(self.image_proj.iter().chain(self.blank_image.iter())),
        );
        out.insert(
            "audio_encoder".into(),
            checksum(self.audio_proj.iter().chain(self.silent_audio.iter())),
        );
        let trunk = self
            .patch_embed
            .weight
            .iter()
            .chain(self.patch_embed.bias.iter())
            .chain(
                self.layers
                    .iter()
                    .flat_map(|l| l.weight.iter().chain(l.bias.iter())),
            );
        out.insert("backbone_trunk".into(), checksum(trunk));
        let mm = self
            .mm_text
            .iter()
            .chain(&self.mm_image)
            .flat_map(|m| m.iter())
            .chain(self.mm_bias.iter());
        out.insert("multimodal_encoder".into(), checksum(mm));
        out
    }

    fn check_frame(frame: &Frame) -> Result<()> {
        if frame.pixels.dim() != (3, frame.height, frame.width)
            || frame.height == 0
            || frame.width == 0
        {
            return Err(Error::dim(
                format!("frame {}", frame.index),
                format!("(3, {}, {})", frame.height, frame.width),
                format!("{:?}", frame.pixels.dim()),
            ));
        }
        Ok(())
    }

    pub fn encode_image(&self, frame: &Frame) -> Result<ImageEmbedding> {
        Self::check_frame(frame)?;
        let pooled = area_pool_chw(&frame.pixels, self.descriptor.image_side);
        let flat = Array1::from_iter(pooled.iter().copied());
        let mut v = self.image_proj.dot(&flat).mapv(f64::tanh);
        if l2_normalize(&mut v) < 1e-12 {
            v = self.blank_image.clone();
        }
        Ok(ImageEmbedding(v))
    }

    /// All-zero (silent) input maps to the reserved `silent_audio` vector.
    pub fn encode_audio(&self, segment: &AudioSegment) -> Result<AudioEmbedding> {
        if segment.samples.is_empty() {
            return Err(Error::Invalid(format!(
                "audio segment {} is empty",
                segment.index
            )));
        }
        let samples = resample_linear(&segment.samples, self.descriptor.audio_samples);
        let mut v = self.audio_proj.dot(&Array1::from(samples)).mapv(f64::tanh);
        if l2_normalize(&mut v) < 1e-12 {
            v = self.silent_audio.clone();
        }
        Ok(AudioEmbedding(v))
    }

    /// Token grid of a frame at the backbone's patch size.
    pub fn token_grid(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let p = self.descriptor.patch_size;
        if !height.is_multiple_of(p) || !width.is_multiple_of(p) || height == 0 || width == 0 {
            return Err(Error::dim(
                "backbone input",
                format!("multiple of patch size {p}"),
                format!("{height}x{width}"),
            ));
        }
        Ok((height / p, width / p))
    }

    /// Patch-embedded tokens `X_0` (before any prompt injection), shape `(tokens, channels[0])`.
    pub fn embed_patches(&self, frame: &Frame) -> Result<Array2<f64>> {
        Self::check_frame(frame)?;
        let (gh, gw) = self.token_grid(frame.height, frame.width)?;
        let p = self.descriptor.patch_size;
        let mut patches = Array2::<f64>::zeros((gh * gw, 3 * p * p));
        for gy in 0..gh {
            for gx in 0..gw {
                let block = frame
                    .pixels
                    .slice(s![.., gy * p..(gy + 1) * p, gx * p..(gx + 1) * p]);
                let mut row = patches.row_mut(gy * gw + gx);
                for (dst, src) in row.iter_mut().zip(block.iter()) {
                    *dst = *src;
                }
            }
        }
        let mut tokens = patches.dot(&self.patch_embed.weight.t());
        tokens += &self.patch_embed.bias;
        Ok(tokens)
    }

    /// Runs the layer stack on one frame's tokens.
    ///
    /// Layer `j` reads `X_j = E_{j-1}(X_{j-1}) + P_j` (with `X_0` the patch
    /// embedding plus `P_0`). Returns every layer's output `E_j(X_j)`.
    pub fn run_layers(
        &self,
        x0: &Array2<f64>,
        prompts: Option<&[ArrayView2<f64>]>,
    ) -> Vec<Array2<f64>> {
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = x0.clone();
        for (j, layer) in self.layers.iter().enumerate() {
            if let Some(p) = prompts.map(|ps| &ps[j]) {
                // Adding +0.0 would turn -0.0 into +0.0; skip zeros so a zero
                // prompt is bit-identical to no prompt.
                x.zip_mut_with(p, |a, &b| {
                    if b != 0.0 {
                        *a += b
                    }
                });
            }
            let mut y = x.dot(&layer.weight.t());
            y += &layer.bias;
            if self.descriptor.linear_layer != Some(j) {
                y.mapv_inplace(f64::tanh);
            }
            outputs.push(y.clone());
            x = y;
        }
        outputs
    }

    /// Gradients with respect to each layer input `X_j`, given `dL/d(last output)`.
    ///
    /// Since `X_j = E_{j-1}(X_{j-1}) + P_j`, these are also the per-token
    /// gradients with respect to the prompt tensors.
    pub fn backward_layers(
        &self,
        outputs: &[Array2<f64>],
        grad_last: Array2<f64>,
    ) -> Vec<Array2<f64>> {
        let n = self.layers.len();
        let mut grads = vec![Array2::zeros((0, 0)); n];
        let mut dy = grad_last;
        for j in (0..n).rev() {
            let dz = if self.descriptor.linear_layer == Some(j) {
                dy
            } else {
                let y = &outputs[j];
                let mut dz = dy;
                dz.zip_mut_with(y, |g, &yv| *g *= 1.0 - yv * yv);
                dz
            };
            let dx = dz.dot(&self.layers[j].weight);
            grads[j] = dx.clone();
            dy = dx;
        }
        grads
    }

    /// Backbone over a clip's frames with optional per-layer prompts of shape
    /// `(T, tokens, channels[j])`.
    pub fn encode_backbone(
        &self,
        frames: &[Frame],
        prompts: Option<&[Array3<f64>]>,
    ) -> Result<BackboneFeatures> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Invalid("encode_backbone needs at least one frame".into()))?;
        let (gh, gw) = self.token_grid(first.height, first.width)?;
        let n = gh * gw;
        let t = frames.len();
        for f in frames {
            if (f.height, f.width) != (first.height, first.width) {
                return Err(Error::dim(
                    "backbone frames",
                    format!("{}x{}", first.height, first.width),
                    format!("{}x{}", f.height, f.width),
                ));
            }
        }
        let d = &self.descriptor;
        if let Some(ps) = prompts {
            if ps.len() != d.num_layers {
                return Err(Error::dim("backbone prompts", d.num_layers, ps.len()));
            }
            for (j, p) in ps.iter().enumerate() {
                let expected = (t, n, d.layer_in_channels(j));
                if p.dim() != expected {
                    return Err(Error::LayerShape {
                        layer: j,
                        expected,
                        got: p.dim(),
                    });
                }
            }
        }

        let mut layer_outputs: Vec<Array3<f64>> = (0..d.num_layers)
            .map(|j| Array3::zeros((t, n, d.layer_out_channels(j))))
            .collect();
        for (ti, frame) in frames.iter().enumerate() {
            let x0 = self.embed_patches(frame)?;
            let views: Option<Vec<ArrayView2<f64>>> =
                prompts.map(|ps| ps.iter().map(|p| p.index_axis(Axis(0), ti)).collect());
            let outs = self.run_layers(&x0, views.as_deref());
            for (j, o) in outs.into_iter().enumerate() {
                layer_outputs[j].index_axis_mut(Axis(0), ti).assign(&o);
            }
        }
        Ok(BackboneFeatures {
            layer_outputs,
            num_layers: d.num_layers,
            grid: (gh, gw),
        })
    }

    /// Prompt tokens from a text-space vector and an already-computed image embedding.
    pub fn multimodal_tokens(
        &self,
        text: ArrayView1<f64>,
        image: &ImageEmbedding,
    ) -> Result<PromptTokens> {
        let d = &self.descriptor;
        if text.len() != d.d_text {
            return Err(Error::dim("multimodal text vector", d.d_text, text.len()));
        }
        if image.dim() != d.d_v {
            return Err(Error::dim("multimodal image embedding", d.d_v, image.dim()));
        }
        if text.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("multimodal text vector".into()));
        }
        let mut tokens = Array2::zeros((d.prompt_tokens, d.token_dim));
        for k in 0..d.prompt_tokens {
            let pre =
                self.mm_text[k].dot(&text) + self.mm_image[k].dot(&image.0) + self.mm_bias.row(k);
            tokens.row_mut(k).assign(&pre.mapv(f64::tanh));
        }
        Ok(PromptTokens(tokens))
    }

    pub fn encode_multimodal_prompt(
        &self,
        text: ArrayView1<f64>,
        frame: &Frame,
    ) -> Result<PromptTokens> {
        let image = self.encode_image(frame)?;
        self.multimodal_tokens(text, &image)
    }

    /// `dL/d text` given the produced tokens and `dL/d tokens`.
    pub fn multimodal_backward(
        &self,
        tokens: &PromptTokens,
        grad_tokens: &Array2<f64>,
    ) -> Array1<f64> {
        let mut dtext = Array1::zeros(self.descriptor.d_text);
        for k in 0..self.descriptor.prompt_tokens {
            let tok = tokens.0.row(k);
            let dpre = &grad_tokens.row(k) * &tok.mapv(|y| 1.0 - y * y);
            dtext += &self.mm_text[k].t().dot(&dpre);
        }
        dtext
    }
}
