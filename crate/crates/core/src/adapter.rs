//! Per-layer adapters that broadcast the prompt into the frozen backbone.
//!
//! Adapter `j` applies an affine map to the prompt vector, producing a
//! `C_j`-vector that is repeated over every `(t, position)` of layer `j`'s
//! input and added there. Maps start at zero so an untrained stack is
//! exactly the no-adapter model.

use ndarray::{Array1, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::datamodel::Frame;
use crate::encoders::{BackboneFeatures, BackendDescriptor, EncoderSuite};
use crate::error::{Error, Result};
use crate::fusion::PromptFeature;
use crate::nn::Affine;

/// Which prompt vector feeds the adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdapterTap {
    /// The pre-MLP fused vector (`d_s`).
    #[default]
    Fused,
    /// The MLP output (`d_text`).
    TextSpace,
}

impl AdapterTap {
    pub fn input<'a>(self, prompt: &'a PromptFeature) -> ArrayView1<'a, f64> {
        match self {
            AdapterTap::Fused => prompt.fused.view(),
            AdapterTap::TextSpace => prompt.text_space.view(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterStack {
    /// Sorted, unique layer indices.
    pub layer_selection: Vec<usize>,
    /// One map per selected layer, in `layer_selection` order.
    pub maps: Vec<Affine>,
    pub tap: AdapterTap,
    /// Input channel count of every backbone layer.
    pub layer_channels: Vec<usize>,
}

impl AdapterStack {
    /// Zero-initialized stack. `selection = None` selects every layer.
    pub fn zeros(
        descriptor: &BackendDescriptor,
        selection: Option<&[usize]>,
        tap: AdapterTap,
        input_dim: usize,
    ) -> Result<Self> {
        let layer_channels = descriptor.channels.clone();
        let mut layer_selection: Vec<usize> = match selection {
            Some(s) => s.to_vec(),
            None => (0..descriptor.num_layers).collect(),
        };
        layer_selection.sort_unstable();
        layer_selection.dedup();
        if let Some(&bad) = layer_selection
            .iter()
            .find(|&&j| j >= descriptor.num_layers)
        {
            return Err(Error::Invalid(format!(
                "adapter layer {bad} out of range (backbone has {} layers)",
                descriptor.num_layers
            )));
        }
        let maps = layer_selection
            .iter()
            .map(|&j| Affine::zeros(layer_channels[j], input_dim))
            .collect();
        Ok(Self {
            layer_selection,
            maps,
            tap,
            layer_channels,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layer_channels.len()
    }

    pub fn map_for(&self, layer: usize) -> Option<&Affine> {
        self.layer_selection
            .iter()
            .position(|&j| j == layer)
            .map(|k| &self.maps[k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.len() != self.layer_selection.len() {
            return Err(Error::dim(
                "adapter maps",
                self.layer_selection.len(),
                self.maps.len(),
            ));
        }
        for (&j, map) in self.layer_selection.iter().zip(&self.maps) {
            let c = *self
                .layer_channels
                .get(j)
                .ok_or_else(|| Error::Invalid(format!("adapter layer {j} out of range")))?;
            if map.out_dim() != c || map.bias.len() != c {
                return Err(Error::dim(
                    format!("adapter layer {j} output"),
                    c,
                    map.out_dim(),
                ));
            }
        }
        Ok(())
    }

    /// The per-layer `C_j` vector before broadcasting.
    pub fn layer_vector(&self, prompt: &PromptFeature, layer: usize) -> Result<Array1<f64>> {
        let map = self.map_for(layer).ok_or(Error::LayerNotSelected(layer))?;
        let input = self.tap.input(prompt);
        if input.len() != map.in_dim() {
            return Err(Error::dim(
                format!("adapter layer {layer} input"),
                map.in_dim(),
                input.len(),
            ));
        }
        Ok(map.forward(input))
    }

    /// `P_j` of shape `(T, positions, C_j)`: the layer's mapped prompt repeated
    /// over every position.
    pub fn make_prompt_tensor(
        &self,
        prompt: &PromptFeature,
        layer: usize,
        spatial: (usize, usize),
    ) -> Result<Array3<f64>> {
        let v = self.layer_vector(prompt, layer)?;
        let (t, n) = spatial;
        Ok(broadcast(&v, t, n))
    }

    /// Full list of `P_j` for every backbone layer; unselected layers get zeros.
    pub fn prompt_tensors(
        &self,
        prompt: &PromptFeature,
        spatial: (usize, usize),
    ) -> Result<Vec<Array3<f64>>> {
        let (t, n) = spatial;
        (0..self.num_layers())
            .map(|j| {
                if self.map_for(j).is_some() {
                    self.make_prompt_tensor(prompt, j, spatial)
                } else {
                    Ok(Array3::zeros((t, n, self.layer_channels[j])))
                }
            })
            .collect()
    }

    /// Accumulates gradients for a stack given `dL/dP_j` summed over positions
    /// (indexed by backbone layer). Returns `dL/d(tap input)`.
    pub fn backward(
        &self,
        prompt: &PromptFeature,
        grad_layer_vectors: &[Array1<f64>],
        grad: &mut AdapterStack,
    ) -> Array1<f64> {
        let input = self.tap.input(prompt);
        let mut d_input = Array1::zeros(input.len());
        for (k, &j) in self.layer_selection.iter().enumerate() {
            d_input +=
                &self.maps[k].backward(input, grad_layer_vectors[j].view(), &mut grad.maps[k]);
        }
        d_input
    }
}

fn broadcast(v: &Array1<f64>, t: usize, n: usize) -> Array3<f64> {
    Array3::from_shape_fn((t, n, v.len()), |(_, _, c)| v[c])
}

/// Backbone pass with adapter prompts injected; every frame shares `prompt`.
pub fn inject(
    suite: &EncoderSuite,
    frames: &[Frame],
    stack: &AdapterStack,
    prompt: &PromptFeature,
) -> Result<BackboneFeatures> {
    stack.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Invalid("inject needs at least one frame".into()))?;
    let (gh, gw) = suite.token_grid(first.height, first.width)?;
    let tensors = stack.prompt_tensors(prompt, (frames.len(), gh * gw))?;
    suite.encode_backbone(frames, Some(&tensors))
}
