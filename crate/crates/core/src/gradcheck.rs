//! Central finite-difference checks of the analytic gradients.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::encoders::{AudioEmbedding, EncoderSuite, ImageEmbedding};
use crate::error::Result;
use crate::fusion::{self, ProjectionParams, PromptSource};
use crate::objectives::total_loss_with_grad;
use crate::pipeline::{backward_frame, forward_frame, FrameInput, ModelState};

/// Differences below this magnitude are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Worst relative error per parameter group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientReport {
    pub max_error: BTreeMap<String, f64>,
    pub entries: usize,
}

impl GradientReport {
    fn record(&mut self, group: &str, err: f64) {
        let e = self.max_error.entry(group.to_string()).or_insert(0.0);
        *e = e.max(err);
        self.entries += 1;
    }

    pub fn worst(&self) -> f64 {
        self.max_error.values().copied().fold(0.0, f64::max)
    }
}

/// Loss gradient with respect to each predicted probability.
pub fn check_loss(preds: &[Array2<f64>], gts: &[Array2<f64>], h: f64) -> Result<GradientReport> {
    let total = |ps: &[Array2<f64>]| -> Result<f64> {
        let pr: Vec<&Array2<f64>> = ps.iter().collect();
        let gr: Vec<&Array2<f64>> = gts.iter().collect();
        Ok(total_loss_with_grad(&pr, &gr)?.0.total)
    };
    let pr: Vec<&Array2<f64>> = preds.iter().collect();
    let gr: Vec<&Array2<f64>> = gts.iter().collect();
    let (_, grads) = total_loss_with_grad(&pr, &gr)?;
    let mut report = GradientReport::default();
    for (f, g) in grads.iter().enumerate() {
        for ((y, x), &analytic) in g.indexed_iter() {
            let mut plus = preds.to_vec();
            plus[f][[y, x]] += h;
            let mut minus = preds.to_vec();
            minus[f][[y, x]] -= h;
            let numeric = (total(&plus)? - total(&minus)?) / (2.0 * h);
            report.record("predictions", relative_error(analytic, numeric));
        }
    }
    Ok(report)
}

type ParamSlice = fn(&mut ProjectionParams) -> &mut [f64];

/// Gradient of `c · text_space` with respect to the projection parameters.
pub fn check_prompt(
    a: &AudioEmbedding,
    v: &ImageEmbedding,
    params: &ProjectionParams,
    source: PromptSource,
    c: &Array1<f64>,
    h: f64,
) -> Result<GradientReport> {
    let objective = |p: &ProjectionParams| -> Result<f64> {
        Ok(fusion::build_prompt(a, v, p, source)?.text_space.dot(c))
    };
    let (prompt, trace) = fusion::build_prompt_traced(a, v, params, source)?;
    let mut grad = ProjectionParams::zeros(
        params.w_audio.ncols(),
        params.w_visual.ncols(),
        params.d_s(),
        params.mlp_hidden.out_dim(),
        params.d_text(),
    );
    fusion::backward(a, v, params, &prompt, &trace, c.view(), None, &mut grad);

    let mut report = GradientReport::default();
    let groups: [(&str, ParamSlice); 6] = [
        ("w_audio", |p| p.w_audio.as_slice_mut().unwrap()),
        ("w_visual", |p| p.w_visual.as_slice_mut().unwrap()),
        ("mlp_hidden.weight", |p| {
            p.mlp_hidden.weight.as_slice_mut().unwrap()
        }),
        ("mlp_hidden.bias", |p| {
            p.mlp_hidden.bias.as_slice_mut().unwrap()
        }),
        ("mlp_out.weight", |p| {
            p.mlp_out.weight.as_slice_mut().unwrap()
        }),
        ("mlp_out.bias", |p| p.mlp_out.bias.as_slice_mut().unwrap()),
    ];
    for (name, get) in groups {
        let mut g = grad.clone();
        let analytic = get(&mut g).to_vec();
        for (i, &an) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            get(&mut plus)[i] += h;
            let mut minus = params.clone();
            get(&mut minus)[i] -= h;
            let numeric = (objective(&plus)? - objective(&minus)?) / (2.0 * h);
            report.record(name, relative_error(an, numeric));
        }
    }
    Ok(report)
}

/// End-to-end: `L_total` of one frame with respect to every trainable tensor.
pub fn check_pipeline(
    suite: &EncoderSuite,
    state: &ModelState,
    input: &FrameInput,
    gt: &Array2<f64>,
    h: f64,
) -> Result<GradientReport> {
    let loss = |s: &ModelState| -> Result<f64> {
        let f = forward_frame(suite, s, input)?;
        Ok(total_loss_with_grad(&[f.prob()], &[gt])?.0.total)
    };
    let fwd = forward_frame(suite, state, input)?;
    let (_, d_probs) = total_loss_with_grad(&[fwd.prob()], &[gt])?;
    let mut grads = state.params.zeros_like();
    backward_frame(suite, state, input, &fwd, &d_probs[0], &mut grads);

    let mut report = GradientReport::default();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(name, _, _, v)| (name, v.to_vec()))
        .collect();
    for (k, (name, values)) in analytic.iter().enumerate() {
        for (i, &an) in values.iter().enumerate() {
            let mut plus = state.clone();
            plus.params.tensors_mut()[k].2[i] += h;
            let mut minus = state.clone();
            minus.params.tensors_mut()[k].2[i] -= h;
            let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
            report.record(name, relative_error(an, numeric));
        }
    }
    Ok(report)
}
