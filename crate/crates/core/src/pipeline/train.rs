use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde_json::json;

use super::manifest::{write_loss_csv, LossRecord, RunManifest};
use super::params::AdamW;
use super::{
    backward_frame, forward_frame, prepare_frame, save_checkpoint, FrameInput, ModelState,
};
use crate::config::RunConfig;
use crate::datamodel::{validate_clip, Split, VideoClip};
use crate::encoders::EncoderSuite;
use crate::error::{Error, Result};
use crate::nn::component_rng;
use crate::objectives::total_loss_with_grad;
use crate::resample::resize_nearest_2d;

struct Sample {
    clip_id: String,
    frame: usize,
    input: FrameInput,
    gt: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub losses: Vec<LossRecord>,
    pub manifest: RunManifest,
    /// Periodic checkpoints, oldest first.
    pub checkpoints: Vec<PathBuf>,
}

fn prepare_samples(
    suite: &EncoderSuite,
    clips: &[VideoClip],
    resolution: usize,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for clip in clips {
        if clip.split != Split::Train {
            return Err(Error::Invalid(format!(
                "{}: training needs the train split, got {}",
                clip.clip_id, clip.split
            )));
        }
        let report = validate_clip(clip);
        if !report.is_valid() {
            return Err(Error::Convention(format!("{}: {report}", clip.clip_id)));
        }
        let gt = clip
            .ground_truth
            .as_ref()
            .ok_or_else(|| Error::MissingGroundTruth(vec![clip.clip_id.clone()]))?;
        for (&idx, mask) in gt.frame_indices.iter().zip(&gt.masks) {
            let pos = clip
                .frames
                .iter()
                .position(|f| f.index == idx)
                .ok_or_else(|| Error::Invalid(format!("{}: no frame {idx}", clip.clip_id)))?;
            out.push(Sample {
                clip_id: clip.clip_id.clone(),
                frame: idx,
                input: prepare_frame(suite, &clip.frames[pos], &clip.audio[pos], resolution)?,
                gt: resize_nearest_2d(mask, resolution, resolution),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid("no annotated frames to train on".into()));
    }
    Ok(out)
}

fn nan_dump(
    step: u64,
    batch: &[&Sample],
    probs: &[&Array2<f64>],
    loss: (f64, f64, f64),
    state: &ModelState,
) -> String {
    let frames: Vec<_> = batch
        .iter()
        .zip(probs)
        .map(|(s, p)| {
            json!({
                "clip_id": s.clip_id,
                "frame": s.frame,
                "nonfinite_probs": p.iter().filter(|v| !v.is_finite()).count(),
                "audio_embedding_finite": s.input.audio.0.iter().all(|v| v.is_finite()),
                "image_embedding_finite": s.input.image.0.iter().all(|v| v.is_finite()),
            })
        })
        .collect();
    json!({
        "step": step,
        "bce": format!("{}", loss.0),
        "iou": format!("{}", loss.1),
        "total": format!("{}", loss.2),
        "params_finite": state.params.is_finite(),
        "batch": frames,
    })
    .to_string()
}

/// Minimizes `L_BCE + L_IoU` over every annotated frame of `clips`.
///
/// With `out_dir`, writes `checkpoints/epoch_NNNN.av2t`, `model.av2t`,
/// `loss.csv` and `run_manifest.json` there.
pub fn train(
    suite: &EncoderSuite,
    clips: &[VideoClip],
    config: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut state = ModelState::init(config, suite.descriptor())?;
    state.check(suite)?;
    let resolution = config.input_resolution();
    let samples = prepare_samples(suite, clips, resolution)?;
    let before = suite.frozen_checksums();
    let mut optimizer = AdamW::new(config.train.optimizer.clone(), &state.params);
    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let max_steps = config.train.max_steps.unwrap_or(u64::MAX);
    'epochs: for epoch in 0..config.train.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut component_rng(
            config.seed,
            &format!("data-order/epoch{epoch}"),
        ));
        for chunk in order.chunks(config.train.batch_size) {
            if state.step >= max_steps {
                break 'epochs;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let fwds = batch
                .iter()
                .map(|s| forward_frame(suite, &state, &s.input))
                .collect::<Result<Vec<_>>>()?;
            let probs: Vec<&Array2<f64>> = fwds.iter().map(|f| f.prob()).collect();
            let gts: Vec<&Array2<f64>> = batch.iter().map(|s| &s.gt).collect();
            let (loss, d_probs) = total_loss_with_grad(&probs, &gts)?;
            let step = state.step + 1;
            if !loss.is_finite() || d_probs.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                let dump = nan_dump(
                    step,
                    &batch,
                    &probs,
                    (loss.bce, loss.iou, loss.total),
                    &state,
                );
                if let Some(dir) = out_dir {
                    let path = dir.join("nan_dump.json");
                    std::fs::write(&path, &dump).map_err(|e| Error::io(&path, e))?;
                }
                return Err(Error::NonFiniteLoss { step, dump });
            }
            let mut grads = state.params.zeros_like();
            for ((s, f), d) in batch.iter().zip(&fwds).zip(&d_probs) {
                backward_frame(suite, &state, &s.input, f, d, &mut grads);
            }
            let frozen = state.frozen.clone();
            optimizer.step(&mut state.params, &grads, &|g| frozen.contains(g));
            state.step = step;
            losses.push(LossRecord {
                step,
                bce: loss.bce,
                iou: loss.iou,
                total: loss.total,
            });
        }
        let every = config.train.checkpoint_every;
        if let (Some(dir), true) = (out_dir, every > 0 && (epoch + 1) % every.max(1) == 0) {
            let path = dir
                .join("checkpoints")
                .join(format!("epoch_{:04}.av2t", epoch + 1));
            save_checkpoint(&state, &path)?;
            checkpoints.push(path);
        }
    }

    let after = suite.frozen_checksums();
    let mut manifest = RunManifest::new("train", config);
    manifest.frozen_checksums_before = before;
    manifest.frozen_checksums_after = after;
    manifest.loss_curve = losses.clone();
    manifest.details = json!({
        "samples": samples.len(),
        "steps": state.step,
        "input_resolution": resolution,
        "frozen": state.frozen,
        "backend": suite.descriptor().name,
    });
    if let Some(dir) = out_dir {
        save_checkpoint(&state, &dir.join("model.av2t"))?;
        write_loss_csv(&dir.join("loss.csv"), &losses)?;
        manifest
            .outputs
            .insert("checkpoint".into(), "model.av2t".into());
        manifest
            .outputs
            .insert("loss_curve".into(), "loss.csv".into());
        for p in &checkpoints {
            if let Ok(rel) = p.strip_prefix(dir) {
                let name = rel
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                manifest
                    .outputs
                    .insert(name, rel.to_string_lossy().replace('\\', "/"));
            }
        }
        manifest.write(&dir.join("run_manifest.json"))?;
    }
    Ok(TrainOutcome {
        state,
        losses,
        manifest,
        checkpoints,
    })
}
