use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use av2t_core::avsbench_io::media::{write_frame, write_mask};
use av2t_core::avsbench_io::{
    load_clip_dir, make_synthetic, scan, DatasetManifest, SynthConfig, MANIFEST_FILE,
};
use av2t_core::metrics::binarize;
use av2t_core::pipeline::{evaluate_run, infer_clip, load_checkpoint, train, ModelState};
use av2t_core::{
    BackendConfig, BackendKind, EncoderSuite, Error, RunConfig, RunManifest, Split, Subset,
    VideoClip,
};
use ndarray::{Array2, Array3};
use serde_json::json;

use crate::args::{BackendArg, CommonArgs, Toggle};

/// Alpha of the mask color in overlays.
pub const OVERLAY_ALPHA: f64 = 0.5;
const OVERLAY_COLOR: [f64; 3] = [1.0, 0.1, 0.1];

/// Defaults < config file < `--set` < dedicated flags.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::layered(common.config.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(b) = common.backend {
        cfg.backend.kind = match b {
            BackendArg::Stub => BackendKind::Stub,
            BackendArg::Pretrained => BackendKind::Pretrained,
        };
    }
    if let Some(p) = common.prompt_source {
        cfg.train.prompt_source = p;
    }
    if let Some(a) = common.adapter {
        cfg.train.adapter_enabled = a == Toggle::On;
    }
    if let Some(t) = common.threshold {
        cfg.eval.threshold = t;
    }
    if let Some(b) = common.beta2 {
        cfg.eval.beta2 = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A manifest path, or a directory holding `manifest.json`.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    if !file.is_file() {
        return Err(Error::MissingInput(file).into());
    }
    Ok(DatasetManifest::read(&file)?)
}

pub fn load_clips(path: &Path) -> Result<(DatasetManifest, Vec<VideoClip>)> {
    let manifest = read_manifest(path)?;
    let clips = manifest
        .load_all()
        .with_context(|| format!("loading clips listed in {}", path.display()))?;
    Ok((manifest, clips))
}

/// Suite matching a checkpoint; pretrained weights come from the config or the environment.
pub fn suite_for(state: &ModelState, cfg: &RunConfig) -> Result<EncoderSuite> {
    let backend = BackendConfig {
        kind: state.descriptor.kind,
        weights_dir: cfg.backend.weights_dir.clone(),
        descriptor: state.descriptor.clone(),
    };
    let suite = backend.open()?;
    state.check(&suite)?;
    Ok(suite)
}

/// Checkpoint state with explicit command-line choices applied.
pub fn checkpoint_state(path: &Path, common: &CommonArgs, cfg: &RunConfig) -> Result<ModelState> {
    let mut state = load_checkpoint(path)?;
    if let Some(p) = common.prompt_source {
        state.config.train.prompt_source = p;
    }
    if let Some(a) = common.adapter {
        state.config.train.adapter_enabled = a == Toggle::On;
    }
    state.config.eval = cfg.eval.clone();
    Ok(state)
}

pub fn ingest(
    cfg: &RunConfig,
    root: &Path,
    subset: Subset,
    split: Split,
    out_dir: Option<&Path>,
    sample_rate: Option<u32>,
) -> Result<()> {
    let rate = sample_rate.unwrap_or(cfg.data.sample_rate);
    let manifest = scan(root, subset, split, &cfg.data.layout, rate)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.data.layout.split_dir(root, subset, split));
    create_dir(&dir)?;
    let path = dir.join(MANIFEST_FILE);
    manifest.write(&path)?;
    let masks: usize = manifest.entries.iter().map(|e| e.masks.len()).sum();
    println!(
        "{subset}/{split}: {} clips, {masks} mask files -> {}",
        manifest.entries.len(),
        path.display()
    );
    let mut run = RunManifest::new("ingest", cfg);
    run.outputs.insert("manifest".into(), MANIFEST_FILE.into());
    run.details = json!({ "clips": manifest.entries.len(), "masks": masks, "subset": subset, "split": split });
    run.write(&dir.join("run_manifest.json"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    cfg: &RunConfig,
    root: &Path,
    subset: Subset,
    split: Split,
    clips: usize,
    frames: usize,
    height: usize,
    width: usize,
    sample_rate: Option<u32>,
) -> Result<()> {
    let sc = SynthConfig {
        subset,
        split,
        clips,
        frames,
        height,
        width,
        sample_rate: sample_rate.unwrap_or(cfg.data.sample_rate),
        seed: cfg.seed,
    };
    let manifest = make_synthetic(&sc, root)?;
    let split_dir = cfg.data.layout.split_dir(root, subset, split);
    println!(
        "synthesized {} clips -> {}",
        manifest.entries.len(),
        manifest.sidecar_path().display()
    );
    let mut run = RunManifest::new("synth", cfg);
    run.outputs.insert("manifest".into(), MANIFEST_FILE.into());
    run.details = serde_json::to_value(&sc)?;
    run.write(&split_dir.join("run_manifest.json"))?;
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, data: &[PathBuf], out_dir: &Path) -> Result<()> {
    let mut clips = Vec::new();
    for path in data {
        clips.extend(load_clips(path)?.1);
    }
    let suite = cfg.backend.open()?;
    create_dir(out_dir)?;
    let out = train(&suite, &clips, cfg, Some(out_dir))?;
    let last = out.losses.last().map(|l| l.total).unwrap_or(f64::NAN);
    println!(
        "trained {} steps on {} clips; final loss {last:.6}; checkpoint {}",
        out.state.step,
        clips.len(),
        out_dir.join("model.av2t").display()
    );
    Ok(())
}

fn overlay(frame: &Array3<f64>, mask: &Array2<bool>) -> Array3<f64> {
    let mut out = frame.clone();
    for ((c, y, x), v) in out.indexed_iter_mut() {
        if mask[[y, x]] {
            *v = (1.0 - OVERLAY_ALPHA) * *v + OVERLAY_ALPHA * OVERLAY_COLOR[c];
        }
    }
    out
}

fn infer_inputs(input: &Path, cfg: &RunConfig) -> Result<Vec<VideoClip>> {
    if !input.exists() {
        return Err(Error::MissingInput(input.to_path_buf()).into());
    }
    if input.is_dir() && input.join(&cfg.data.layout.frames_dir).is_dir() {
        let clip = load_clip_dir(input, &cfg.data.layout, cfg.data.sample_rate)
            .with_context(|| format!("reading clip {}", input.display()))?;
        return Ok(vec![clip]);
    }
    Ok(load_clips(input)?.1)
}

pub fn infer_cmd(
    common: &CommonArgs,
    cfg: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    out_dir: &Path,
    with_overlay: bool,
) -> Result<()> {
    let state = checkpoint_state(checkpoint, common, cfg)?;
    let suite = suite_for(&state, cfg)?;
    let clips = infer_inputs(input, cfg)?;
    create_dir(out_dir)?;
    let mut written = 0;
    for clip in &clips {
        let soft = infer_clip(&suite, &state, clip)?;
        let dir = out_dir.join(&clip.clip_id);
        for (frame, mask) in clip.frames.iter().zip(&soft.masks) {
            let bin = binarize(mask, cfg.eval.threshold);
            let name = format!("{:04}.png", frame.index);
            write_mask(
                &dir.join("masks").join(&name),
                &bin.mapv(|b| b as u8 as f64),
            )?;
            if with_overlay {
                write_frame(
                    &dir.join("overlays").join(&name),
                    &overlay(&frame.pixels, &bin),
                )?;
            }
            written += 1;
        }
    }
    println!(
        "wrote {written} masks for {} clips -> {}",
        clips.len(),
        out_dir.display()
    );
    let mut run = RunManifest::new("infer", cfg);
    run.details = json!({
        "checkpoint": checkpoint,
        "input": input,
        "clips": clips.iter().map(|c| &c.clip_id).collect::<Vec<_>>(),
        "threshold": cfg.eval.threshold,
        "overlay": with_overlay,
        "prompt_source": state.config.train.prompt_source,
        "adapter_enabled": state.config.train.adapter_enabled,
    });
    run.write(&out_dir.join("run_manifest.json"))?;
    Ok(())
}

pub fn eval_cmd(
    common: &CommonArgs,
    cfg: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    out_dir: &Path,
) -> Result<()> {
    let state = checkpoint_state(checkpoint, common, cfg)?;
    let suite = suite_for(&state, cfg)?;
    let (manifest, clips) = load_clips(data)?;
    if clips.is_empty() {
        bail!("{} lists no clips", data.display());
    }
    let report = evaluate_run(&suite, &state, &clips, &cfg.eval)?;
    create_dir(out_dir)?;
    write_json(&out_dir.join("metrics.json"), &report)?;
    println!(
        "{}/{}: M_J {:.2}  M_F {:.3}  ({} frames, threshold {}, beta2 {})",
        manifest.subset,
        manifest.split,
        report.m_j,
        report.m_f,
        report.frames,
        report.threshold,
        report.beta2
    );
    let mut run = RunManifest::new("eval", cfg);
    run.outputs.insert("metrics".into(), "metrics.json".into());
    run.details =
        json!({ "checkpoint": checkpoint, "data": data, "m_j": report.m_j, "m_f": report.m_f });
    run.write(&out_dir.join("run_manifest.json"))?;
    Ok(())
}
