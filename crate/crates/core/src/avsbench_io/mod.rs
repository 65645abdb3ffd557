//! AVSBench-style dataset trees: scanning, manifests, clip loading, and a
//! synthetic generator for desk-scale runs.
//!
//! A split lives under `root/<split_template>` (default `{subset}/{split}`).
//! Every directory below it that contains a frames folder is one clip; when
//! the clip sits one level deeper, the intermediate directory is its
//! category. Inside a clip:
//!
//! ```text
//! frames/0001.png ...   one RGB image per frame
//! audio/0001.wav ...    one 1-second wave per frame, or a single wave covering the clip
//! masks/0001.png ...    bilevel masks (first frame only for S4 train)
//! ```

pub mod media;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::datamodel::{
    annotated_frames, validate_clip, AudioSegment, Frame, MaskSet, Split, Subset, VideoClip,
};
use crate::error::{Error, Result};
use crate::resample::resample_linear;

pub use synth::{make_synthetic, ClipPlan, Shape, ShapeKind, SynthConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Published split sizes (train, val, test).
pub fn official_split_size(subset: Subset, split: Split) -> usize {
    match (subset, split) {
        (Subset::S4, Split::Train) => 3452,
        (Subset::S4, Split::Val) | (Subset::S4, Split::Test) => 740,
        (Subset::MS3, Split::Train) => 296,
        (Subset::MS3, Split::Val) | (Subset::MS3, Split::Test) => 64,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub split_template: String,
    pub frames_dir: String,
    pub audio_dir: String,
    pub masks_dir: String,
    pub frame_ext: String,
    pub audio_ext: String,
    pub mask_ext: String,
    /// Require the published per-split clip counts.
    pub enforce_official_counts: bool,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            split_template: "{subset}/{split}".into(),
            frames_dir: "frames".into(),
            audio_dir: "audio".into(),
            masks_dir: "masks".into(),
            frame_ext: "png".into(),
            audio_ext: "wav".into(),
            mask_ext: "png".into(),
            enforce_official_counts: false,
        }
    }
}

impl Layout {
    pub fn split_dir(&self, root: &Path, subset: Subset, split: Split) -> PathBuf {
        let rel = self
            .split_template
            .replace("{subset}", &subset.to_string())
            .replace("{split}", &split.to_string());
        root.join(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub category: String,
    /// Paths relative to the manifest root, `/`-separated.
    pub frames: Vec<String>,
    pub audio: Vec<String>,
    pub masks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub manifest_version: u32,
    pub root: PathBuf,
    pub subset: Subset,
    pub split: Split,
    pub sample_rate: u32,
    pub layout: Layout,
    pub declared_total: Option<usize>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entry(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    pub fn clip_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.clip_id.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Default sidecar location: `<split dir>/manifest.json`.
    pub fn sidecar_path(&self) -> PathBuf {
        self.layout
            .split_dir(&self.root, self.subset, self.split)
            .join(MANIFEST_FILE)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: m.manifest_version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn load_all(&self) -> Result<Vec<VideoClip>> {
        self.entries
            .iter()
            .map(|e| load_clip(self, &e.clip_id))
            .collect()
    }
}

fn rel_string(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|x| x.to_string_lossy().eq_ignore_ascii_case(ext))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Builds a manifest for one split, checking file counts against the
/// annotation convention of `(subset, split)`.
pub fn scan(
    root: &Path,
    subset: Subset,
    split: Split,
    layout: &Layout,
    sample_rate: u32,
) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::MissingInput(root.to_path_buf()));
    }
    // Absolute so the manifest can be read from any working directory.
    let root = &std::path::absolute(root).map_err(|e| Error::io(root, e))?;
    let split_dir = layout.split_dir(root, subset, split);
    if !split_dir.is_dir() {
        return Err(Error::MissingInput(split_dir));
    }
    if sample_rate == 0 {
        return Err(Error::Invalid("sample_rate must be positive".into()));
    }

    let mut clip_dirs: Vec<PathBuf> = WalkDir::new(&split_dir)
        .min_depth(1)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_dir() && e.path().join(&layout.frames_dir).is_dir())
        .map(|e| e.into_path())
        .collect();
    clip_dirs.sort_by(|a, b| {
        let ka = (a.file_name(), a.strip_prefix(&split_dir).ok());
        let kb = (b.file_name(), b.strip_prefix(&split_dir).ok());
        ka.cmp(&kb)
    });

    let mut problems = Vec::new();
    let mut entries = Vec::with_capacity(clip_dirs.len());
    for dir in clip_dirs {
        let clip_id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let category = match dir.parent() {
            Some(p) if p != split_dir => p.file_name().unwrap().to_string_lossy().into_owned(),
            _ => "unknown".to_string(),
        };
        let frames = list_files(&dir.join(&layout.frames_dir), &layout.frame_ext)?;
        let audio = list_files(&dir.join(&layout.audio_dir), &layout.audio_ext)?;
        let masks = list_files(&dir.join(&layout.masks_dir), &layout.mask_ext)?;
        let t = frames.len();
        if t == 0 {
            problems.push(format!("{clip_id}: no frames"));
            continue;
        }
        if audio.len() != t && audio.len() != 1 {
            problems.push(format!(
                "{clip_id}: {} audio files for {t} frames (expected {t} or 1)",
                audio.len()
            ));
        }
        let expected_masks = annotated_frames(subset, split, t).len();
        if masks.len() != expected_masks {
            problems.push(format!(
                "{clip_id}: {} mask files, {subset}/{split} convention requires {expected_masks}",
                masks.len()
            ));
        }
        for m in &masks {
            media::probe_image(m)?;
        }
        if entries.iter().any(|e: &ManifestEntry| e.clip_id == clip_id) {
            problems.push(format!("{clip_id}: duplicate clip id"));
        }
        entries.push(ManifestEntry {
            clip_id,
            category,
            frames: frames.iter().map(|p| rel_string(root, p)).collect(),
            audio: audio.iter().map(|p| rel_string(root, p)).collect(),
            masks: masks.iter().map(|p| rel_string(root, p)).collect(),
        });
    }

    let declared_total = layout
        .enforce_official_counts
        .then(|| official_split_size(subset, split));
    if let Some(total) = declared_total {
        if entries.len() != total {
            problems.push(format!(
                "{subset}/{split} has {} clips, expected {total}",
                entries.len()
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Scan {
            root: split_dir,
            problems,
        });
    }

    Ok(DatasetManifest {
        manifest_version: MANIFEST_VERSION,
        root: root.to_path_buf(),
        subset,
        split,
        sample_rate,
        layout: layout.clone(),
        declared_total,
        entries,
    })
}

/// One second of audio at `target_rate`, taken from `samples[start..]` at
/// `file_rate`; short input is zero-padded.
fn one_second(samples: &[f64], start: usize, file_rate: u32, target_rate: u32) -> Vec<f64> {
    let n = file_rate as usize;
    let mut chunk: Vec<f64> = samples.iter().skip(start).take(n).copied().collect();
    chunk.resize(n, 0.0);
    resample_linear(&chunk, target_rate as usize)
}

pub fn load_clip(manifest: &DatasetManifest, clip_id: &str) -> Result<VideoClip> {
    let entry = manifest
        .entry(clip_id)
        .ok_or_else(|| Error::Invalid(format!("clip {clip_id} not in manifest")))?;
    let path = |rel: &str| manifest.root.join(rel);

    let frames: Vec<Frame> = entry
        .frames
        .iter()
        .enumerate()
        .map(|(i, rel)| Ok(Frame::new(i + 1, media::read_frame(&path(rel))?)))
        .collect::<Result<_>>()?;
    let t = frames.len();
    let rate = manifest.sample_rate;

    let audio = if entry.audio.len() == 1 && t > 1 {
        let (samples, file_rate) = media::read_wav(&path(&entry.audio[0]))?;
        (0..t)
            .map(|i| AudioSegment {
                samples: one_second(&samples, i * file_rate as usize, file_rate, rate),
                sample_rate: rate,
                index: i + 1,
            })
            .collect()
    } else {
        entry
            .audio
            .iter()
            .enumerate()
            .map(|(i, rel)| {
                let (samples, file_rate) = media::read_wav(&path(rel))?;
                Ok(AudioSegment {
                    samples: one_second(&samples, 0, file_rate, rate),
                    sample_rate: rate,
                    index: i + 1,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let ground_truth = if entry.masks.is_empty() {
        None
    } else {
        let indices = if entry.masks.len() == 1
            && manifest.subset == Subset::S4
            && manifest.split == Split::Train
        {
            vec![1]
        } else {
            (1..=entry.masks.len()).collect()
        };
        let masks = entry
            .masks
            .iter()
            .map(|rel| media::read_mask(&path(rel)))
            .collect::<Result<Vec<_>>>()?;
        Some(MaskSet::binary(indices, masks))
    };

    let clip = VideoClip {
        clip_id: entry.clip_id.clone(),
        frames,
        audio,
        ground_truth,
        subset: manifest.subset,
        split: manifest.split,
    };
    let report = validate_clip(&clip);
    if !report.is_valid() {
        return Err(Error::Convention(format!("{clip_id}: {report}")));
    }
    Ok(clip)
}

/// Loads one clip folder (`frames/`, `audio/`) without a manifest, for
/// inference. Masks are not read; the clip is labelled MS3/test.
pub fn load_clip_dir(dir: &Path, layout: &Layout, sample_rate: u32) -> Result<VideoClip> {
    let frames_dir = dir.join(&layout.frames_dir);
    if !frames_dir.is_dir() {
        return Err(Error::MissingInput(frames_dir));
    }
    let root = dir.parent().unwrap_or(dir).to_path_buf();
    let clip_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let frames = list_files(&frames_dir, &layout.frame_ext)?;
    let audio = list_files(&dir.join(&layout.audio_dir), &layout.audio_ext)?;
    if frames.is_empty() || audio.is_empty() {
        return Err(Error::Scan {
            root: dir.to_path_buf(),
            problems: vec![format!("{clip_id}: needs frames and audio")],
        });
    }
    let manifest = DatasetManifest {
        manifest_version: MANIFEST_VERSION,
        root: root.clone(),
        subset: Subset::MS3,
        split: Split::Test,
        sample_rate,
        layout: layout.clone(),
        declared_total: None,
        entries: vec![ManifestEntry {
            clip_id: clip_id.clone(),
            category: "unknown".into(),
            frames: frames.iter().map(|p| rel_string(&root, p)).collect(),
            audio: audio.iter().map(|p| rel_string(&root, p)).collect(),
            masks: Vec::new(),
        }],
    };
    load_clip(&manifest, &clip_id)
}

/// Writes a clip into `root` following `layout`; returns the clip directory.
pub fn write_clip(
    clip: &VideoClip,
    root: &Path,
    category: &str,
    layout: &Layout,
) -> Result<PathBuf> {
    let dir = layout
        .split_dir(root, clip.subset, clip.split)
        .join(category)
        .join(&clip.clip_id);
    for f in &clip.frames {
        media::write_frame(
            &dir.join(&layout.frames_dir)
                .join(format!("{:04}.{}", f.index, layout.frame_ext)),
            &f.pixels,
        )?;
    }
    for a in &clip.audio {
        media::write_wav(
            &dir.join(&layout.audio_dir)
                .join(format!("{:04}.{}", a.index, layout.audio_ext)),
            &a.samples,
            a.sample_rate,
        )?;
    }
    if let Some(gt) = &clip.ground_truth {
        for (&idx, m) in gt.frame_indices.iter().zip(&gt.masks) {
            media::write_mask(
                &dir.join(&layout.masks_dir)
                    .join(format!("{:04}.{}", idx, layout.mask_ext)),
                m,
            )?;
        }
    }
    Ok(dir)
}
