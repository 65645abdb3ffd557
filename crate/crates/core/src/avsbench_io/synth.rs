//! Deterministic synthetic datasets: bright geometric shapes on dark
//! backgrounds, each shape paired with a tone, and masks equal to the shape
//! footprints.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{scan, write_clip, DatasetManifest, Layout};
use crate::datamodel::{annotated_frames, AudioSegment, Frame, MaskSet, Split, Subset, VideoClip};
use crate::error::{Error, Result};
use crate::nn::component_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subset: Subset,
    pub split: Split,
    pub clips: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subset: Subset::S4,
            split: Split::Train,
            clips: 4,
            frames: 3,
            height: 64,
            width: 64,
            sample_rate: 4000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Square,
    Triangle,
}

impl ShapeKind {
    const ALL: [ShapeKind; 3] = [ShapeKind::Disk, ShapeKind::Square, ShapeKind::Triangle];

    fn name(self) -> &'static str {
        match self {
            ShapeKind::Disk => "disk",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
        }
    }

    fn base_color(self) -> [f64; 3] {
        match self {
            ShapeKind::Disk => [0.95, 0.35, 0.2],
            ShapeKind::Square => [0.3, 0.9, 0.4],
            ShapeKind::Triangle => [0.35, 0.5, 0.95],
        }
    }

    /// Tone frequency as a fraction of the sample rate.
    fn tone_fraction(self) -> f64 {
        match self {
            ShapeKind::Disk => 1.0 / 16.0,
            ShapeKind::Square => 2.0 / 16.0,
            ShapeKind::Triangle => 3.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    /// Center in pixel units at frame 1, and per-frame displacement.
    pub center: (f64, f64),
    pub velocity: (f64, f64),
    pub radius: f64,
    pub color: [f64; 3],
}

impl Shape {
    fn contains(&self, frame: usize, x: f64, y: f64) -> bool {
        let t = (frame - 1) as f64;
        let cx = self.center.0 + self.velocity.0 * t;
        let cy = self.center.1 + self.velocity.1 * t;
        let (dx, dy) = (x - cx, y - cy);
        let r = self.radius;
        match self.kind {
            ShapeKind::Disk => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
            ShapeKind::Triangle => dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0,
        }
    }
}

/// Everything needed to regenerate one synthetic clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPlan {
    pub clip_id: String,
    pub category: String,
    pub background: [f64; 3],
    pub shapes: Vec<Shape>,
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

impl ClipPlan {
    pub fn new(cfg: &SynthConfig, index: usize) -> Self {
        let mut rng = component_rng(cfg.seed, &format!("synthetic/clip{index}"));
        let n_shapes = match cfg.subset {
            Subset::S4 => 1,
            Subset::MS3 => 2,
        };
        let first = rng.random_range(0..3usize);
        let (w, h) = (cfg.width as f64, cfg.height as f64);
        let side = w.min(h);
        let shapes: Vec<Shape> = (0..n_shapes)
            .map(|k| {
                let kind = ShapeKind::ALL[(first + k) % 3];
                let radius = side * rng.random_range(0.14..0.22);
                let span = cfg.frames.max(2) as f64 - 1.0;
                let cx0 = rng.random_range(radius + 1.0..w - radius - 1.0);
                let cx1 = rng.random_range(radius + 1.0..w - radius - 1.0);
                let cy0 = rng.random_range(radius + 1.0..h - radius - 1.0);
                let cy1 = rng.random_range(radius + 1.0..h - radius - 1.0);
                let base = kind.base_color();
                let color = [0, 1, 2].map(|c| quantize(base[c] + rng.random_range(-0.05..0.05)));
                Shape {
                    kind,
                    center: (cx0, cy0),
                    velocity: ((cx1 - cx0) / span, (cy1 - cy0) / span),
                    radius,
                    color,
                }
            })
            .collect();
        let background = [0, 1, 2].map(|_| quantize(rng.random_range(0.02..0.2)));
        let category = match cfg.subset {
            Subset::S4 => shapes[0].kind.name().to_string(),
            Subset::MS3 => "mixed".to_string(),
        };
        Self {
            clip_id: format!("{}_{index:04}", shapes[0].kind.name()),
            category,
            background,
            shapes,
        }
    }

    /// Union of every sounding shape's footprint, sampled at pixel centers.
    pub fn footprint(&self, frame: usize, height: usize, width: usize) -> Array2<bool> {
        Array2::from_shape_fn((height, width), |(y, x)| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            self.shapes.iter().any(|s| s.contains(frame, px, py))
        })
    }

    pub fn render(&self, frame: usize, height: usize, width: usize) -> Array3<f64> {
        let mut px = Array3::zeros((3, height, width));
        for y in 0..height {
            for x in 0..width {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let color = self
                    .shapes
                    .iter()
                    .rev()
                    .find(|s| s.contains(frame, cx, cy))
                    .map(|s| s.color)
                    .unwrap_or(self.background);
                for c in 0..3 {
                    px[[c, y, x]] = color[c];
                }
            }
        }
        px
    }

    /// One second of the shapes' tones, quantized to the 16-bit PCM grid.
    pub fn audio(&self, frame: usize, sample_rate: u32) -> Vec<f64> {
        let amp = 0.6 / self.shapes.len() as f64;
        let phase = (frame - 1) as f64 * 0.3;
        (0..sample_rate as usize)
            .map(|i| {
                let t = i as f64;
                let v: f64 = self
                    .shapes
                    .iter()
                    .map(|s| {
                        amp * (std::f64::consts::TAU * s.kind.tone_fraction() * t + phase).sin()
                    })
                    .sum();
                (v * 32768.0).round() / 32768.0
            })
            .collect()
    }

    pub fn to_clip(&self, cfg: &SynthConfig) -> VideoClip {
        let frames = (1..=cfg.frames)
            .map(|i| Frame::new(i, self.render(i, cfg.height, cfg.width)))
            .collect();
        let audio = (1..=cfg.frames)
            .map(|i| AudioSegment {
                samples: self.audio(i, cfg.sample_rate),
                sample_rate: cfg.sample_rate,
                index: i,
            })
            .collect();
        let indices = annotated_frames(cfg.subset, cfg.split, cfg.frames);
        let masks = indices
            .iter()
            .map(|&i| {
                self.footprint(i, cfg.height, cfg.width)
                    .mapv(|b| b as u8 as f64)
            })
            .collect();
        VideoClip {
            clip_id: self.clip_id.clone(),
            frames,
            audio,
            ground_truth: Some(MaskSet::binary(indices, masks)),
            subset: cfg.subset,
            split: cfg.split,
        }
    }
}

/// Writes a synthetic split under `root` and its manifest sidecar.
pub fn make_synthetic(cfg: &SynthConfig, root: &Path) -> Result<DatasetManifest> {
    if cfg.clips == 0 || cfg.frames == 0 || cfg.height < 8 || cfg.width < 8 || cfg.sample_rate == 0
    {
        return Err(Error::Invalid(
            "synthetic config needs positive counts and frames of at least 8x8".into(),
        ));
    }
    let layout = Layout::default();
    for c in 0..cfg.clips {
        let plan = ClipPlan::new(cfg, c);
        write_clip(&plan.to_clip(cfg), root, &plan.category, &layout)?;
    }
    let manifest = scan(root, cfg.subset, cfg.split, &layout, cfg.sample_rate)?;
    manifest.write(&manifest.sidecar_path())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::frame_iou;
    use walkdir::WalkDir;

    fn cfg(subset: Subset, split: Split) -> SynthConfig {
        SynthConfig {
            subset,
            split,
            clips: 2,
            frames: 3,
            height: 24,
            width: 32,
            sample_rate: 160,
            seed: 7,
        }
    }

    fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| {
                let rel = e
                    .path()
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                (rel, std::fs::read(e.path()).unwrap())
            })
            .collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = cfg(Subset::S4, Split::Train);
        make_synthetic(&c, a.path()).unwrap();
        make_synthetic(&c, b.path()).unwrap();
        let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
        // Manifests embed their root; compare everything else byte for byte.
        let strip = |t: Vec<(String, Vec<u8>)>| -> Vec<_> {
            t.into_iter()
                .filter(|(n, _)| !n.ends_with("manifest.json"))
                .collect()
        };
        assert_eq!(strip(ta), strip(tb));
    }

    #[test]
    fn s4_train_clip_has_one_mask_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic(&cfg(Subset::S4, Split::Train), dir.path()).unwrap();
        assert!(m.entries.iter().all(|e| e.masks.len() == 1));
    }

    #[test]
    fn masks_equal_rasterized_footprint() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(Subset::MS3, Split::Val);
        let m = make_synthetic(&c, dir.path()).unwrap();
        for (k, clip) in m.load_all().unwrap().iter().enumerate() {
            let plan = ClipPlan::new(&c, k);
            assert_eq!(plan.clip_id, clip.clip_id);
            let gt = clip.ground_truth.as_ref().unwrap();
            for (&i, mask) in gt.frame_indices.iter().zip(&gt.masks) {
                let fp = plan.footprint(i, c.height, c.width);
                assert!(fp.iter().any(|&b| b), "empty footprint");
                let mb = mask.mapv(|v| v == 1.0);
                assert_eq!(frame_iou(mb.view(), fp.view()).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn rejects_empty_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(Subset::S4, Split::Train);
        c.clips = 0;
        assert!(make_synthetic(&c, dir.path()).is_err());
    }
}
