//! Clips, frames, audio segments and masks.
//!
//! Frame and audio indices are 1-based positions inside the owning clip.
//! Pixel intensities are stored in `[0, 1]`; any backend-specific
//! normalization happens inside the encoders.

use std::fmt;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    S4,
    MS3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::S4 => "S4",
            Subset::MS3 => "MS3",
        })
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Subset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S4" => Ok(Subset::S4),
            "MS3" => Ok(Subset::MS3),
            other => Err(format!("unknown subset {other:?} (expected S4 or MS3)")),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split {other:?} (expected train, val or test)"
            )),
        }
    }
}

/// Which frames of a `(subset, split)` carry ground truth.
///
/// S4 training videos are annotated on their first frame only; every other
/// combination is annotated on all frames.
pub fn annotated_frames(subset: Subset, split: Split, num_frames: usize) -> Vec<usize> {
    match (subset, split) {
        (Subset::S4, Split::Train) => vec![1],
        _ => (1..=num_frames).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `(3, height, width)`, values in `[0, 1]`.
    pub pixels: Array3<f64>,
    pub height: usize,
    pub width: usize,
    pub index: usize,
}

impl Frame {
    pub fn new(index: usize, pixels: Array3<f64>) -> Self {
        let (_, height, width) = pixels.dim();
        Self {
            pixels,
            height,
            width,
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    /// Exactly one second of audio at `sample_rate`.
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Binary,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub masks: Vec<Array2<f64>>,
    pub kind: MaskKind,
    /// 1-based frame index for each entry of `masks`.
    pub frame_indices: Vec<usize>,
}

impl MaskSet {
    pub fn binary(frame_indices: Vec<usize>, masks: Vec<Array2<f64>>) -> Self {
        Self {
            masks,
            kind: MaskKind::Binary,
            frame_indices,
        }
    }

    pub fn soft(frame_indices: Vec<usize>, masks: Vec<Array2<f64>>) -> Self {
        Self {
            masks,
            kind: MaskKind::Soft,
            frame_indices,
        }
    }

    pub fn get(&self, frame_index: usize) -> Option<&Array2<f64>> {
        self.frame_indices
            .iter()
            .position(|&i| i == frame_index)
            .map(|k| &self.masks[k])
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub clip_id: String,
    pub frames: Vec<Frame>,
    pub audio: Vec<AudioSegment>,
    pub ground_truth: Option<MaskSet>,
    pub subset: Subset,
    pub split: Split,
}

impl VideoClip {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// True when every frame carries a ground-truth mask.
    pub fn fully_annotated(&self) -> bool {
        match &self.ground_truth {
            Some(gt) => gt.frame_indices == (1..=self.frames.len()).collect::<Vec<_>>(),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyClip,
    LengthMismatch,
    FrameShape,
    FrameIndex,
    PixelRange,
    AudioLength,
    AudioIndex,
    AudioRange,
    MaskCount,
    MaskIndex,
    MaskShape,
    MaskValue,
    AnnotationConvention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{:?}: {}", v.kind, v.message)?;
        }
        Ok(())
    }
}

/// Checks every clip invariant and returns all violations found.
pub fn validate_clip(clip: &VideoClip) -> ValidationReport {
    use ViolationKind::*;

    let mut report = ValidationReport::default();
    let t = clip.frames.len();
    if t == 0 {
        report.push(EmptyClip, format!("{} has no frames", clip.clip_id));
    }
    if clip.audio.len() != t {
        report.push(
            LengthMismatch,
            format!("{} frames but {} audio segments", t, clip.audio.len()),
        );
    }

    for (pos, frame) in clip.frames.iter().enumerate() {
        let dim = frame.pixels.dim();
        if dim != (3, frame.height, frame.width) || frame.height == 0 || frame.width == 0 {
            report.push(
                FrameShape,
                format!(
                    "frame {} pixels {:?} do not match (3, {}, {})",
                    frame.index, dim, frame.height, frame.width
                ),
            );
        }
        if frame.index != pos + 1 {
            report.push(
                FrameIndex,
                format!("frame at position {} has index {}", pos + 1, frame.index),
            );
        }
        if frame.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            report.push(
                PixelRange,
                format!("frame {} has intensities outside [0, 1]", frame.index),
            );
        }
    }

    for (pos, seg) in clip.audio.iter().enumerate() {
        if seg.sample_rate == 0 || seg.samples.len() != seg.sample_rate as usize {
            report.push(
                AudioLength,
                format!(
                    "audio {} has {} samples at {} Hz (expected one second)",
                    seg.index,
                    seg.samples.len(),
                    seg.sample_rate
                ),
            );
        }
        if seg.index != pos + 1 || seg.index > t {
            report.push(
                AudioIndex,
                format!("audio at position {} has index {}", pos + 1, seg.index),
            );
        }
        if seg.samples.iter().any(|s| !(-1.0..=1.0).contains(s)) {
            report.push(
                AudioRange,
                format!("audio {} has samples outside [-1, 1]", seg.index),
            );
        }
    }

    if let Some(gt) = &clip.ground_truth {
        if gt.masks.len() != gt.frame_indices.len() {
            report.push(
                MaskCount,
                format!(
                    "{} masks for {} frame indices",
                    gt.masks.len(),
                    gt.frame_indices.len()
                ),
            );
        }
        if gt.frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            report.push(MaskIndex, "mask frame indices are not strictly increasing");
        }
        for (&idx, mask) in gt.frame_indices.iter().zip(&gt.masks) {
            let Some(frame) = (idx >= 1).then(|| clip.frames.get(idx - 1)).flatten() else {
                report.push(MaskIndex, format!("mask refers to missing frame {idx}"));
                continue;
            };
            if mask.dim() != (frame.height, frame.width) {
                report.push(
                    MaskShape,
                    format!(
                        "mask {} is {:?}, frame is ({}, {})",
                        idx,
                        mask.dim(),
                        frame.height,
                        frame.width
                    ),
                );
            }
            let bad = match gt.kind {
                MaskKind::Binary => mask.iter().any(|&m| m != 0.0 && m != 1.0),
                MaskKind::Soft => mask.iter().any(|m| !(0.0..=1.0).contains(m)),
            };
            if bad {
                report.push(
                    MaskValue,
                    format!("mask {} has values outside its {:?} range", idx, gt.kind),
                );
            }
        }

        let expected = annotated_frames(clip.subset, clip.split, t);
        if gt.frame_indices != expected {
            report.push(
                AnnotationConvention,
                format!(
                    "{}/{} clip annotated on frames {:?}, convention requires {:?}",
                    clip.subset, clip.split, gt.frame_indices, expected
                ),
            );
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_clip(t: usize, subset: Subset, split: Split, masked: &[usize]) -> VideoClip {
        let frames = (1..=t)
            .map(|i| Frame::new(i, Array3::from_elem((3, 4, 5), 0.25)))
            .collect();
        let audio = (1..=t)
            .map(|i| AudioSegment {
                samples: vec![0.1; 8],
                sample_rate: 8,
                index: i,
            })
            .collect();
        let masks = masked
            .iter()
            .map(|_| Array2::from_shape_fn((4, 5), |(y, _)| (y < 2) as u8 as f64))
            .collect();
        VideoClip {
            clip_id: "c0".into(),
            frames,
            audio,
            ground_truth: Some(MaskSet::binary(masked.to_vec(), masks)),
            subset,
            split,
        }
    }

    #[test]
    fn s4_train_first_frame_only_is_valid() {
        let clip = tiny_clip(5, Subset::S4, Split::Train, &[1]);
        let report = validate_clip(&clip);
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn audio_count_mismatch_is_reported() {
        let mut clip = tiny_clip(5, Subset::S4, Split::Train, &[1]);
        clip.audio.pop();
        assert!(validate_clip(&clip).has(ViolationKind::LengthMismatch));
    }

    #[test]
    fn s4_train_fully_annotated_violates_convention() {
        let clip = tiny_clip(5, Subset::S4, Split::Train, &[1, 2, 3, 4, 5]);
        let report = validate_clip(&clip);
        assert!(report.has(ViolationKind::AnnotationConvention));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn ms3_requires_all_frames() {
        let clip = tiny_clip(3, Subset::MS3, Split::Train, &[1]);
        assert!(validate_clip(&clip).has(ViolationKind::AnnotationConvention));
        let clip = tiny_clip(3, Subset::MS3, Split::Train, &[1, 2, 3]);
        assert!(validate_clip(&clip).is_valid());
        let clip = tiny_clip(3, Subset::S4, Split::Val, &[1, 2, 3]);
        assert!(validate_clip(&clip).is_valid());
    }

    #[test]
    fn non_binary_mask_and_bad_audio_length() {
        let mut clip = tiny_clip(2, Subset::MS3, Split::Test, &[1, 2]);
        clip.ground_truth.as_mut().unwrap().masks[1][[0, 0]] = 0.5;
        clip.audio[0].samples.push(0.0);
        let report = validate_clip(&clip);
        assert!(report.has(ViolationKind::MaskValue));
        assert!(report.has(ViolationKind::AudioLength));
    }

    #[test]
    fn mask_shape_and_frame_shape() {
        let mut clip = tiny_clip(2, Subset::MS3, Split::Test, &[1, 2]);
        clip.ground_truth.as_mut().unwrap().masks[0] = Array2::zeros((3, 3));
        clip.frames[1].height = 9;
        let report = validate_clip(&clip);
        assert!(report.has(ViolationKind::MaskShape));
        assert!(report.has(ViolationKind::FrameShape));
    }

    #[test]
    fn validation_is_pure() {
        let mut clip = tiny_clip(3, Subset::S4, Split::Train, &[1, 2]);
        clip.audio[2].index = 7;
        assert_eq!(validate_clip(&clip), validate_clip(&clip));
    }
}
