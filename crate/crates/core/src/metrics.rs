//! Mean IoU (`M_J`, reported ×100) and F-score (`M_F`) over all annotated frames.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::datamodel::{MaskSet, VideoClip};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BETA2: f64 = 1.0;

/// Foreground where `p >= threshold`.
pub fn binarize(soft: &Array2<f64>, threshold: f64) -> Array2<bool> {
    soft.mapv(|p| p >= threshold)
}

fn counts(pred: ArrayView2<bool>, gt: ArrayView2<bool>) -> Result<(usize, usize, usize)> {
    if pred.dim() != gt.dim() {
        return Err(Error::dim(
            "metric masks",
            format!("{:?}", gt.dim()),
            format!("{:?}", pred.dim()),
        ));
    }
    let (mut inter, mut np, mut ng) = (0, 0, 0);
    Zip::from(pred).and(gt).for_each(|&p, &g| {
        inter += (p && g) as usize;
        np += p as usize;
        ng += g as usize;
    });
    Ok((inter, np, ng))
}

/// `|pred ∩ gt| / |pred ∪ gt|`, with 1.0 when both are empty.
pub fn frame_iou(pred: ArrayView2<bool>, gt: ArrayView2<bool>) -> Result<f64> {
    let (inter, np, ng) = counts(pred, gt)?;
    let union = np + ng - inter;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// `(1 + β²)·P·R / (β²·P + R)`.
///
/// Precision is 1 for an empty prediction, recall is 1 for an empty ground
/// truth, and the score is 0 when the denominator vanishes.
pub fn frame_fscore(pred: ArrayView2<bool>, gt: ArrayView2<bool>, beta2: f64) -> Result<f64> {
    if beta2.is_nan() || beta2 < 0.0 {
        return Err(Error::Invalid(format!(
            "beta2 must be nonnegative, got {beta2}"
        )));
    }
    let (inter, np, ng) = counts(pred, gt)?;
    let precision = if np == 0 {
        1.0
    } else {
        inter as f64 / np as f64
    };
    let recall = if ng == 0 {
        1.0
    } else {
        inter as f64 / ng as f64
    };
    let den = beta2 * precision + recall;
    Ok(if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub clip_id: String,
    pub iou: Vec<f64>,
    pub fscore: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub m_j: f64,
    pub m_f: f64,
    pub threshold: f64,
    pub beta2: f64,
    pub frames: usize,
    /// Sorted by clip id.
    pub per_video: Vec<VideoMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Scores `predictions[k]` against `dataset[k]`.
///
/// Aggregates are unweighted means over every frame of every clip, reduced in
/// clip-id order so the result does not depend on the input order.
pub fn evaluate(
    predictions: &[MaskSet],
    dataset: &[VideoClip],
    threshold: f64,
    beta2: f64,
) -> Result<MetricsReport> {
    if predictions.len() != dataset.len() {
        return Err(Error::dim(
            "predictions per clip",
            dataset.len(),
            predictions.len(),
        ));
    }
    let missing: Vec<String> = dataset
        .iter()
        .filter(|c| !c.fully_annotated())
        .map(|c| c.clip_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }

    let mut per_video = Vec::with_capacity(dataset.len());
    for (pred, clip) in predictions.iter().zip(dataset) {
        let gt = clip.ground_truth.as_ref().expect("checked above");
        let mut iou = Vec::with_capacity(gt.len());
        let mut fscore = Vec::with_capacity(gt.len());
        for (&idx, g) in gt.frame_indices.iter().zip(&gt.masks) {
            let p = pred.get(idx).ok_or_else(|| {
                Error::Invalid(format!("{}: prediction missing frame {idx}", clip.clip_id))
            })?;
            let pb = binarize(p, threshold);
            let gb = g.mapv(|v| v >= 0.5);
            iou.push(frame_iou(pb.view(), gb.view())?);
            fscore.push(frame_fscore(pb.view(), gb.view(), beta2)?);
        }
        per_video.push(VideoMetrics {
            clip_id: clip.clip_id.clone(),
            iou,
            fscore,
        });
    }
    per_video.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let frames: usize = per_video.iter().map(|v| v.iou.len()).sum();
    let (mut sj, mut sf) = (0.0, 0.0);
    for v in &per_video {
        sj += v.iou.iter().sum::<f64>();
        sf += v.fscore.iter().sum::<f64>();
    }
    let denom = frames.max(1) as f64;
    Ok(MetricsReport {
        m_j: sj / denom * 100.0,
        m_f: sf / denom,
        threshold,
        beta2,
        frames,
        per_video,
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mask(rows: &[&str]) -> Array2<bool> {
        let h = rows.len();
        let w = rows[0].len();
        Array2::from_shape_fn((h, w), |(y, x)| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn iou_examples() {
        let a = mask(&["#.", ".#"]);
        assert_eq!(frame_iou(a.view(), a.view()).unwrap(), 1.0);
        let b = mask(&[".#", "#."]);
        assert_eq!(frame_iou(a.view(), b.view()).unwrap(), 0.0);
        let gt = mask(&["##.", "##.", "..."]);
        let pred = mask(&["##.", "#..", "..#"]);
        assert_eq!(frame_iou(pred.view(), gt.view()).unwrap(), 0.6);
        let e = mask(&["..", ".."]);
        assert_eq!(frame_iou(e.view(), e.view()).unwrap(), 1.0);
    }

    #[test]
    fn fscore_examples() {
        let gt = mask(&["##", ".."]);
        let pred = mask(&["#.", ".."]);
        assert!((frame_fscore(pred.view(), gt.view(), 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((frame_fscore(pred.view(), gt.view(), 0.3).unwrap() - 0.8125).abs() < 1e-15);
        for b in [0.0, 0.3, 1.0, 4.0] {
            assert_eq!(frame_fscore(gt.view(), gt.view(), b).unwrap(), 1.0);
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = mask(&["#."]);
        let b = mask(&["#", "."]);
        assert!(frame_iou(a.view(), b.view()).is_err());
        assert!(frame_fscore(a.view(), b.view(), 1.0).is_err());
    }

    #[test]
    fn binarize_threshold_monotone() {
        let soft = array![[0.1, 0.5, 0.9], [0.49, 0.51, 1.0]];
        let mut prev = usize::MAX;
        for t in [0.0, 0.1, 0.5, 0.9, 1.0, 1.1] {
            let n = binarize(&soft, t).iter().filter(|&&b| b).count();
            assert!(n <= prev);
            prev = n;
        }
    }
}
