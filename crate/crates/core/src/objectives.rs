//! Training objective: binary cross-entropy plus soft IoU loss, unweighted.
//!
//! Both losses consume probabilities. BCE clamps them to
//! `[BCE_EPS, 1 - BCE_EPS]` and averages over every annotated pixel. The IoU
//! loss is `1 - (Σpg + ε) / (Σp + Σg - Σpg + ε)` per annotated frame, then
//! averaged over frames.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datamodel::MaskSet;
use crate::error::{Error, Result};

pub const BCE_EPS: f64 = 1e-7;
pub const IOU_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub iou: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(bce: f64, iou: f64) -> Self {
        Self {
            bce,
            iou,
            total: bce + iou,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bce.is_finite() && self.iou.is_finite() && self.total.is_finite()
    }
}

/// Pairs `pred` and `gt` by frame index; only frames annotated in `gt` are kept.
fn pair_frames<'a>(
    pred: &'a MaskSet,
    gt: &'a MaskSet,
) -> Result<Vec<(&'a Array2<f64>, &'a Array2<f64>)>> {
    if gt.is_empty() {
        return Err(Error::Invalid("no annotated frames to score".into()));
    }
    gt.frame_indices
        .iter()
        .zip(&gt.masks)
        .map(|(&idx, g)| {
            let p = pred
                .get(idx)
                .ok_or_else(|| Error::Invalid(format!("prediction missing frame {idx}")))?;
            Ok((p, g))
        })
        .collect()
}

fn check_shapes(pairs: &[(&Array2<f64>, &Array2<f64>)]) -> Result<()> {
    for (k, (p, g)) in pairs.iter().enumerate() {
        if p.dim() != g.dim() {
            return Err(Error::dim(
                format!("loss frame {k}"),
                format!("{:?}", g.dim()),
                format!("{:?}", p.dim()),
            ));
        }
    }
    Ok(())
}

fn bce_value(pairs: &[(&Array2<f64>, &Array2<f64>)]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, g) in pairs {
        for (&pv, &gv) in p.iter().zip(g.iter()) {
            let pc = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
            sum -= gv * pc.ln() + (1.0 - gv) * (1.0 - pc).ln();
        }
        count += p.len();
    }
    sum / count as f64
}

fn iou_frame(p: &Array2<f64>, g: &Array2<f64>) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sum = 0.0;
    for (&pv, &gv) in p.iter().zip(g.iter()) {
        inter += pv * gv;
        sum += pv + gv;
    }
    let union = sum - inter;
    (1.0 - (inter + IOU_EPS) / (union + IOU_EPS), inter, union)
}

fn iou_value(pairs: &[(&Array2<f64>, &Array2<f64>)]) -> f64 {
    pairs.iter().map(|(p, g)| iou_frame(p, g).0).sum::<f64>() / pairs.len() as f64
}

pub fn bce_loss(pred: &MaskSet, gt: &MaskSet) -> Result<f64> {
    let pairs = pair_frames(pred, gt)?;
    check_shapes(&pairs)?;
    if pairs.iter().all(|(p, _)| p.is_empty()) {
        return Err(Error::Invalid("no annotated pixels to score".into()));
    }
    Ok(bce_value(&pairs))
}

pub fn iou_loss(pred: &MaskSet, gt: &MaskSet) -> Result<f64> {
    let pairs = pair_frames(pred, gt)?;
    check_shapes(&pairs)?;
    Ok(iou_value(&pairs))
}

pub fn total_loss(pred: &MaskSet, gt: &MaskSet) -> Result<LossBreakdown> {
    Ok(LossBreakdown::new(bce_loss(pred, gt)?, iou_loss(pred, gt)?))
}

/// Loss over a batch of annotated frames and its gradient with respect to
/// every predicted probability.
pub fn total_loss_with_grad(
    preds: &[&Array2<f64>],
    gts: &[&Array2<f64>],
) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
    if preds.len() != gts.len() {
        return Err(Error::dim("loss batch", gts.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::Invalid("no annotated frames to score".into()));
    }
    let pairs: Vec<_> = preds.iter().copied().zip(gts.iter().copied()).collect();
    check_shapes(&pairs)?;
    let pixels: usize = preds.iter().map(|p| p.len()).sum();
    if pixels == 0 {
        return Err(Error::Invalid("no annotated pixels to score".into()));
    }
    let frames = preds.len() as f64;
    let n = pixels as f64;

    let mut grads = Vec::with_capacity(preds.len());
    for (p, g) in &pairs {
        let (_, inter, union) = iou_frame(p, g);
        let num = inter + IOU_EPS;
        let den = union + IOU_EPS;
        let mut grad = Array2::zeros(p.dim());
        ndarray::Zip::from(&mut grad)
            .and(*p)
            .and(*g)
            .for_each(|d, &pv, &gv| {
                let bce = if pv > BCE_EPS && pv < 1.0 - BCE_EPS {
                    (-gv / pv + (1.0 - gv) / (1.0 - pv)) / n
                } else {
                    0.0
                };
                // d(num/den)/dp = (g·den − num·(1 − g)) / den²
                let iou = -(gv * den - num * (1.0 - gv)) / (den * den) / frames;
                *d = bce + iou;
            });
        grads.push(grad);
    }
    Ok((
        LossBreakdown::new(bce_value(&pairs), iou_value(&pairs)),
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one(m: Array2<f64>) -> MaskSet {
        MaskSet::soft(vec![1], vec![m])
    }

    #[test]
    fn bce_examples() {
        let gt = one(array![[1.0, 0.0], [0.0, 1.0]]);
        let perfect = one(array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(bce_loss(&perfect, &gt).unwrap() <= 1.2e-7);

        let half = one(Array2::from_elem((2, 2), 0.5));
        assert!((bce_loss(&half, &gt).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);

        let p = one(array![[0.9, 0.2]]);
        let g = one(array![[1.0, 0.0]]);
        let expected = (-(0.9f64).ln() - (0.8f64).ln()) / 2.0;
        assert!((bce_loss(&p, &g).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.164_252).abs() < 1e-6);
    }

    #[test]
    fn iou_examples() {
        let gt = one(array![[1.0, 1.0], [0.0, 0.0]]);
        assert!(iou_loss(&gt.clone(), &gt).unwrap() < 1e-5);
        let ones = one(Array2::ones((2, 2)));
        assert!((iou_loss(&ones, &gt).unwrap() - 0.5).abs() < 1e-5);
        let z = one(Array2::zeros((2, 2)));
        assert_eq!(iou_loss(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn total_is_exact_sum_and_matches_hand_value() {
        let gt = one(array![[1.0, 1.0], [0.0, 0.0]]);
        let half = one(Array2::from_elem((2, 2), 0.5));
        let l = total_loss(&half, &gt).unwrap();
        assert_eq!(l.total, l.bce + l.iou);
        assert!((l.bce - std::f64::consts::LN_2).abs() < 1e-6);
        let iou = 1.0 - (1.0 + IOU_EPS) / (3.0 + IOU_EPS);
        assert!((l.iou - iou).abs() < 1e-12);
        assert!((l.total - 1.359_814).abs() < 1e-6);

        let perfect = total_loss(&gt.clone(), &gt).unwrap();
        assert!(perfect.total <= 1e-5);
    }

    #[test]
    fn only_annotated_frames_contribute() {
        let gt = MaskSet::binary(vec![1], vec![array![[1.0, 0.0]]]);
        let good = MaskSet::soft(vec![1, 2], vec![array![[0.9, 0.1]], array![[0.0, 1.0]]]);
        let other = MaskSet::soft(vec![1, 2], vec![array![[0.9, 0.1]], array![[0.5, 0.5]]]);
        assert_eq!(
            total_loss(&good, &gt).unwrap(),
            total_loss(&other, &gt).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_and_empty_are_errors() {
        let gt = one(array![[1.0, 0.0]]);
        let p = one(array![[1.0], [0.0]]);
        assert!(bce_loss(&p, &gt).is_err());
        assert!(iou_loss(&p, &gt).is_err());
        let empty = MaskSet::binary(vec![], vec![]);
        assert!(bce_loss(&p, &empty).is_err());
    }

    #[test]
    fn monotone_along_grid_scan() {
        // Moving a pixel toward its label never increases the total (1×2 mask, gt = [1, 0]).
        let g = array![[1.0, 0.0]];
        let steps: Vec<f64> = (1..=49).map(|k| k as f64 / 50.0).collect();
        for &other in &steps {
            let mut prev = f64::INFINITY;
            for &p0 in &steps {
                let p = array![[p0, other]];
                let (l, _) = total_loss_with_grad(&[&p], &[&g]).unwrap();
                assert!(l.total <= prev + 1e-12, "p0={p0} other={other}");
                prev = l.total;
            }
        }
    }
}
