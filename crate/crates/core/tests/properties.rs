use av2t_core::avsbench_io::{load_clip, scan, write_clip, Layout};
use av2t_core::datamodel::validate_clip;
use av2t_core::fusion::fuse;
use av2t_core::metrics::{binarize, evaluate, frame_fscore, frame_iou};
use av2t_core::*;
use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;

/// Pixel-count oracle written as plain nested loops.
fn oracle(pred: &Array2<bool>, gt: &Array2<bool>, beta2: f64) -> (f64, f64) {
    let (h, w) = gt.dim();
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if pred[[y, x]] && gt[[y, x]] {
                tp += 1;
            }
            if pred[[y, x]] {
                np += 1;
            }
            if gt[[y, x]] {
                ng += 1;
            }
        }
    }
    let union = np + ng - tp;
    let iou = if union == 0 {
        1.0
    } else {
        tp as f64 / union as f64
    };
    let p = if np == 0 { 1.0 } else { tp as f64 / np as f64 };
    let r = if ng == 0 { 1.0 } else { tp as f64 / ng as f64 };
    let den = beta2 * p + r;
    let f = if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * p * r / den
    };
    (iou, f)
}

fn mask_from_bits(bits: u32, h: usize, w: usize) -> Array2<bool> {
    Array2::from_shape_fn((h, w), |(y, x)| bits >> (y * w + x) & 1 == 1)
}

#[test]
fn metrics_match_oracle_on_every_2x2_pair() {
    for a in 0..16u32 {
        for b in 0..16u32 {
            let (p, g) = (mask_from_bits(a, 2, 2), mask_from_bits(b, 2, 2));
            for beta2 in [1.0, 0.3] {
                let (iou, f) = oracle(&p, &g, beta2);
                assert_eq!(frame_iou(p.view(), g.view()).unwrap(), iou);
                assert_eq!(frame_fscore(p.view(), g.view(), beta2).unwrap(), f);
            }
        }
    }
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metrics_match_oracle_on_random_4x4(a in 0u32..65536, b in 0u32..65536) {
        let (p, g) = (mask_from_bits(a, 4, 4), mask_from_bits(b, 4, 4));
        let (iou, f) = oracle(&p, &g, 1.0);
        prop_assert_eq!(frame_iou(p.view(), g.view()).unwrap(), iou);
        prop_assert_eq!(frame_fscore(p.view(), g.view(), 1.0).unwrap(), f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn fusion_algebra(a in vec3(), b in vec3(), c in vec3(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, zero_at in 0usize..6) {
        let (a, b, c) = (Array1::from(a), Array1::from(b), Array1::from(c));
        // Commutativity, bit for bit.
        let ab = fuse(a.view(), b.view()).unwrap();
        let ba = fuse(b.view(), a.view()).unwrap();
        prop_assert_eq!(
            ab.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ba.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        // Bilinearity in the first argument.
        let lhs = fuse((&a * alpha + &c * beta).view(), b.view()).unwrap();
        let rhs = &ab * alpha + fuse(c.view(), b.view()).unwrap() * beta;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            let scale = l.abs().max(r.abs()).max(1e-12);
            prop_assert!((l - r).abs() / scale <= 1e-6 || (l - r).abs() <= 1e-12, "{} vs {}", l, r);
        }
        // Zero propagation.
        let mut z = a.clone();
        z[zero_at] = 0.0;
        prop_assert_eq!(fuse(z.view(), b.view()).unwrap()[zero_at], 0.0);
        prop_assert_eq!(fuse(Array1::zeros(6).view(), b.view()).unwrap(), Array1::<f64>::zeros(6));
    }

    #[test]
    fn raising_the_threshold_never_grows_the_mask(vals in prop::collection::vec(0.0f64..=1.0, 16), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let soft = Array2::from_shape_vec((4, 4), vals).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = binarize(&soft, lo);
        let b = binarize(&soft, hi);
        prop_assert!(b.iter().zip(a.iter()).all(|(&hb, &lb)| !hb || lb));
    }
}

fn tiny_clip(id: &str, seed: u64, frames: usize) -> (VideoClip, MaskSet) {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as u32
    };
    let fr: Vec<Frame> = (1..=frames)
        .map(|i| {
            Frame::new(
                i,
                Array3::from_shape_fn((3, 4, 4), |_| (next() % 256) as f64 / 255.0),
            )
        })
        .collect();
    let audio = (1..=frames)
        .map(|i| AudioSegment {
            samples: (0..50)
                .map(|_| (next() % 65536) as f64 / 32768.0 - 1.0)
                .collect(),
            sample_rate: 50,
            index: i,
        })
        .collect();
    let idx: Vec<usize> = (1..=frames).collect();
    let gt = idx
        .iter()
        .map(|_| Array2::from_shape_fn((4, 4), |_| (next() % 2) as f64))
        .collect();
    let pred = idx
        .iter()
        .map(|_| Array2::from_shape_fn((4, 4), |_| (next() % 1000) as f64 / 999.0))
        .collect();
    (
        VideoClip {
            clip_id: id.to_string(),
            frames: fr,
            audio,
            ground_truth: Some(MaskSet::binary(idx.clone(), gt)),
            subset: Subset::MS3,
            split: Split::Test,
        },
        MaskSet::soft(idx, pred),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_ignores_clip_order(seed in any::<u64>(), n in 1usize..6, rot in 0usize..6) {
        let pairs: Vec<_> = (0..n).map(|k| tiny_clip(&format!("c{k}"), seed ^ k as u64, 2)).collect();
        let (clips, preds): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let base = evaluate(&preds, &clips, 0.5, 1.0).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        let (c2, p2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let other = evaluate(&p2, &c2, 0.5, 1.0).unwrap();
        prop_assert_eq!(base.m_j.to_bits(), other.m_j.to_bits());
        prop_assert_eq!(base.m_f.to_bits(), other.m_f.to_bits());
        prop_assert_eq!(base.per_video, other.per_video);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn written_clips_read_back_bit_identical(seed in any::<u64>(), frames in 1usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let (clip, _) = tiny_clip("roundtrip", seed, frames);
        prop_assert!(validate_clip(&clip).is_valid());
        let layout = Layout::default();
        write_clip(&clip, dir.path(), "cat", &layout).unwrap();
        let manifest = scan(dir.path(), Subset::MS3, Split::Test, &layout, 50).unwrap();
        let back = load_clip(&manifest, "roundtrip").unwrap();
        prop_assert!(validate_clip(&back).is_valid());
        prop_assert_eq!(back, clip);
    }
}
