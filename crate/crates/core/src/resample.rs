//! Resampling helpers shared by the encoders, the decoder head and the loaders.
//!
//! Bilinear weights use the half-pixel (`align_corners = false`) convention.

use ndarray::{Array2, Array3};

/// 1-D bilinear taps: for every destination index, two `(source index, weight)` pairs.
pub fn bilinear_taps(src: usize, dst: usize) -> Vec<[(usize, f64); 2]> {
    assert!(src > 0 && dst > 0, "bilinear_taps needs non-empty axes");
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            let w_hi = pos - lo as f64;
            [(lo, 1.0 - w_hi), (hi, w_hi)]
        })
        .collect()
}

pub fn resize_bilinear_2d(src: &Array2<f64>, height: usize, width: usize) -> Array2<f64> {
    let (sh, sw) = src.dim();
    if (sh, sw) == (height, width) {
        return src.clone();
    }
    let ty = bilinear_taps(sh, height);
    let tx = bilinear_taps(sw, width);
    Array2::from_shape_fn((height, width), |(y, x)| {
        let mut acc = 0.0;
        for &(yy, wy) in &ty[y] {
            for &(xx, wx) in &tx[x] {
                acc += wy * wx * src[[yy, xx]];
            }
        }
        acc
    })
}

/// Channel-first bilinear resize of a `(C, H, W)` tensor.
pub fn resize_bilinear_chw(src: &Array3<f64>, height: usize, width: usize) -> Array3<f64> {
    let (c, sh, sw) = src.dim();
    if (sh, sw) == (height, width) {
        return src.clone();
    }
    let ty = bilinear_taps(sh, height);
    let tx = bilinear_taps(sw, width);
    Array3::from_shape_fn((c, height, width), |(ch, y, x)| {
        let mut acc = 0.0;
        for &(yy, wy) in &ty[y] {
            for &(xx, wx) in &tx[x] {
                acc += wy * wx * src[[ch, yy, xx]];
            }
        }
        acc
    })
}

pub fn resize_nearest_2d(src: &Array2<f64>, height: usize, width: usize) -> Array2<f64> {
    let (sh, sw) = src.dim();
    if (sh, sw) == (height, width) {
        return src.clone();
    }
    Array2::from_shape_fn((height, width), |(y, x)| {
        let yy = ((y as f64 + 0.5) * sh as f64 / height as f64) as usize;
        let xx = ((x as f64 + 0.5) * sw as f64 / width as f64) as usize;
        src[[yy.min(sh - 1), xx.min(sw - 1)]]
    })
}

/// Box-average a `(C, H, W)` tensor onto a `side × side` grid.
///
/// Every source pixel lands in exactly one bin, so a change to any single
/// pixel changes exactly one output cell. Bins with no source pixel
/// (upsampling) copy the nearest source pixel.
pub fn area_pool_chw(src: &Array3<f64>, side: usize) -> Array3<f64> {
    let (c, h, w) = src.dim();
    let mut sum = Array3::<f64>::zeros((c, side, side));
    let mut count = Array2::<f64>::zeros((side, side));
    for y in 0..h {
        let by = y * side / h;
        for x in 0..w {
            let bx = x * side / w;
            count[[by, bx]] += 1.0;
            for ch in 0..c {
                sum[[ch, by, bx]] += src[[ch, y, x]];
            }
        }
    }
    for by in 0..side {
        for bx in 0..side {
            let n = count[[by, bx]];
            for ch in 0..c {
                if n > 0.0 {
                    sum[[ch, by, bx]] /= n;
                } else {
                    let y = ((by as f64 + 0.5) * h as f64 / side as f64) as usize;
                    let x = ((bx as f64 + 0.5) * w as f64 / side as f64) as usize;
                    sum[[ch, by, bx]] = src[[ch, y.min(h - 1), x.min(w - 1)]];
                }
            }
        }
    }
    sum
}

/// Linear-interpolation resampling of a waveform to exactly `target_len` samples.
///
/// Output sample `k` reads the source at time `k / target_len` of the span,
/// i.e. source position `k * src_len / target_len`.
pub fn resample_linear(samples: &[f64], target_len: usize) -> Vec<f64> {
    let n = samples.len();
    if n == target_len {
        return samples.to_vec();
    }
    if n == 0 {
        return vec![0.0; target_len];
    }
    (0..target_len)
        .map(|k| {
            let pos = k as f64 * n as f64 / target_len as f64;
            let lo = (pos.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            samples[lo] * (1.0 - frac) + samples[hi] * frac
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_sum_to_one() {
        for (s, d) in [(4, 16), (16, 4), (3, 7), (1, 5), (5, 5)] {
            for taps in bilinear_taps(s, d) {
                let total: f64 = taps.iter().map(|t| t.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_resize_is_exact() {
        let a = Array2::from_shape_fn((3, 4), |(y, x)| (y * 4 + x) as f64);
        assert_eq!(resize_bilinear_2d(&a, 3, 4), a);
        assert_eq!(resize_nearest_2d(&a, 3, 4), a);
    }

    #[test]
    fn nearest_upsample_tiles_blocks() {
        let a = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = resize_nearest_2d(&a, 4, 4);
        assert_eq!(b[[0, 0]], 1.0);
        assert_eq!(b[[1, 1]], 1.0);
        assert_eq!(b[[0, 3]], 0.0);
        assert_eq!(b[[3, 3]], 1.0);
    }

    #[test]
    fn area_pool_single_pixel_sensitivity() {
        let a = Array3::<f64>::zeros((3, 10, 10));
        let mut b = a.clone();
        b[[1, 7, 3]] = 0.5;
        let pa = area_pool_chw(&a, 4);
        let pb = area_pool_chw(&b, 4);
        let changed = pa.iter().zip(pb.iter()).filter(|(x, y)| x != y).count();
        assert_eq!(changed, 1);
    }

    #[test]
    fn resample_halves_length() {
        let src: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let out = resample_linear(&src, 4);
        assert_eq!(out, vec![0.0, 2.0, 4.0, 6.0]);
    }
}
