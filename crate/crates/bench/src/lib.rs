//! Shared fixtures for the benchmarks.

use std::path::Path;

use av2t_core::avsbench_io::{make_synthetic, SynthConfig};
use av2t_core::{Result, Split, Subset, VideoClip};
use ndarray::{Array1, Array2};

/// Deterministic pseudo-random bilevel mask.
pub fn checker_mask(side: usize, seed: u64) -> Array2<bool> {
    Array2::from_shape_fn((side, side), |(y, x)| {
        let h = (y as u64 * 31 + x as u64 * 17 + seed).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h >> 63 == 1
    })
}

pub fn ramp(n: usize, offset: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| ((i as f64 + offset) * 0.37).sin())
}

/// One synthetic MS3 clip written under `dir` and read back.
pub fn synthetic_clip(dir: &Path, frames: usize, side: usize) -> Result<VideoClip> {
    let cfg = SynthConfig {
        subset: Subset::MS3,
        split: Split::Test,
        clips: 1,
        frames,
        height: side,
        width: side,
        sample_rate: 800,
        seed: 1,
    };
    let mut clips = make_synthetic(&cfg, dir)?.load_all()?;
    Ok(clips.remove(0))
}
