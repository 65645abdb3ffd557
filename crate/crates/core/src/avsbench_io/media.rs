//! PNG frames and masks, linear-PCM wave audio.

use std::path::Path;

use image::{GrayImage, ImageReader, RgbImage};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

fn decode_err(path: &Path, e: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Reads an image as `(3, H, W)` intensities in `[0, 1]`.
pub fn read_frame(path: &Path) -> Result<Array3<f64>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn(
        (3, h as usize, w as usize),
        |(c, y, x)| img.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0,
    ))
}

pub fn write_frame(path: &Path, pixels: &Array3<f64>) -> Result<()> {
    ensure_parent(path)?;
    let (_, h, w) = pixels.dim();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px =
            |c: usize| (pixels[[c, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    img.save(path).map_err(|e| decode_err(path, e))
}

/// Reads a bilevel mask (0 → background, 255 → foreground). Any other gray
/// level is an error.
pub fn read_mask(path: &Path) -> Result<Array2<f64>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(path, e))?
        .to_luma8();
    if let Some(bad) = img.pixels().map(|p| p.0[0]).find(|&v| v != 0 && v != 255) {
        return Err(Error::MaskNotBilevel {
            path: path.to_path_buf(),
            value: bad,
        });
    }
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        (img.get_pixel(x as u32, y as u32).0[0] == 255) as u8 as f64
    }))
}

/// Writes a mask as 0/255; values at or above 0.5 are foreground.
pub fn write_mask(path: &Path, mask: &Array2<f64>) -> Result<()> {
    ensure_parent(path)?;
    let (h, w) = mask.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([if mask[[y as usize, x as usize]] >= 0.5 {
            255
        } else {
            0
        }])
    });
    img.save(path).map_err(|e| decode_err(path, e))
}

/// Confirms a file decodes as an image without reading all pixels.
pub fn probe_image(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| decode_err(path, e))
}

/// Mono samples in `[-1, 1]` and the file's sample rate. Multi-channel files
/// are averaged.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path).map_err(|e| decode_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| decode_err(path, e))?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| decode_err(path, e))?,
    };
    let mono = interleaved
        .chunks(channels)
        .map(|c| (c.iter().sum::<f64>() / c.len() as f64).clamp(-1.0, 1.0))
        .collect();
    Ok((mono, spec.sample_rate))
}

/// 16-bit PCM mono.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    ensure_parent(path)?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| decode_err(path, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0)
            .round()
            .clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| decode_err(path, e))?;
    }
    writer.finalize().map_err(|e| decode_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_frame_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let px = Array3::from_shape_fn((3, 5, 7), |(c, y, x)| {
            ((c * 31 + y * 7 + x * 13) % 256) as f64 / 255.0
        });
        let path = dir.path().join("f.png");
        write_frame(&path, &px).unwrap();
        assert_eq!(read_frame(&path).unwrap(), px);
    }

    #[test]
    fn gray_mask_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut img = GrayImage::new(4, 4);
        img.put_pixel(1, 2, image::Luma([128]));
        img.save(&path).unwrap();
        match read_mask(&path).unwrap_err() {
            Error::MaskNotBilevel { path: p, value } => {
                assert_eq!(p, path);
                assert_eq!(value, 128);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn pcm16_round_trip_on_grid_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..100)
            .map(|i| ((i * 977) % 65536) as f64 / 32768.0 - 1.0)
            .collect();
        write_wav(&path, &samples, 100).unwrap();
        let (back, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 100);
        assert_eq!(back, samples);
    }
}
