//! PNG decoding to linear reals in [0, 1] and 16-bit encoding back.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Decodes an 8- or 16-bit PNG into a 1×C×H×W tensor (C = 1 for gray,
/// 3 for color; alpha is dropped) by dividing by the bit-depth maximum.
pub fn read_png(path: &Path) -> Result<Tensor<f64>> {
    let img = image::open(path).map_err(|e| Error::file(path, format!("cannot decode: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            (1, img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            (3, img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            (1, img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            (3, img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        other => {
            return Err(Error::file(path, format!("unsupported pixel format {:?}", other.color())));
        }
    };
    let shape = Shape::new(1, c, h, w).map_err(|e| Error::file(path, e.to_string()))?;
    // interleaved HWC -> planar CHW
    Ok(Tensor::from_fn(shape, |_, ch, y, x| data[(y * w + x) * c + ch]))
}

/// Reads a PNG and replicates a gray image to three channels.
pub fn read_rgb(path: &Path) -> Result<Tensor<f64>> {
    let t = read_png(path)?;
    Ok(to_rgb(&t))
}

pub fn to_rgb(t: &Tensor<f64>) -> Tensor<f64> {
    let s = t.shape();
    if s.c == 3 {
        return t.clone();
    }
    Tensor::from_fn(s.with_c(3), |n, _, y, x| t.at(n, 0, y, x))
}

/// Reads a validity mask: a pixel is valid when any channel is nonzero.
pub fn read_mask(path: &Path) -> Result<Tensor<f64>> {
    let t = read_png(path)?;
    let s = t.shape();
    Ok(Tensor::from_fn(s.with_c(1), |_, _, y, x| {
        let any = (0..s.c).any(|c| t.at(0, c, y, x) > 0.0);
        if any {
            1.0
        } else {
            0.0
        }
    }))
}

/// Quantizes `v ∈ [0, 1]` to 16 bits (values are clipped first).
pub fn quantize16(v: f64) -> u16 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 65535.0).round() as u16
}

/// Writes a 1×1×H×W or 1×3×H×W tensor as a 16-bit PNG.
pub fn write_png16(path: &Path, t: &Tensor<f64>) -> Result<()> {
    let s = t.shape();
    if s.n != 1 || !(s.c == 1 || s.c == 3) {
        return Err(Error::shape("write_png16", format!("cannot encode {s} as an image")));
    }
    let (w, h) = (s.w as u32, s.h as u32);
    let mut raw = Vec::with_capacity(s.len());
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..s.c {
                raw.push(quantize16(t.at(0, c, y, x)));
            }
        }
    }
    let res = if s.c == 3 {
        ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw)
            .expect("buffer length")
            .save_with_format(path, image::ImageFormat::Png)
    } else {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
            .expect("buffer length")
            .save_with_format(path, image::ImageFormat::Png)
    };
    res.map_err(|e| Error::file(path, format!("cannot write PNG: {e}")))
}
