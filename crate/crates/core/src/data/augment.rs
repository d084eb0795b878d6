//! Geometric augmentation applied identically to image, albedo, shading
//! and mask: zoom, then rotation about the center, then a random crop,
//! then an optional horizontal mirror.

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub crop_h: usize,
    pub crop_w: usize,
    pub mirror_prob: f64,
    pub rotate_range_deg: (f64, f64),
    pub zoom_range: (f64, f64),
    /// Enables rotation and zoom; crop and mirror always run.
    pub enable_rotate_zoom: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_h: 416,
            crop_w: 416,
            mirror_prob: 0.5,
            rotate_range_deg: (-15.0, 15.0),
            zoom_range: (0.8, 1.2),
            enable_rotate_zoom: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_h == 0 || self.crop_w == 0 {
            return Err(Error::invalid("crop extents must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mirror_prob) {
            return Err(Error::invalid(format!("mirror_prob {} outside [0, 1]", self.mirror_prob)));
        }
        let (r0, r1) = self.rotate_range_deg;
        let (z0, z1) = self.zoom_range;
        if r0 > r1 || z0 > z1 {
            return Err(Error::invalid("augmentation ranges must be ordered (lo <= hi)"));
        }
        if !(z0 > 0.0) {
            return Err(Error::invalid("zoom factors must be > 0"));
        }
        Ok(())
    }
}

/// One draw of the augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub zoom: f64,
    pub angle_deg: f64,
    pub offset_y: usize,
    pub offset_x: usize,
    pub mirror: bool,
}

/// Source extents after zooming by `zoom`.
fn zoomed(h: usize, w: usize, zoom: f64) -> (usize, usize) {
    (
        ((h as f64 * zoom).round() as usize).max(1),
        ((w as f64 * zoom).round() as usize).max(1),
    )
}

pub fn draw_transform(h: usize, w: usize, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Transform> {
    cfg.validate()?;
    let (zoom, angle_deg) = if cfg.enable_rotate_zoom {
        let z = rng.uniform_in(cfg.zoom_range.0, cfg.zoom_range.1);
        let a = rng.uniform_in(cfg.rotate_range_deg.0, cfg.rotate_range_deg.1);
        (z, a)
    } else {
        (1.0, 0.0)
    };
    let (zh, zw) = zoomed(h, w, zoom);
    if zh < cfg.crop_h || zw < cfg.crop_w {
        return Err(Error::invalid(format!(
            "cannot crop {}x{} from {h}x{w} image zoomed to {zh}x{zw}",
            cfg.crop_h, cfg.crop_w
        )));
    }
    let offset_y = rng.below((zh - cfg.crop_h + 1) as u64) as usize;
    let offset_x = rng.below((zw - cfg.crop_w + 1) as u64) as usize;
    let mirror = rng.bernoulli(cfg.mirror_prob);
    Ok(Transform {
        zoom,
        angle_deg,
        offset_y,
        offset_x,
        mirror,
    })
}

/// Draws a transform and applies it to every component of `sample`.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Sample> {
    let s = sample.image.shape();
    let t = draw_transform(s.h, s.w, cfg, rng).map_err(|e| Error::invalid(format!("sample {}: {e}", sample.id)))?;
    apply_transform(sample, &t, cfg.crop_h, cfg.crop_w)
}

pub fn apply_transform(sample: &Sample, t: &Transform, crop_h: usize, crop_w: usize) -> Result<Sample> {
    let s = sample.image.shape();
    let (zh, zw) = zoomed(s.h, s.w, t.zoom);
    let (sy, sx) = (s.h as f64 / zh as f64, s.w as f64 / zw as f64);
    let (cy, cx) = ((zh as f64 - 1.0) / 2.0, (zw as f64 - 1.0) / 2.0);
    let (sin, cos) = (-t.angle_deg.to_radians()).sin_cos();

    // source coordinate of every output pixel
    let mut coords = Vec::with_capacity(crop_h * crop_w);
    for v in 0..crop_h {
        for u in 0..crop_w {
            let u = if t.mirror { crop_w - 1 - u } else { u };
            let (x, y) = ((t.offset_x + u) as f64, (t.offset_y + v) as f64);
            let (dx, dy) = (x - cx, y - cy);
            let (xr, yr) = if t.angle_deg == 0.0 {
                (x, y)
            } else {
                (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
            };
            coords.push(((yr + 0.5) * sy - 0.5, (xr + 0.5) * sx - 0.5));
        }
    }

    let out_shape = Shape::new(1, s.c, crop_h, crop_w)?;
    let warp = |src: &Tensor<f64>| {
        let c = src.shape().c;
        Tensor::from_fn(out_shape.with_c(c), |_, ch, v, u| {
            let (y, x) = coords[v * crop_w + u];
            bilinear(src, ch, y, x)
        })
    };
    let inside = |y: f64, x: f64| y >= -0.5 && x >= -0.5 && y <= s.h as f64 - 0.5 && x <= s.w as f64 - 0.5;
    let mask = Tensor::from_fn(out_shape.with_c(1), |_, _, v, u| {
        let (y, x) = coords[v * crop_w + u];
        if !inside(y, x) {
            return 0.0;
        }
        let ny = (y.round().max(0.0) as usize).min(s.h - 1);
        let nx = (x.round().max(0.0) as usize).min(s.w - 1);
        sample.mask.at(0, 0, ny, nx)
    });
    Ok(Sample {
        id: sample.id.clone(),
        scene: sample.scene.clone(),
        image: warp(&sample.image),
        albedo: warp(&sample.albedo),
        shading: warp(&sample.shading),
        mask,
    })
}

/// Edge-clamped bilinear sample of channel `c` at fractional `(y, x)`.
fn bilinear(t: &Tensor<f64>, c: usize, y: f64, x: f64) -> f64 {
    let s = t.shape();
    let y = y.clamp(0.0, (s.h - 1) as f64);
    let x = x.clamp(0.0, (s.w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(s.h - 1), (x0 + 1).min(s.w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = t.at(0, c, y0, x0) + fx * (t.at(0, c, y0, x1) - t.at(0, c, y0, x0));
    let bot = t.at(0, c, y1, x0) + fx * (t.at(0, c, y1, x1) - t.at(0, c, y1, x0));
    top + fy * (bot - top)
}
