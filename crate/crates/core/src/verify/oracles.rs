//! Straightforward reference implementations the optimized code is
//! compared against. None of them shares code with the paths they check.

use crate::layers::ConvSpec;
use crate::metrics::{SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
use crate::tensor::{Shape, Tensor};

/// Cross-correlation by direct summation.
pub fn conv_nested(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: &ConvSpec) -> Tensor<f64> {
    let xs = x.shape();
    let oh = (xs.h + 2 * s.pad_h - s.kernel_h) / s.stride_h + 1;
    let ow = (xs.w + 2 * s.pad_w - s.kernel_w) / s.stride_w + 1;
    Tensor::from_fn(Shape::of(xs.n, s.out_channels, oh, ow), |n, o, y, xx| {
        let mut acc = b.data()[o];
        for i in 0..s.in_channels {
            for ky in 0..s.kernel_h {
                for kx in 0..s.kernel_w {
                    let iy = (y * s.stride_h + ky) as isize - s.pad_h as isize;
                    let ix = (xx * s.stride_w + kx) as isize - s.pad_w as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += w.at(o, i, ky, kx) * x.at(n, i, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

/// Brute-force minimizer of `Σ(t − a·p)²` over `a ∈ [0, 10]` at step
/// 1e-4. Returns `(a, loss)`; the loss is evaluated from the three
/// moment sums, which is exact algebra rather than the closed form.
pub fn grid_alpha(t: &[f64], p: &[f64]) -> (f64, f64) {
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let tp: f64 = t.iter().zip(p).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=100_000 {
        let a = i as f64 * 1e-4;
        let loss = tt - 2.0 * a * tp + a * a * pp;
        if loss < best.1 {
            best = (a, loss);
        }
    }
    best
}

/// Squared error of `t − a·p` summed directly.
pub fn sse_at(t: &[f64], p: &[f64], a: f64) -> f64 {
    t.iter().zip(p).map(|(x, y)| (x - a * y).powi(2)).sum()
}

/// LMSE by enumerating every window explicitly: origins at multiples of
/// the stride plus a flush last origin, per-window least-squares scale.
pub fn lmse_enumerate(target: &Tensor<f64>, pred: &Tensor<f64>, mask: Option<&Tensor<f64>>, fraction: f64) -> Option<f64> {
    let s = target.shape();
    let k = ((fraction * s.h.max(s.w) as f64).round() as usize).max(1);
    let stride = (k / 2).max(1);
    let origins = |extent: usize| {
        let mut v = Vec::new();
        let mut o = 0;
        while o + k <= extent {
            v.push(o);
            o += stride;
        }
        if v.last() != Some(&(extent - k)) {
            v.push(extent - k);
        }
        v
    };
    let mut scores = Vec::new();
    for y0 in origins(s.h) {
        for x0 in origins(s.w) {
            let (mut t, mut p) = (Vec::new(), Vec::new());
            for y in y0..y0 + k {
                for x in x0..x0 + k {
                    if mask.is_none_or(|m| m.at(0, 0, y, x) != 0.0) {
                        for c in 0..s.c {
                            t.push(target.at(0, c, y, x));
                            p.push(pred.at(0, c, y, x));
                        }
                    }
                }
            }
            if t.is_empty() {
                continue;
            }
            let pp: f64 = p.iter().map(|v| v * v).sum();
            let a = if pp > 0.0 {
                t.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() / pp
            } else {
                0.0
            };
            scores.push(sse_at(&t, &p, a) / t.len() as f64);
        }
    }
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean SSIM from direct 2-D Gaussian-weighted sums at every position
/// where the window fits.
pub fn ssim_direct(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let s = a.shape();
    let r = SSIM_WINDOW / 2;
    let mut weights = vec![vec![0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - r as f64, j as f64 - r as f64);
            *w = (-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += *w;
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for c in 0..s.c {
        for y0 in 0..=s.h - SSIM_WINDOW {
            for x0 in 0..=s.w - SSIM_WINDOW {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let w = weights[i][j] / total;
                        let (u, v) = (a.at(0, c, y0 + i, x0 + j), b.at(0, c, y0 + i, x0 + j));
                        mx += w * u;
                        my += w * v;
                        xx += w * u * u;
                        yy += w * v * v;
                        xy += w * u * v;
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
    }
    sum / count as f64
}
