//! Reference implementations for the acceptance checks. Written from the
//! formulas directly; nothing here calls the code it is used to check.

#![allow(dead_code)]

use dint_core::{Rng, Shape, Tensor};

pub fn normal(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| rng.normal())
}

pub fn uniform(s: Shape, lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| rng.uniform_in(lo, hi))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs()).max(1e-8)
    }
}

/// Central differences of `f` at every coordinate of `x`, compared with
/// `analytic`; returns the largest relative error.
pub fn fd_max_rel(mut f: impl FnMut(&Tensor<f64>) -> f64, x: &Tensor<f64>, analytic: &Tensor<f64>, h: f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for k in 0..x.len() {
        let v = x.data()[k];
        probe.data_mut()[k] = v + h;
        let up = f(&probe);
        probe.data_mut()[k] = v - h;
        let down = f(&probe);
        probe.data_mut()[k] = v;
        worst = worst.max(rel_err(analytic.data()[k], (up - down) / (2.0 * h)));
    }
    worst
}

pub fn weighted_sum(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    assert_eq!(r.shape(), y.shape());
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Zero-padded strided cross-correlation by nested loops. `w` is
/// out×in×k×k.
pub fn conv_ref(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let k = ws.h;
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    let mut y = Tensor::zeros(Shape::of(xs.n, ws.n, oh, ow));
    for n in 0..xs.n {
        for o in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for i in 0..ws.c {
                        for ky in 0..k {
                            for kx in 0..ws.w {
                                let iy = (oy * stride + ky) as i64 - pad as i64;
                                let ix = (ox * stride + kx) as i64 - pad as i64;
                                if iy < 0 || ix < 0 || iy >= xs.h as i64 || ix >= xs.w as i64 {
                                    continue;
                                }
                                acc += w.at(o, i, ky, kx) * x.at(n, i, iy as usize, ix as usize);
                            }
                        }
                    }
                    *y.at_mut(n, o, oy, ox) = acc;
                }
            }
        }
    }
    y
}

/// Transposed convolution by scattering every input pixel through the
/// kernel. `w` is out×in×k×k.
pub fn deconv_ref(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let k = ws.h;
    let full_h = (xs.h - 1) * stride + k;
    let full_w = (xs.w - 1) * stride + ws.w;
    let (oh, ow) = (full_h - 2 * pad, full_w - 2 * pad);
    let mut y = Tensor::from_fn(Shape::of(xs.n, ws.n, oh, ow), |_, o, _, _| b[o]);
    for n in 0..xs.n {
        for i in 0..xs.c {
            for iy in 0..xs.h {
                for ix in 0..xs.w {
                    let v = x.at(n, i, iy, ix);
                    for o in 0..ws.n {
                        for ky in 0..k {
                            for kx in 0..ws.w {
                                let ty = (iy * stride + ky) as i64 - pad as i64;
                                let tx = (ix * stride + kx) as i64 - pad as i64;
                                if ty >= 0 && tx >= 0 && (ty as usize) < oh && (tx as usize) < ow {
                                    *y.at_mut(n, o, ty as usize, tx as usize) += w.at(o, i, ky, kx) * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Scale-invariant L2 evaluated term by term: per item, `n` counts valid channel
/// entries; the batch value is the mean over items.
pub fn sil2_ref(t: &Tensor<f64>, p: &Tensor<f64>, m: &Tensor<f64>, lambda: f64) -> f64 {
    let s = t.shape();
    let mut total = 0.0;
    for n in 0..s.n {
        let (mut sum, mut sq, mut count) = (0.0, 0.0, 0.0);
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    if m.at(n, 0, y, x) > 0.5 {
                        let d = t.at(n, c, y, x) - p.at(n, c, y, x);
                        sum += d;
                        sq += d * d;
                        count += 1.0;
                    }
                }
            }
        }
        total += sq / count - lambda * sum * sum / (count * count);
    }
    total / s.n as f64
}

/// Gradient loss with forward differences; a difference needs both endpoints valid.
pub fn gradient_loss_ref(t: &Tensor<f64>, p: &Tensor<f64>, m: &Tensor<f64>) -> f64 {
    let s = t.shape();
    let mut total = 0.0;
    for n in 0..s.n {
        let valid = |y: usize, x: usize| m.at(n, 0, y, x) > 0.5;
        let count = (0..s.h).flat_map(|y| (0..s.w).map(move |x| (y, x))).filter(|&(y, x)| valid(y, x)).count() * s.c;
        let mut acc = 0.0;
        for c in 0..s.c {
            let r = |y: usize, x: usize| t.at(n, c, y, x) - p.at(n, c, y, x);
            for y in 0..s.h {
                for x in 0..s.w {
                    if x + 1 < s.w && valid(y, x) && valid(y, x + 1) {
                        acc += (r(y, x + 1) - r(y, x)).powi(2);
                    }
                    if y + 1 < s.h && valid(y, x) && valid(y + 1, x) {
                        acc += (r(y + 1, x) - r(y, x)).powi(2);
                    }
                }
            }
        }
        total += acc / count as f64;
    }
    total / s.n as f64
}

/// Best `a ∈ {0, 1e-4, …, 10}` for `Σ(t − a·p)²`, each candidate summed
/// directly. Returns `(a, loss)`.
pub fn alpha_grid(t: &[f64], p: &[f64]) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=100_000u32 {
        let a = f64::from(i) * 1e-4;
        let loss: f64 = t.iter().zip(p).map(|(x, y)| (x - a * y).powi(2)).sum();
        if loss < best.1 {
            best = (a, loss);
        }
    }
    best
}

fn least_squares_mse(t: &[f64], p: &[f64]) -> f64 {
    let num: f64 = t.iter().zip(p).map(|(a, b)| a * b).sum();
    let den: f64 = p.iter().map(|v| v * v).sum();
    let a = if den > 0.0 { num / den } else { 0.0 };
    t.iter().zip(p).map(|(x, y)| (x - a * y).powi(2)).sum::<f64>() / t.len() as f64
}

/// Every k×k window at stride ⌊k/2⌋ with a flush last window per axis;
/// mean of per-window scale-fitted MSE over windows with a valid pixel.
pub fn lmse_ref(t: &Tensor<f64>, p: &Tensor<f64>, m: Option<&Tensor<f64>>, fraction: f64) -> f64 {
    let s = t.shape();
    let k = (fraction * s.h.max(s.w) as f64).round() as usize;
    let stride = (k / 2).max(1);
    let starts = |len: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o + k <= len).collect();
        if *v.last().unwrap() + k < len {
            v.push(len - k);
        }
        v
    };
    let (mut sum, mut windows) = (0.0, 0usize);
    for &y0 in &starts(s.h) {
        for &x0 in &starts(s.w) {
            let mut tv = Vec::new();
            let mut pv = Vec::new();
            for c in 0..s.c {
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        if m.is_none_or(|m| m.at(0, 0, y, x) > 0.5) {
                            tv.push(t.at(0, c, y, x));
                            pv.push(p.at(0, c, y, x));
                        }
                    }
                }
            }
            if !tv.is_empty() {
                sum += least_squares_mse(&tv, &pv);
                windows += 1;
            }
        }
    }
    sum / windows as f64
}

/// Mean SSIM from a full 11×11 Gaussian window (σ = 1.5) summed directly
/// at every fully inside position, per channel.
pub fn ssim_ref(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    const K: usize = 11;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut g = [[0.0; K]; K];
    let mut z = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dy * dy + dx * dx) / 4.5).exp();
            z += *v;
        }
    }
    let s = a.shape();
    let mut total = 0.0;
    let mut count = 0.0;
    for c in 0..s.c {
        for y in 0..=s.h - K {
            for x in 0..=s.w - K {
                let mut mom = [0.0; 5];
                for i in 0..K {
                    for j in 0..K {
                        let w = g[i][j] / z;
                        let (u, v) = (a.at(0, c, y + i, x + j), b.at(0, c, y + i, x + j));
                        mom[0] += w * u;
                        mom[1] += w * v;
                        mom[2] += w * u * u;
                        mom[3] += w * v * v;
                        mom[4] += w * u * v;
                    }
                }
                let [mu_a, mu_b, aa, bb, ab] = mom;
                let va = aa - mu_a * mu_a;
                let vb = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
    }
    total / count
}

/// Scale-fitted MSE over all entries, for checking trained predictions.
pub fn si_mse_ref(t: &Tensor<f64>, p: &Tensor<f64>) -> f64 {
    least_squares_mse(t.data(), p.data())
}
