//! Fixed bilinear upsampling by an integer factor (align-corners false,
//! edge clamped).

use crate::error::{Error, Result};
use crate::exec;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Per-output-coordinate interpolation taps along one axis.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

fn taps(input: usize, factor: usize) -> Vec<Tap> {
    (0..input * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

pub fn bilinear_upsample_forward<F: Real>(x: &Tensor<F>, factor: usize) -> Result<Tensor<F>> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    let s = x.shape();
    let out_shape = s.with_hw(s.h * factor, s.w * factor);
    let ty = taps(s.h, factor);
    let tx = taps(s.w, factor);
    let mut out = Tensor::zeros(out_shape);
    exec::for_each_chunk_mut(out.data_mut(), out_shape.plane(), |pl, dst| {
        let src = &x.data()[pl * s.plane()..(pl + 1) * s.plane()];
        for (oy, ty) in ty.iter().enumerate() {
            let ly = F::from_f64(ty.frac);
            let r0 = &src[ty.i0 * s.w..(ty.i0 + 1) * s.w];
            let r1 = &src[ty.i1 * s.w..(ty.i1 + 1) * s.w];
            for (ox, tx) in tx.iter().enumerate() {
                let lx = F::from_f64(tx.frac);
                let top = r0[tx.i0] + lx * (r0[tx.i1] - r0[tx.i0]);
                let bot = r1[tx.i0] + lx * (r1[tx.i1] - r1[tx.i0]);
                dst[oy * out_shape.w + ox] = top + ly * (bot - top);
            }
        }
    });
    Ok(out)
}

/// Exact adjoint of [`bilinear_upsample_forward`].
pub fn bilinear_upsample_backward<F: Real>(dy: &Tensor<F>, factor: usize, input_shape: Shape) -> Result<Tensor<F>> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    let s = input_shape;
    let expect = s.with_hw(s.h * factor, s.w * factor);
    if dy.shape() != expect {
        return Err(Error::shape("upsample backward", format!("dy {} != {expect}", dy.shape())));
    }
    let ty = taps(s.h, factor);
    let tx = taps(s.w, factor);
    let mut dx = Tensor::zeros(s);
    exec::for_each_chunk_mut(dx.data_mut(), s.plane(), |pl, dst| {
        let g = &dy.data()[pl * expect.plane()..(pl + 1) * expect.plane()];
        for (oy, ty) in ty.iter().enumerate() {
            let ly = F::from_f64(ty.frac);
            for (ox, tx) in tx.iter().enumerate() {
                let lx = F::from_f64(tx.frac);
                let v = g[oy * expect.w + ox];
                let top = v * (F::ONE - ly);
                let bot = v * ly;
                dst[ty.i0 * s.w + tx.i0] += top * (F::ONE - lx);
                dst[ty.i0 * s.w + tx.i1] += top * lx;
                dst[ty.i1 * s.w + tx.i0] += bot * (F::ONE - lx);
                dst[ty.i1 * s.w + tx.i1] += bot * lx;
            }
        }
    });
    Ok(dx)
}
