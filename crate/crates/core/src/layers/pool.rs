use crate::error::{Error, Result};
use crate::exec;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Square max-pooling window. Padding cells never win.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        PoolSpec { kernel, stride, pad }
    }

    pub fn extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid("pool kernel and stride must be >= 1"));
        }
        if self.pad >= self.kernel {
            return Err(Error::invalid(format!(
                "pool padding {} must be smaller than kernel {}",
                self.pad, self.kernel
            )));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if self.kernel > ph || self.kernel > pw {
            return Err(Error::shape(
                "max_pool",
                format!("{0}x{0} window larger than padded input {ph}x{pw}", self.kernel),
            ));
        }
        Ok((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }
}

/// Returns the pooled tensor and, per output cell, the flat input index of
/// the winning element. Ties go to the lowest flat index.
pub fn max_pool_forward<F: Real>(x: &Tensor<F>, spec: &PoolSpec) -> Result<(Tensor<F>, Vec<usize>)> {
    let s = x.shape();
    let (oh, ow) = spec.extent(s.h, s.w)?;
    let out_shape = s.with_hw(oh, ow);
    let planes = exec::map_indexed(s.n * s.c, |pl| {
        let base = pl * s.plane();
        let src = &x.data()[base..base + s.plane()];
        let mut vals = Vec::with_capacity(oh * ow);
        let mut idx = Vec::with_capacity(oh * ow);
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * spec.stride) as isize - spec.pad as isize;
                let x0 = (ox * spec.stride) as isize - spec.pad as isize;
                let mut best: Option<(F, usize)> = None;
                for ky in 0..spec.kernel as isize {
                    let iy = y0 + ky;
                    if iy < 0 || iy as usize >= s.h {
                        continue;
                    }
                    for kx in 0..spec.kernel as isize {
                        let ix = x0 + kx;
                        if ix < 0 || ix as usize >= s.w {
                            continue;
                        }
                        let k = iy as usize * s.w + ix as usize;
                        let v = src[k];
                        // row-major scan order, so strict '>' keeps the lowest index
                        if best.is_none_or(|(b, _)| v > b) {
                            best = Some((v, k));
                        }
                    }
                }
                let (v, k) = best.expect("non-empty pooling window");
                vals.push(v);
                idx.push(base + k);
            }
        }
        (vals, idx)
    });
    let mut data = Vec::with_capacity(out_shape.len());
    let mut indices = Vec::with_capacity(out_shape.len());
    for (v, i) in planes {
        data.extend(v);
        indices.extend(i);
    }
    Ok((Tensor::from_vec(out_shape, data)?, indices))
}

/// Routes each upstream gradient to its recorded argmax.
pub fn max_pool_backward<F: Real>(dy: &Tensor<F>, indices: &[usize], input_shape: Shape) -> Result<Tensor<F>> {
    if dy.len() != indices.len() {
        return Err(Error::shape(
            "max_pool backward",
            format!("{} gradients for {} recorded indices", dy.len(), indices.len()),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&g, &k) in dy.data().iter().zip(indices) {
        d[k] += g;
    }
    Ok(dx)
}
