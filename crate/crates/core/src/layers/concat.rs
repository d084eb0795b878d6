use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Concatenates along the channel axis in argument order.
pub fn concat_channels<F: Real>(parts: &[&Tensor<F>]) -> Result<Tensor<F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat of zero tensors"))?
        .shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if s.n != first.n || s.h != first.h || s.w != first.w {
            return Err(Error::shape(
                "concat_channels",
                format!("{s} does not match {first} outside the channel axis"),
            ));
        }
        channels += s.c;
    }
    let out_shape = first.with_c(channels);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..first.n {
        for p in parts {
            data.extend_from_slice(p.item(n));
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Inverse of [`concat_channels`]: slices `dy` into the given channel counts.
pub fn split_channels<F: Real>(dy: &Tensor<F>, channels: &[usize]) -> Result<Vec<Tensor<F>>> {
    let s = dy.shape();
    if channels.iter().sum::<usize>() != s.c {
        return Err(Error::shape(
            "split_channels",
            format!("{channels:?} does not sum to {} channels", s.c),
        ));
    }
    let mut outs: Vec<Vec<F>> = channels.iter().map(|&c| Vec::with_capacity(s.n * c * s.plane())).collect();
    for n in 0..s.n {
        let item = dy.item(n);
        let mut off = 0;
        for (o, &c) in outs.iter_mut().zip(channels) {
            o.extend_from_slice(&item[off..off + c * s.plane()]);
            off += c * s.plane();
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w)?, d))
        .collect()
}
