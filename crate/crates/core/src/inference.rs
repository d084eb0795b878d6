//! Eval-mode decomposition of arbitrary-sized images.

use crate::data::{crop_to, pad_to_multiple};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

/// Log-domain albedo and shading for a 1×3×H×W linear image: pads to the
/// network's input multiple, runs an eval-mode pass, crops back.
pub fn decompose_log(net: &Network<f32>, image: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::shape("decompose", format!("expected a 1x3xHxW image, got {s}")));
    }
    let (padded, (h, w)) = pad_to_multiple(image, net.config().input_multiple);
    let (a, sh) = net.predict(&padded.cast())?;
    Ok((crop_to(&a.cast(), h, w), crop_to(&sh.cast(), h, w)))
}

/// Linear albedo and shading, exponentiated and clipped to [0, 1].
pub fn decompose(net: &Network<f32>, image: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let (a, s) = decompose_log(net, image)?;
    let lin = |t: Tensor<f64>| t.map(|v| if v.is_nan() { 0.0 } else { v.exp().clamp(0.0, 1.0) });
    Ok((lin(a), lin(s)))
}
