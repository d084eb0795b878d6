//! Ground-truth synthesis: shading from image and albedo, and
//! re-rendering images as the exact product of albedo and shading.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Least-squares brightness factor `α = Σ(I·P) / Σ(P²)` minimizing
/// `Σ(I − αP)²`.
pub fn fit_alpha(image: &Tensor<f64>, pred: &Tensor<f64>) -> Result<f64> {
    fit_alpha_masked(image, pred, None)
}

/// [`fit_alpha`] over the entries whose pixel is valid in `mask`
/// (shape N×1×H×W, broadcast over channels).
pub fn fit_alpha_masked(target: &Tensor<f64>, pred: &Tensor<f64>, mask: Option<&Tensor<f64>>) -> Result<f64> {
    target.expect_same_shape(pred, "fit_alpha")?;
    let s = pred.shape();
    let (mut num, mut den) = (0.0, 0.0);
    for (k, (&t, &p)) in target.data().iter().zip(pred.data()).enumerate() {
        if let Some(m) = mask {
            let n = k / s.item();
            let px = k % s.plane();
            if m.data()[n * s.plane() + px] == 0.0 {
                continue;
            }
        }
        num += t * p;
        den += p * p;
    }
    if den == 0.0 {
        return Err(Error::invalid("fit_alpha: prediction has zero energy (ΣP² = 0)"));
    }
    Ok(num / den)
}

/// Shading derived from an image and its albedo.
#[derive(Clone, Debug)]
pub struct GeneratedShading {
    /// 1×3×H×W, the gray shading replicated to three channels.
    pub shading: Tensor<f64>,
    pub alpha: f64,
    /// 1×1×H×W; zero where the albedo mean fell below the guard.
    pub valid: Tensor<f64>,
}

/// `S₀ = I′ / max(A′, ε)` from per-pixel channel means, then
/// `S = S₀ / α` with `α = fit_alpha(I, A·S₀)`.
pub fn generate_mit_shading(image: &Tensor<f64>, albedo: &Tensor<f64>, eps: f64) -> Result<GeneratedShading> {
    image.expect_same_shape(albedo, "generate_mit_shading")?;
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::shape("generate_mit_shading", format!("expected one image, got {s}")));
    }
    let mean = |t: &Tensor<f64>, y: usize, x: usize| (0..s.c).map(|c| t.at(0, c, y, x)).sum::<f64>() / s.c as f64;
    let mut valid = Tensor::full(s.with_c(1), 1.0);
    let gray = Tensor::from_fn(s.with_c(1), |_, _, y, x| {
        let a = mean(albedo, y, x);
        if a < eps {
            *valid.at_mut(0, 0, y, x) = 0.0;
        }
        mean(image, y, x) / a.max(eps)
    });
    let replicated = Tensor::from_fn(s, |_, _, y, x| gray.at(0, 0, y, x));
    let product = albedo.zip_map(&replicated, |a, b| a * b)?;
    let alpha = fit_alpha(image, &product)?;
    let shading = Tensor::from_fn(s.with_c(3), |_, _, y, x| gray.at(0, 0, y, x) / alpha);
    Ok(GeneratedShading { shading, alpha, valid })
}

/// `I = A · S` per channel. A single-channel shading is broadcast.
pub fn resynthesize(albedo: &Tensor<f64>, shading: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (a, s) = (albedo.shape(), shading.shape());
    if a.n != s.n || a.h != s.h || a.w != s.w || !(s.c == a.c || s.c == 1) {
        return Err(Error::shape("resynthesize", format!("albedo {a} vs shading {s}")));
    }
    Ok(Tensor::from_fn(a, |n, c, y, x| albedo.at(n, c, y, x) * shading.at(n, c.min(s.c - 1), y, x)))
}
