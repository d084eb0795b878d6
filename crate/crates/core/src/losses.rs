//! Scale-invariant L2 loss, gradient L2 loss and their combination.
//!
//! All losses work on log-domain tensors of shape N×C×H×W with a validity
//! mask of shape N×1×H×W (nonzero = valid). Each batch item is normalized
//! by its own count `n = C · valid pixels`; the batch loss is the mean over
//! items, and every returned gradient is the derivative of that mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub use_gradient_loss: bool,
    pub log_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.5,
            use_gradient_loss: false,
            log_epsilon: 1e-4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.log_epsilon > 0.0) {
            return Err(Error::invalid("log epsilon must be > 0"));
        }
        Ok(())
    }
}

fn check_inputs<F: Real>(op: &'static str, target: &Tensor<F>, pred: &Tensor<F>, mask: &Tensor<F>) -> Result<()> {
    target.expect_same_shape(pred, op)?;
    let s = pred.shape();
    if mask.shape() != s.with_c(1) {
        return Err(Error::shape(op, format!("mask {} must be {}", mask.shape(), s.with_c(1))));
    }
    Ok(())
}

/// Valid pixel count per batch item; errors if any item has none.
fn valid_counts<F: Real>(op: &'static str, mask: &Tensor<F>) -> Result<Vec<usize>> {
    let s = mask.shape();
    (0..s.n)
        .map(|n| {
            let k = mask.item(n).iter().filter(|&&m| m != F::ZERO).count();
            if k == 0 {
                Err(Error::invalid(format!("{op}: batch item {n} has an empty mask (n = 0)")))
            } else {
                Ok(k)
            }
        })
        .collect()
}

/// `(1/n)Σy² − λ(1/n²)(Σy)²` with `y = target − pred` over valid entries.
/// Returns the loss and its gradient with respect to `pred`.
pub fn sil2_loss<F: Real>(
    target: &Tensor<F>,
    pred: &Tensor<F>,
    mask: &Tensor<F>,
    lambda: f64,
) -> Result<(F, Tensor<F>)> {
    check_inputs("sil2_loss", target, pred, mask)?;
    let counts = valid_counts("sil2_loss", mask)?;
    let s = pred.shape();
    let lam = F::from_f64(lambda);
    let two = F::from_f64(2.0);
    let batch = F::from_f64(s.n as f64);
    let mut grad = Tensor::zeros(s);
    let mut total = F::ZERO;
    for n in 0..s.n {
        let m = mask.item(n);
        let t = target.item(n);
        let p = pred.item(n);
        let count = F::from_f64((counts[n] * s.c) as f64);
        let (mut sum, mut sum_sq) = (F::ZERO, F::ZERO);
        for (k, (&tv, &pv)) in t.iter().zip(p).enumerate() {
            if m[k % s.plane()] != F::ZERO {
                let y = tv - pv;
                sum += y;
                sum_sq += y * y;
            }
        }
        total += sum_sq / count - lam * sum * sum / (count * count);
        let g = grad.item_mut(n);
        for (k, (&tv, &pv)) in t.iter().zip(p).enumerate() {
            if m[k % s.plane()] != F::ZERO {
                let y = tv - pv;
                g[k] = -(two * y / count - two * lam * sum / (count * count)) / batch;
            }
        }
    }
    Ok((total / batch, grad))
}

/// `(1/n)Σ[(∇ᵢy)² + (∇ⱼy)²]` with forward differences; a difference counts
/// only when both endpoints are valid.
pub fn gradient_loss<F: Real>(target: &Tensor<F>, pred: &Tensor<F>, mask: &Tensor<F>) -> Result<(F, Tensor<F>)> {
    check_inputs("gradient_loss", target, pred, mask)?;
    let counts = valid_counts("gradient_loss", mask)?;
    let s = pred.shape();
    let two = F::from_f64(2.0);
    let batch = F::from_f64(s.n as f64);
    let mut grad = Tensor::zeros(s);
    let mut total = F::ZERO;
    for n in 0..s.n {
        let m = mask.item(n);
        let count = F::from_f64((counts[n] * s.c) as f64);
        let scale = two / (count * batch);
        let mut acc = F::ZERO;
        for c in 0..s.c {
            let t = &target.item(n)[c * s.plane()..(c + 1) * s.plane()];
            let p = &pred.item(n)[c * s.plane()..(c + 1) * s.plane()];
            let g = &mut grad.item_mut(n)[c * s.plane()..(c + 1) * s.plane()];
            let y = |k: usize| t[k] - p[k];
            let mut term = |a: usize, b: usize, g: &mut [F]| {
                if m[a] != F::ZERO && m[b] != F::ZERO {
                    let d = y(b) - y(a);
                    acc += d * d;
                    // dL/dpred = −dL/dy
                    g[b] -= scale * d;
                    g[a] += scale * d;
                }
            };
            for i in 0..s.h {
                for j in 0..s.w {
                    let k = i * s.w + j;
                    if j + 1 < s.w {
                        term(k, k + 1, g);
                    }
                    if i + 1 < s.h {
                        term(k, k + s.w, g);
                    }
                }
            }
        }
        total += acc / count;
    }
    Ok((total / batch, grad))
}

/// Value and gradients of the joint albedo/shading objective.
#[derive(Clone, Debug)]
pub struct TotalLoss<F: Real> {
    pub value: F,
    pub d_log_albedo: Tensor<F>,
    pub d_log_shading: Tensor<F>,
}

/// `sil2(A) + sil2(S)`, plus the gradient loss on albedo when enabled.
/// Shading never receives the gradient term.
pub fn total_loss<F: Real>(
    target_albedo: &Tensor<F>,
    target_shading: &Tensor<F>,
    pred_albedo: &Tensor<F>,
    pred_shading: &Tensor<F>,
    mask: &Tensor<F>,
    cfg: &LossConfig,
) -> Result<TotalLoss<F>> {
    cfg.validate()?;
    let (la, mut da) = sil2_loss(target_albedo, pred_albedo, mask, cfg.lambda)?;
    let (ls, ds) = sil2_loss(target_shading, pred_shading, mask, cfg.lambda)?;
    let mut value = la + ls;
    if cfg.use_gradient_loss {
        let (lg, dg) = gradient_loss(target_albedo, pred_albedo, mask)?;
        value += lg;
        da.add_assign(&dg)?;
    }
    Ok(TotalLoss {
        value,
        d_log_albedo: da,
        d_log_shading: ds,
    })
}
