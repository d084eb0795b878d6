use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: kept entries are scaled by `1/(1-p)` at train time so
/// evaluation is a plain identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub probability: f64,
    pub train: bool,
}

impl Dropout {
    pub fn new(probability: f64, train: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&probability) {
            return Err(Error::invalid(format!("dropout probability {probability} outside [0, 1)")));
        }
        Ok(Dropout { probability, train })
    }

    fn active(&self) -> bool {
        self.train && self.probability > 0.0
    }

    /// Returns the output and, when active, the mask that produced it.
    pub fn forward<F: Real>(&self, x: &Tensor<F>, rng: &mut Rng) -> (Tensor<F>, Option<Tensor<F>>) {
        if !self.active() {
            return (x.clone(), None);
        }
        let keep = F::from_f64(1.0 / (1.0 - self.probability));
        let mut mask = Tensor::zeros(x.shape());
        for m in mask.data_mut() {
            *m = if rng.bernoulli(self.probability) { F::ZERO } else { keep };
        }
        let out = x.zip_map(&mask, |a, m| a * m).expect("same shape");
        (out, Some(mask))
    }
}

/// Applies a previously drawn mask (forward with a frozen mask).
pub fn apply_mask<F: Real>(x: &Tensor<F>, mask: Option<&Tensor<F>>) -> Result<Tensor<F>> {
    match mask {
        None => Ok(x.clone()),
        Some(m) => x.zip_map(m, |a, b| a * b),
    }
}

/// Backward multiplies by the stored mask; no mask means identity.
pub fn dropout_backward<F: Real>(dy: &Tensor<F>, mask: Option<&Tensor<F>>) -> Result<Tensor<F>> {
    apply_mask(dy, mask)
}
