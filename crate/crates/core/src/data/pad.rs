use crate::real::Real;
use crate::tensor::Tensor;

fn next_multiple(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// Pads right and bottom by edge replication up to the next multiple of
/// `m`. Returns the padded tensor and the original `(h, w)`.
pub fn pad_to_multiple<F: Real>(t: &Tensor<F>, m: usize) -> (Tensor<F>, (usize, usize)) {
    pad_with(t, m, None)
}

/// Same as [`pad_to_multiple`] but fills the new area with `value`
/// (zero for validity masks).
pub fn pad_to_multiple_with<F: Real>(t: &Tensor<F>, m: usize, value: F) -> (Tensor<F>, (usize, usize)) {
    pad_with(t, m, Some(value))
}

fn pad_with<F: Real>(t: &Tensor<F>, m: usize, fill: Option<F>) -> (Tensor<F>, (usize, usize)) {
    let m = m.max(1);
    let s = t.shape();
    let (h, w) = (next_multiple(s.h, m), next_multiple(s.w, m));
    if (h, w) == (s.h, s.w) {
        return (t.clone(), (s.h, s.w));
    }
    let out = Tensor::from_fn(s.with_hw(h, w), |n, c, y, x| match fill {
        Some(v) if y >= s.h || x >= s.w => v,
        _ => t.at(n, c, y.min(s.h - 1), x.min(s.w - 1)),
    });
    (out, (s.h, s.w))
}

/// Keeps the top-left `h × w` region.
pub fn crop_to<F: Real>(t: &Tensor<F>, h: usize, w: usize) -> Tensor<F> {
    let s = t.shape();
    assert!(h <= s.h && w <= s.w, "crop {h}x{w} larger than {s}");
    Tensor::from_fn(s.with_hw(h, w), |n, c, y, x| t.at(n, c, y, x))
}
