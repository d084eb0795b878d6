//! Central-difference gradient verification.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of [`check_gradient`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` at `x` against central
/// differences with step `h` along every coordinate.
///
/// `f` returns `(value, gradient)`; the gradient is only read at `x`.
pub fn check_gradient<G>(mut f: G, x: &Tensor<f64>, h: f64) -> Result<GradCheck>
where
    G: FnMut(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    let coords: Vec<usize> = (0..x.len()).collect();
    check_gradient_at(&mut f, x, h, &coords)
}

/// Same as [`check_gradient`] restricted to the listed flat coordinates.
pub fn check_gradient_at<G>(f: &mut G, x: &Tensor<f64>, h: f64, coords: &[usize]) -> Result<GradCheck>
where
    G: FnMut(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {h}")));
    }
    let (v0, grad) = f(x);
    if !v0.is_finite() {
        return Err(Error::NonFinite("f(x) at the unperturbed point".into()));
    }
    x.expect_same_shape(&grad, "check_gradient")?;
    let mut report = GradCheck {
        max_rel_error: -1.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = x.clone();
    for &k in coords {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let plus = f(&probe).0;
        probe.data_mut()[k] = orig - h;
        let minus = f(&probe).0;
        probe.data_mut()[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "f(x ± h·e_{k}) = ({plus}, {minus})"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad.data()[k];
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error {
            report = GradCheck {
                max_rel_error: err,
                worst_index: k,
                analytic,
                numeric,
            };
        }
    }
    report.max_rel_error = report.max_rel_error.max(0.0);
    Ok(report)
}
