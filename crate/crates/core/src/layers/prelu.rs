use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

fn check<F: Real>(x: &Tensor<F>, slopes: &Tensor<F>) -> Result<()> {
    if slopes.len() != x.shape().c {
        return Err(Error::shape(
            "prelu",
            format!("{} slopes for {} channels", slopes.len(), x.shape().c),
        ));
    }
    Ok(())
}

/// `x` where `x >= 0`, `a_c · x` otherwise, with one slope per channel.
pub fn prelu_forward<F: Real>(x: &Tensor<F>, slopes: &Tensor<F>) -> Result<Tensor<F>> {
    check(x, slopes)?;
    let s = x.shape();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if *v < F::ZERO {
            *v *= slopes.data()[(i / s.plane()) % s.c];
        }
    }
    Ok(out)
}

/// Returns `dx` and accumulates the slope gradient into `dslopes`.
pub fn prelu_backward<F: Real>(
    dy: &Tensor<F>,
    x: &Tensor<F>,
    slopes: &Tensor<F>,
    dslopes: &mut Tensor<F>,
) -> Result<Tensor<F>> {
    check(x, slopes)?;
    x.expect_same_shape(dy, "prelu backward")?;
    let s = x.shape();
    let mut dx = dy.clone();
    let ds = dslopes.data_mut();
    for (i, (g, &xv)) in dx.data_mut().iter_mut().zip(x.data()).enumerate() {
        if xv < F::ZERO {
            let c = (i / s.plane()) % s.c;
            ds[c] += xv * *g;
            *g *= slopes.data()[c];
        }
    }
    Ok(dx)
}
