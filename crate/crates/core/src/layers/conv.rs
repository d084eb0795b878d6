//! Cross-correlation and its transpose (learned upsampling).

use crate::error::{Error, Result};
use crate::exec;
use crate::layers::im2col::Window;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Geometry of a 2-D convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvSpec {
    /// Square kernel, uniform stride and padding.
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride_h: stride,
            stride_w: stride,
            pad_h: pad,
            pad_w: pad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid(format!("zero channel count in {self:?}")));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::invalid(format!("kernel and stride must be >= 1 in {self:?}")));
        }
        Ok(())
    }

    /// Shape of the weight tensor: out × in × kh × kw.
    pub fn weight_shape(&self) -> Shape {
        Shape::of(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::of(1, self.out_channels, 1, 1)
    }

    /// `⌊(in + 2·pad − kernel)/stride⌋ + 1` per axis.
    pub fn conv_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ph = h + 2 * self.pad_h;
        let pw = w + 2 * self.pad_w;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::shape(
                "conv",
                format!(
                    "{}x{} kernel exceeds padded input {ph}x{pw}",
                    self.kernel_h, self.kernel_w
                ),
            ));
        }
        Ok((
            (ph - self.kernel_h) / self.stride_h + 1,
            (pw - self.kernel_w) / self.stride_w + 1,
        ))
    }

    /// `(in − 1)·stride + kernel − 2·pad` per axis.
    pub fn deconv_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = ((h - 1) * self.stride_h + self.kernel_h).checked_sub(2 * self.pad_h);
        let ow = ((w - 1) * self.stride_w + self.kernel_w).checked_sub(2 * self.pad_w);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::shape(
                "deconv",
                format!("padding {}x{} leaves no output for {h}x{w} input", self.pad_h, self.pad_w),
            )),
        }
    }

    fn window(&self, channels: usize, h: usize, w: usize, out_h: usize, out_w: usize) -> Window {
        Window {
            channels,
            height: h,
            width: w,
            kh: self.kernel_h,
            kw: self.kernel_w,
            sh: self.stride_h,
            sw: self.stride_w,
            ph: self.pad_h,
            pw: self.pad_w,
            out_h,
            out_w,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1
            && self.kernel_w == 1
            && self.stride_h == 1
            && self.stride_w == 1
            && self.pad_h == 0
            && self.pad_w == 0
    }
}

fn check_params<F: Real>(
    op: &'static str,
    x: &Tensor<F>,
    x_channels: usize,
    weight: &Tensor<F>,
    weight_shape: Shape,
    bias: Option<&Tensor<F>>,
    bias_len: usize,
) -> Result<()> {
    if x.shape().c != x_channels {
        return Err(Error::shape(
            op,
            format!("input channels {} != expected {x_channels}", x.shape().c),
        ));
    }
    if weight.shape() != weight_shape {
        return Err(Error::shape(
            op,
            format!("weight shape {} != expected {weight_shape}", weight.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.len() != bias_len {
            return Err(Error::shape(
                op,
                format!("bias length {} != out channels {bias_len}", b.len()),
            ));
        }
    }
    Ok(())
}

fn add_bias<F: Real>(out: &mut [F], bias: Option<&Tensor<F>>, plane: usize) {
    if let Some(b) = bias {
        for (co, &bv) in b.data().iter().enumerate() {
            out[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v += bv);
        }
    }
}

/// Cross-correlation with zero padding.
pub fn conv_forward<F: Real>(
    x: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_params("conv", x, spec.in_channels, weight, spec.weight_shape(), bias, spec.out_channels)?;
    let s = x.shape();
    let (oh, ow) = spec.conv_extent(s.h, s.w)?;
    let win = spec.window(s.c, s.h, s.w, oh, ow);
    let out_shape = Shape::of(s.n, spec.out_channels, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let (k, p, co) = (win.rows(), win.positions(), spec.out_channels);
    let pointwise = spec.is_pointwise();
    exec::for_each_chunk_mut(out.data_mut(), out_shape.item(), |n, y| {
        let xi = x.item(n);
        let col_buf;
        let col: &[F] = if pointwise {
            xi
        } else {
            let mut c = vec![F::ZERO; k * p];
            win.im2col(xi, &mut c);
            col_buf = c;
            &col_buf
        };
        F::gemm(co, k, p, F::ONE, weight.data(), k as isize, 1, col, p as isize, 1, F::ZERO, y, p as isize, 1);
        add_bias(y, bias, p);
    });
    Ok(out)
}

/// Backward of [`conv_forward`]. Returns `dx` and accumulates into
/// `dweight` / `dbias`.
pub fn conv_backward<F: Real>(
    dy: &Tensor<F>,
    x: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    dweight: &mut Tensor<F>,
    dbias: Option<&mut Tensor<F>>,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_params("conv backward", x, spec.in_channels, weight, spec.weight_shape(), None, 0)?;
    let s = x.shape();
    let (oh, ow) = spec.conv_extent(s.h, s.w)?;
    let expect = Shape::of(s.n, spec.out_channels, oh, ow);
    if dy.shape() != expect {
        return Err(Error::shape("conv backward", format!("dy {} != {expect}", dy.shape())));
    }
    if dweight.shape() != spec.weight_shape() {
        return Err(Error::shape("conv backward", "gradient buffer shape"));
    }
    let win = spec.window(s.c, s.h, s.w, oh, ow);
    let (k, p, co) = (win.rows(), win.positions(), spec.out_channels);
    let pointwise = spec.is_pointwise();

    let per_item = exec::map_indexed(s.n, |n| {
        let xi = x.item(n);
        let dyi = dy.item(n);
        let col_buf;
        let col: &[F] = if pointwise {
            xi
        } else {
            let mut c = vec![F::ZERO; k * p];
            win.im2col(xi, &mut c);
            col_buf = c;
            &col_buf
        };
        // dW = dy · colᵀ
        let mut dw = vec![F::ZERO; co * k];
        F::gemm(co, p, k, F::ONE, dyi, p as isize, 1, col, 1, p as isize, F::ZERO, &mut dw, k as isize, 1);
        // dcol = Wᵀ · dy
        let mut dx = vec![F::ZERO; s.item()];
        if pointwise {
            F::gemm(k, co, p, F::ONE, weight.data(), 1, k as isize, dyi, p as isize, 1, F::ZERO, &mut dx, p as isize, 1);
        } else {
            let mut dcol = vec![F::ZERO; k * p];
            F::gemm(k, co, p, F::ONE, weight.data(), 1, k as isize, dyi, p as isize, 1, F::ZERO, &mut dcol, p as isize, 1);
            win.col2im(&dcol, &mut dx);
        }
        let db: Vec<F> = (0..co).map(|c| dyi[c * p..(c + 1) * p].iter().copied().sum()).collect();
        (dx, dw, db)
    });

    let mut dx = Vec::with_capacity(s.len());
    let mut dbias = dbias;
    for (dxi, dw, db) in per_item {
        dx.extend_from_slice(&dxi);
        for (a, b) in dweight.data_mut().iter_mut().zip(&dw) {
            *a += *b;
        }
        if let Some(dbias) = dbias.as_deref_mut() {
            for (a, b) in dbias.data_mut().iter_mut().zip(&db) {
                *a += *b;
            }
        }
    }
    Tensor::from_vec(s, dx)
}

/// Weight of a transposed convolution is stored out × in × kh × kw; this
/// gathers it into the `(out·kh·kw) × in` matrix the column routines use.
fn deconv_matrix<F: Real>(weight: &Tensor<F>) -> Vec<F> {
    let s = weight.shape();
    let (co, ci, kk) = (s.n, s.c, s.h * s.w);
    let mut m = vec![F::ZERO; co * kk * ci];
    for o in 0..co {
        for i in 0..ci {
            for t in 0..kk {
                m[(o * kk + t) * ci + i] = weight.data()[(o * ci + i) * kk + t];
            }
        }
    }
    m
}

fn deconv_unmatrix<F: Real>(m: &[F], dweight: &mut Tensor<F>) {
    let s = dweight.shape();
    let (co, ci, kk) = (s.n, s.c, s.h * s.w);
    let d = dweight.data_mut();
    for o in 0..co {
        for i in 0..ci {
            for t in 0..kk {
                d[(o * ci + i) * kk + t] += m[(o * kk + t) * ci + i];
            }
        }
    }
}

/// Transposed convolution: the adjoint of [`conv_forward`] with respect
/// to its input. `spec.in_channels` is the channel count of `x` here and
/// the weight is `out × in × kh × kw`.
pub fn deconv_forward<F: Real>(
    x: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_params("deconv", x, spec.in_channels, weight, spec.weight_shape(), bias, spec.out_channels)?;
    let s = x.shape();
    let (oh, ow) = spec.deconv_extent(s.h, s.w)?;
    let win = spec.window(spec.out_channels, oh, ow, s.h, s.w);
    let out_shape = Shape::of(s.n, spec.out_channels, oh, ow);
    let m = deconv_matrix(weight);
    let (k, p, ci) = (win.rows(), win.positions(), spec.in_channels);
    let mut out = Tensor::zeros(out_shape);
    exec::for_each_chunk_mut(out.data_mut(), out_shape.item(), |n, y| {
        let mut col = vec![F::ZERO; k * p];
        F::gemm(k, ci, p, F::ONE, &m, ci as isize, 1, x.item(n), p as isize, 1, F::ZERO, &mut col, p as isize, 1);
        win.col2im(&col, y);
        add_bias(y, bias, oh * ow);
    });
    Ok(out)
}

/// Backward of [`deconv_forward`].
pub fn deconv_backward<F: Real>(
    dy: &Tensor<F>,
    x: &Tensor<F>,
    weight: &Tensor<F>,
    spec: &ConvSpec,
    dweight: &mut Tensor<F>,
    dbias: Option<&mut Tensor<F>>,
) -> Result<Tensor<F>> {
    spec.validate()?;
    check_params("deconv backward", x, spec.in_channels, weight, spec.weight_shape(), None, 0)?;
    let s = x.shape();
    let (oh, ow) = spec.deconv_extent(s.h, s.w)?;
    let expect = Shape::of(s.n, spec.out_channels, oh, ow);
    if dy.shape() != expect {
        return Err(Error::shape("deconv backward", format!("dy {} != {expect}", dy.shape())));
    }
    if dweight.shape() != spec.weight_shape() {
        return Err(Error::shape("deconv backward", "gradient buffer shape"));
    }
    let win = spec.window(spec.out_channels, oh, ow, s.h, s.w);
    let m = deconv_matrix(weight);
    let (k, p, ci, co) = (win.rows(), win.positions(), spec.in_channels, spec.out_channels);
    let plane = oh * ow;

    let per_item = exec::map_indexed(s.n, |n| {
        let dyi = dy.item(n);
        let mut col = vec![F::ZERO; k * p];
        win.im2col(dyi, &mut col);
        // dx = Mᵀ · col
        let mut dx = vec![F::ZERO; ci * p];
        F::gemm(ci, k, p, F::ONE, &m, 1, ci as isize, &col, p as isize, 1, F::ZERO, &mut dx, p as isize, 1);
        // dM = col · xᵀ
        let mut dm = vec![F::ZERO; k * ci];
        F::gemm(k, p, ci, F::ONE, &col, p as isize, 1, x.item(n), 1, p as isize, F::ZERO, &mut dm, ci as isize, 1);
        let db: Vec<F> = (0..co).map(|c| dyi[c * plane..(c + 1) * plane].iter().copied().sum()).collect();
        (dx, dm, db)
    });

    let mut dx = Vec::with_capacity(s.len());
    let mut dbias = dbias;
    for (dxi, dm, db) in per_item {
        dx.extend_from_slice(&dxi);
        deconv_unmatrix(&dm, dweight);
        if let Some(dbias) = dbias.as_deref_mut() {
            for (a, b) in dbias.data_mut().iter_mut().zip(&db) {
                *a += *b;
            }
        }
    }
    Tensor::from_vec(s, dx)
}

/// Swaps the first two weight axes, turning a convolution kernel into the
/// kernel of its transpose (and back).
pub fn transpose_io<F: Real>(weight: &Tensor<F>) -> Tensor<F> {
    let s = weight.shape();
    Tensor::from_fn(Shape::of(s.c, s.n, s.h, s.w), |i, o, y, x| weight.at(o, i, y, x))
}
