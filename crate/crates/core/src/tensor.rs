//! Dense N×C×H×W storage and the handful of primitives the layers need.

use std::fmt;

use crate::error::{Error, Result};
use crate::real::Real;

/// Extents of a rank-4 tensor in N, C, H, W order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::shape(
                "Shape::new",
                format!("all extents must be >= 1, got {n}x{c}x{h}x{w}"),
            ));
        }
        n.checked_mul(c)
            .and_then(|v| v.checked_mul(h))
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::shape("Shape::new", "element count overflows usize"))?;
        Ok(Shape { n, c, h, w })
    }

    /// Panicking constructor for extents known valid at the call site.
    pub fn of(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self::new(n, c, h, w).expect("invalid shape")
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements per batch item.
    pub fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn with_c(&self, c: usize) -> Shape {
        Shape { c, ..*self }
    }

    pub fn with_hw(&self, h: usize, w: usize) -> Shape {
        Shape { h, w, ..*self }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One of the four tensor axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    N,
    C,
    H,
    W,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::N => 0,
            Axis::C => 1,
            Axis::H => 2,
            Axis::W => 3,
        }
    }
}

/// Row-major N,C,H,W tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<F: Real = f32> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = self.data.iter().take(8).collect();
        write!(f, "Tensor({}, {:?}", self.shape, head)?;
        if self.data.len() > 8 {
            write!(f, " ..")?;
        }
        write!(f, ")")
    }
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, F::ZERO)
    }

    pub fn full(shape: Shape, value: F) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<F>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{} values for shape {shape} ({} elements)", data.len(), shape.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> F {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut F {
        let o = self.shape.offset(n, c, h, w);
        &mut self.data[o]
    }

    /// Contiguous slice for one batch item.
    pub fn item(&self, n: usize) -> &[F] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [F] {
        let len = self.shape.item();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Contiguous H×W plane for batch item `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[F] {
        let p = self.shape.plane();
        let o = (n * self.shape.c + c) * p;
        &self.data[o..o + p]
    }

    /// Reinterprets the same data under a new shape of equal length.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: F) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<F> {
        self.expect_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<F> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(F::ZERO, |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sums over every axis in `axes`; the reduced axes keep extent 1.
    pub fn reduce_sum(&self, axes: &[Axis]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("reduce_sum needs at least one axis"));
        }
        let dims = self.shape.dims();
        let mut out_dims = dims;
        for a in axes {
            out_dims[a.index()] = 1;
        }
        let out_shape = Shape::of(out_dims[0], out_dims[1], out_dims[2], out_dims[3]);
        let mut out = Tensor::zeros(out_shape);
        let mut flat = 0;
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for h in 0..dims[2] {
                    for w in 0..dims[3] {
                        let idx = [n, c, h, w];
                        let o = out_shape.offset(
                            idx[0].min(out_dims[0] - 1),
                            idx[1].min(out_dims[1] - 1),
                            idx[2].min(out_dims[2] - 1),
                            idx[3].min(out_dims[3] - 1),
                        );
                        out.data[o] += self.data[flat];
                        flat += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Converts every element to another precision.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }

    /// Copies batch item `n` into its own 1×C×H×W tensor.
    pub fn select_item(&self, n: usize) -> Tensor<F> {
        Tensor {
            shape: Shape { n: 1, ..self.shape },
            data: self.item(n).to_vec(),
        }
    }

    /// Stacks 1×C×H×W (or any N) tensors along the batch axis.
    pub fn stack(items: &[&Tensor<F>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack of zero tensors"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            if t.shape.c != s.c || t.shape.h != s.h || t.shape.w != s.w {
                return Err(Error::shape(
                    "stack",
                    format!("{} does not match {}", t.shape, s),
                ));
            }
            n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(Shape { n, ..s }, data)
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{} vs {}", self.shape, other.shape),
            ));
        }
        Ok(())
    }
}

/// `log(max(x, eps))`, the guarded logarithm used for every intensity image.
pub fn guarded_log<F: Real>(t: &Tensor<F>, eps: F) -> Tensor<F> {
    t.map(|x| x.max(eps).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| rng.uniform() * 2.0 - 1.0)
    }

    #[test]
    fn shape_rejects_zero_extent() {
        assert!(Shape::new(1, 0, 2, 2).is_err());
        assert!(Shape::new(usize::MAX, 2, 2, 2).is_err());
    }

    #[test]
    fn map_examples() {
        let t = Tensor::from_vec(Shape::of(1, 1, 1, 2), vec![1.0f64, -3.0]).unwrap();
        assert_eq!(t.map(|x| x), t);
        assert_eq!(t.map(|x| 2.0 * x).data(), &[2.0, -6.0]);
        let z = Tensor::from_vec(Shape::of(1, 1, 1, 2), vec![0.0f64, 1.0]).unwrap();
        assert_eq!(guarded_log(&z, 1e-4).data(), &[1e-4f64.ln(), 0.0]);
    }

    #[test]
    fn reduce_sum_examples() {
        let t = Tensor::from_vec(Shape::of(1, 1, 2, 2), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let s = t.reduce_sum(&[Axis::N, Axis::C, Axis::H, Axis::W]).unwrap();
        assert_eq!(s.shape(), Shape::of(1, 1, 1, 1));
        assert_eq!(s.data(), &[10.0]);

        let ones = Tensor::full(Shape::of(1, 3, 1, 1), 1.0f64);
        assert_eq!(ones.reduce_sum(&[Axis::C]).unwrap().data(), &[3.0]);

        assert!(t.reduce_sum(&[]).is_err());
    }

    #[test]
    fn reduce_sum_partial_axes() {
        let mut rng = Rng::new(3);
        let t = random(Shape::of(2, 3, 4, 5), &mut rng);
        let s = t.reduce_sum(&[Axis::C, Axis::W]).unwrap();
        assert_eq!(s.shape(), Shape::of(2, 1, 4, 1));
        for n in 0..2 {
            for h in 0..4 {
                let mut acc = 0.0;
                for c in 0..3 {
                    for w in 0..5 {
                        acc += t.at(n, c, h, w);
                    }
                }
                assert!((s.at(n, 0, h, 0) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduce_sum_matches_scalar_loop() {
        let mut rng = Rng::new(11);
        for &(n, c, h, w) in &[(1, 2, 4, 4), (2, 3, 16, 16), (1, 1, 1, 7)] {
            let t = random(Shape::of(n, c, h, w), &mut rng);
            let mut acc = 0.0f64;
            for i in 0..t.len() {
                acc += t.data()[i];
            }
            let s = t.reduce_sum(&[Axis::N, Axis::C, Axis::H, Axis::W]).unwrap().data()[0];
            assert!((s - acc).abs() <= 1e-12 * acc.abs().max(1.0));
        }
    }

    #[test]
    fn map_commutes_with_reshape() {
        let mut rng = Rng::new(5);
        let t = random(Shape::of(2, 3, 4, 5), &mut rng);
        let f = |x: f64| (x * 3.0).sin() + x * x;
        let a = t.map(f).reshape(Shape::of(1, 1, 1, 120)).unwrap();
        let b = t.clone().reshape(Shape::of(1, 1, 1, 120)).unwrap().map(f);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(Shape::of(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }
}
