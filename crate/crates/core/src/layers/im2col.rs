use crate::real::Real;

/// Sliding-window geometry shared by convolution and its transpose: an
/// image of `channels × height × width` visited by a `kh × kw` window at
/// the given stride and zero padding, producing `out_h × out_w` positions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source coordinate for output row `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = (o * stride + k) as isize - pad as isize;
        if p >= 0 && (p as usize) < extent {
            Some(p as usize)
        } else {
            None
        }
    }

    /// Unfolds `img` into a `rows × positions` column matrix.
    pub fn im2col<F: Real>(&self, img: &[F], col: &mut [F]) {
        let p = self.positions();
        let mut r = 0;
        for c in 0..self.channels {
            let plane = &img[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &mut col[r * p..(r + 1) * p];
                    for oy in 0..self.out_h {
                        let dst = &mut row[oy * self.out_w..(oy + 1) * self.out_w];
                        match Self::src(oy, ky, self.sh, self.ph, self.height) {
                            None => dst.iter_mut().for_each(|v| *v = F::ZERO),
                            Some(iy) => {
                                let src = &plane[iy * self.width..(iy + 1) * self.width];
                                for (ox, v) in dst.iter_mut().enumerate() {
                                    *v = match Self::src(ox, kx, self.sw, self.pw, self.width) {
                                        Some(ix) => src[ix],
                                        None => F::ZERO,
                                    };
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    /// Folds a column matrix back, accumulating overlapping taps into `img`.
    pub fn col2im<F: Real>(&self, col: &[F], img: &mut [F]) {
        let p = self.positions();
        let mut r = 0;
        for c in 0..self.channels {
            let plane = &mut img[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &col[r * p..(r + 1) * p];
                    for oy in 0..self.out_h {
                        let Some(iy) = Self::src(oy, ky, self.sh, self.ph, self.height) else {
                            continue;
                        };
                        let dst = &mut plane[iy * self.width..(iy + 1) * self.width];
                        let src = &row[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, &v) in src.iter().enumerate() {
                            if let Some(ix) = Self::src(ox, kx, self.sw, self.pw, self.width) {
                                dst[ix] += v;
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}
