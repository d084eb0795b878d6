//! Benchmark measures: scale-invariant MSE, local MSE, DSSIM, and the
//! per-dataset report.
//!
//! All functions take linear-domain 1×C×H×W images. Masks are 1×1×H×W
//! with nonzero meaning valid and broadcast over channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_pair(target: &Tensor<f64>, pred: &Tensor<f64>, mask: Option<&Tensor<f64>>, op: &'static str) -> Result<()> {
    target.expect_same_shape(pred, op)?;
    let s = target.shape();
    if s.n != 1 {
        return Err(Error::shape(op, format!("expected a single image, got {s}")));
    }
    if let Some(m) = mask {
        let ms = m.shape();
        if ms != s.with_c(1) {
            return Err(Error::shape(op, format!("mask {ms} does not match image {s}")));
        }
    }
    Ok(())
}

/// Sums over the valid entries of the window `[y0, y0+kh) × [x0, x0+kw)`.
/// The error at the fitted α is recomputed directly by [`window_sse`]
/// rather than expanded from these sums, which would cancel badly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct WindowSums {
    tp: f64,
    pp: f64,
    tt: f64,
    n: usize,
}

impl WindowSums {
    fn alpha(&self) -> f64 {
        if self.pp > 0.0 {
            self.tp / self.pp
        } else {
            0.0
        }
    }

    fn collect(
        target: &Tensor<f64>,
        pred: &Tensor<f64>,
        mask: Option<&Tensor<f64>>,
        (y0, x0, kh, kw): (usize, usize, usize, usize),
    ) -> WindowSums {
        let s = target.shape();
        let mut w = WindowSums::default();
        for y in y0..y0 + kh {
            for x in x0..x0 + kw {
                if mask.is_some_and(|m| m.at(0, 0, y, x) == 0.0) {
                    continue;
                }
                for c in 0..s.c {
                    let (t, p) = (target.at(0, c, y, x), pred.at(0, c, y, x));
                    w.tp += t * p;
                    w.pp += p * p;
                    w.tt += t * t;
                    w.n += 1;
                }
            }
        }
        w
    }
}

fn window_sse(
    target: &Tensor<f64>,
    pred: &Tensor<f64>,
    mask: Option<&Tensor<f64>>,
    win: (usize, usize, usize, usize),
    alpha: f64,
) -> f64 {
    let s = target.shape();
    let (y0, x0, kh, kw) = win;
    let mut sse = 0.0;
    for y in y0..y0 + kh {
        for x in x0..x0 + kw {
            if mask.is_some_and(|m| m.at(0, 0, y, x) == 0.0) {
                continue;
            }
            for c in 0..s.c {
                let d = target.at(0, c, y, x) - alpha * pred.at(0, c, y, x);
                sse += d * d;
            }
        }
    }
    sse
}

/// Mean squared error after scaling `pred` by the least-squares factor
/// against `target` (factor 0 when the prediction is all zero).
pub fn si_mse(target: &Tensor<f64>, pred: &Tensor<f64>, mask: Option<&Tensor<f64>>) -> Result<f64> {
    check_pair(target, pred, mask, "si_mse")?;
    let s = target.shape();
    let win = (0, 0, s.h, s.w);
    let sums = WindowSums::collect(target, pred, mask, win);
    if sums.n == 0 {
        return Err(Error::invalid("si_mse: mask has no valid pixels"));
    }
    Ok(window_sse(target, pred, mask, win, sums.alpha()) / sums.n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmseConfig {
    /// Window side as a fraction of the larger image dimension.
    pub window_fraction: f64,
    /// Stride as a fraction of the window side.
    pub stride_fraction: f64,
}

impl Default for LmseConfig {
    fn default() -> Self {
        LmseConfig {
            window_fraction: 0.1,
            stride_fraction: 0.5,
        }
    }
}

impl LmseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "lmse window_fraction {} outside (0, 1]",
                self.window_fraction
            )));
        }
        if !(self.stride_fraction > 0.0 && self.stride_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "lmse stride_fraction {} outside (0, 1]",
                self.stride_fraction
            )));
        }
        Ok(())
    }

    /// Window side and stride for an H×W image.
    pub fn geometry(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let k = ((self.window_fraction * h.max(w) as f64).round() as usize).max(1);
        if k > h || k > w {
            return Err(Error::invalid(format!("lmse window {k} exceeds image extent {h}x{w}")));
        }
        let stride = ((k as f64 * self.stride_fraction).floor() as usize).max(1);
        Ok((k, stride))
    }
}

/// Window origins along one axis: multiples of `stride`, with a final
/// window shifted flush against the border when needed.
pub fn window_starts(extent: usize, k: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + k <= extent).collect();
    let last = extent - k;
    if *starts.last().expect("k <= extent") != last {
        starts.push(last);
    }
    starts
}

/// Per-window accumulations behind [`lmse`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LmseParts {
    /// Mean over windows of each window's si-MSE.
    pub lmse: f64,
    /// Σ over windows of the squared error at the window's own α.
    pub sse: f64,
    /// Σ over windows of the squared error of the zero predictor.
    pub zero_sse: f64,
    pub windows: usize,
}

pub fn lmse_parts(
    target: &Tensor<f64>,
    pred: &Tensor<f64>,
    mask: Option<&Tensor<f64>>,
    cfg: &LmseConfig,
) -> Result<LmseParts> {
    check_pair(target, pred, mask, "lmse")?;
    let s = target.shape();
    let (k, stride) = cfg.geometry(s.h, s.w)?;
    let mut parts = LmseParts::default();
    let mut total = 0.0;
    for &y0 in &window_starts(s.h, k, stride) {
        for &x0 in &window_starts(s.w, k, stride) {
            let win = (y0, x0, k, k);
            let sums = WindowSums::collect(target, pred, mask, win);
            if sums.n == 0 {
                continue;
            }
            let sse = window_sse(target, pred, mask, win, sums.alpha());
            total += sse / sums.n as f64;
            parts.sse += sse;
            parts.zero_sse += sums.tt;
            parts.windows += 1;
        }
    }
    if parts.windows == 0 {
        return Err(Error::invalid("lmse: no window contains a valid pixel"));
    }
    parts.lmse = total / parts.windows as f64;
    Ok(parts)
}

/// Mean of per-window si-MSE over windows with at least one valid pixel.
pub fn lmse(target: &Tensor<f64>, pred: &Tensor<f64>, mask: Option<&Tensor<f64>>, cfg: &LmseConfig) -> Result<f64> {
    Ok(lmse_parts(target, pred, mask, cfg)?.lmse)
}

/// Approximation of the MIT "Total" column: each component's windowed
/// squared error divided by that of the zero predictor, then averaged.
pub fn mit_total_lmse(albedo: &LmseParts, shading: &LmseParts) -> Result<f64> {
    if albedo.zero_sse == 0.0 || shading.zero_sse == 0.0 {
        return Err(Error::invalid("mit_total_lmse: ground truth is zero in every window"));
    }
    Ok(0.5 * (albedo.sse / albedo.zero_sse + shading.sse / shading.zero_sse))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

/// Gaussian-weighted local means of `f(x, y)` over every valid window
/// position of one channel, filtering rows then columns.
fn filter_valid(n: usize, c: usize, x: &Tensor<f64>, y: &Tensor<f64>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let s = x.shape();
    let g = gaussian_taps();
    let (oh, ow) = (s.h - SSIM_WINDOW + 1, s.w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; s.h * ow];
    for r in 0..s.h {
        for j in 0..ow {
            rows[r * ow + j] = (0..SSIM_WINDOW).map(|t| g[t] * f(x.at(n, c, r, j + t), y.at(n, c, r, j + t))).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|t| g[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Per-channel SSIM at every position where the 11×11 window fits,
/// shaped N×C×(H−10)×(W−10).
pub fn ssim_map(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<Tensor<f64>> {
    a.expect_same_shape(b, "ssim_map")?;
    let s = a.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, image is {}x{}",
            s.h, s.w
        )));
    }
    let out_shape = s.with_hw(s.h - SSIM_WINDOW + 1, s.w - SSIM_WINDOW + 1);
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let mx = filter_valid(n, c, a, b, |x, _| x);
            let my = filter_valid(n, c, a, b, |_, y| y);
            let xx = filter_valid(n, c, a, b, |x, _| x * x);
            let yy = filter_valid(n, c, a, b, |_, y| y * y);
            let xy = filter_valid(n, c, a, b, |x, y| x * y);
            for i in 0..mx.len() {
                let (ux, uy) = (mx[i], my[i]);
                let vx = xx[i] - ux * ux;
                let vy = yy[i] - uy * uy;
                let cov = xy[i] - ux * uy;
                out.push(
                    ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                        / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2)),
                );
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Scales `pred` by the least-squares factor against `target` (0 when
/// the prediction is all zero) and clips to [0, 1].
pub fn align_and_clip(target: &Tensor<f64>, pred: &Tensor<f64>) -> Result<Tensor<f64>> {
    target.expect_same_shape(pred, "align")?;
    let pp: f64 = pred.data().iter().map(|p| p * p).sum();
    let alpha = if pp > 0.0 { target.dot(pred)? / pp } else { 0.0 };
    Ok(pred.map(|p| (alpha * p).clamp(0.0, 1.0)))
}

/// `(1 − mean SSIM) / 2`. With `align`, the prediction is first
/// brightness-matched to the target and clipped to [0, 1].
pub fn dssim(target: &Tensor<f64>, pred: &Tensor<f64>, align: bool) -> Result<f64> {
    let map = if align {
        ssim_map(target, &align_and_clip(target, pred)?)?
    } else {
        ssim_map(target, pred)?
    };
    let mean = map.sum() / map.len() as f64;
    Ok(((1.0 - mean) / 2.0).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub lmse: LmseConfig,
    pub dssim_align: bool,
    pub mit_total: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            lmse: LmseConfig::default(),
            dssim_align: true,
            mit_total: false,
        }
    }
}

/// Ground truth and prediction for one sample, all 1×C×H×W linear images.
#[derive(Clone, Debug)]
pub struct EvalInput {
    pub id: String,
    pub albedo: Tensor<f64>,
    pub shading: Tensor<f64>,
    pub pred_albedo: Tensor<f64>,
    pub pred_shading: Tensor<f64>,
    pub mask: Option<Tensor<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mse_a: f64,
    pub mse_s: f64,
    pub lmse_a: f64,
    pub lmse_s: f64,
    pub dssim_a: f64,
    pub dssim_s: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AvgRow {
    pub mse: f64,
    pub lmse: f64,
    pub dssim: f64,
}

impl MetricRow {
    pub fn avg(&self) -> AvgRow {
        AvgRow {
            mse: (self.mse_a + self.mse_s) / 2.0,
            lmse: (self.lmse_a + self.lmse_s) / 2.0,
            dssim: (self.dssim_a + self.dssim_s) / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    #[serde(flatten)]
    pub row: MetricRow,
    pub avg: AvgRow,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mit_total_lmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_sample: Vec<SampleMetrics>,
    /// Means over the samples that evaluated successfully; absent when
    /// none did.
    pub mean: Option<MetricRow>,
    pub avg: Option<AvgRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mit_total_lmse: Option<f64>,
    /// Set whenever `mit_total_lmse` is present: the value approximates
    /// the reference scorer rather than reproducing it.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mit_total_lmse_approximation: Option<bool>,
    pub errors: Vec<SampleError>,
}

impl MetricReport {
    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate_sample(input: &EvalInput, cfg: &EvalConfig) -> Result<SampleMetrics> {
    let m = input.mask.as_ref();
    let la = lmse_parts(&input.albedo, &input.pred_albedo, m, &cfg.lmse)?;
    let ls = lmse_parts(&input.shading, &input.pred_shading, m, &cfg.lmse)?;
    let row = MetricRow {
        mse_a: si_mse(&input.albedo, &input.pred_albedo, m)?,
        mse_s: si_mse(&input.shading, &input.pred_shading, m)?,
        lmse_a: la.lmse,
        lmse_s: ls.lmse,
        dssim_a: dssim(&input.albedo, &input.pred_albedo, cfg.dssim_align)?,
        dssim_s: dssim(&input.shading, &input.pred_shading, cfg.dssim_align)?,
    };
    let mit = if cfg.mit_total {
        Some(mit_total_lmse(&la, &ls)?)
    } else {
        None
    };
    Ok(SampleMetrics {
        id: input.id.clone(),
        row,
        avg: row.avg(),
        mit_total_lmse: mit,
    })
}

/// Evaluates every case in parallel and folds in input order. Cases that
/// failed upstream (e.g. a missing prediction) or during evaluation are
/// listed under `errors`.
pub fn evaluate_report(cases: Vec<(String, Result<EvalInput>)>, cfg: &EvalConfig) -> Result<MetricReport> {
    if cases.is_empty() {
        return Err(Error::invalid("evaluate_report: no samples"));
    }
    cfg.lmse.validate()?;
    let results = crate::exec::map_indexed(cases.len(), |i| match &cases[i].1 {
        Ok(input) => evaluate_sample(input, cfg).map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    });
    let mut per_sample = Vec::new();
    let mut errors = Vec::new();
    for ((id, _), r) in cases.iter().zip(results) {
        match r {
            Ok(m) => per_sample.push(m),
            Err(error) => errors.push(SampleError { id: id.clone(), error }),
        }
    }
    let k = per_sample.len() as f64;
    let mean = (!per_sample.is_empty()).then(|| {
        let sum = |f: fn(&MetricRow) -> f64| per_sample.iter().map(|m| f(&m.row)).sum::<f64>() / k;
        MetricRow {
            mse_a: sum(|r| r.mse_a),
            mse_s: sum(|r| r.mse_s),
            lmse_a: sum(|r| r.lmse_a),
            lmse_s: sum(|r| r.lmse_s),
            dssim_a: sum(|r| r.dssim_a),
            dssim_s: sum(|r| r.dssim_s),
        }
    });
    let mit_total_lmse = (cfg.mit_total && !per_sample.is_empty())
        .then(|| per_sample.iter().filter_map(|m| m.mit_total_lmse).sum::<f64>() / k);
    Ok(MetricReport {
        avg: mean.map(|m| m.avg()),
        mean,
        mit_total_lmse_approximation: mit_total_lmse.map(|_| true),
        mit_total_lmse,
        per_sample,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn random(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| rng.uniform())
    }

    #[test]
    fn si_mse_scale_invariance_and_fallback() {
        let mut rng = Rng::new(1);
        let t = random(Shape::of(1, 3, 9, 7), &mut rng);
        assert!(si_mse(&t, &t.map(|v| 3.7 * v), None).unwrap() < 1e-28);
        let zero = Tensor::zeros(t.shape());
        let mean_sq = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        assert!((si_mse(&t, &zero, None).unwrap() - mean_sq).abs() < 1e-15);
    }

    #[test]
    fn si_mse_respects_mask() {
        let mut rng = Rng::new(2);
        let t = random(Shape::of(1, 1, 4, 4), &mut rng);
        let mut p = t.clone();
        p.data_mut()[3] += 10.0;
        let mut m = Tensor::full(Shape::of(1, 1, 4, 4), 1.0);
        m.data_mut()[3] = 0.0;
        assert!(si_mse(&t, &p, Some(&m)).unwrap() < 1e-28);
        assert!(si_mse(&t, &p, Some(&Tensor::zeros(m.shape()))).is_err());
    }

    #[test]
    fn window_starts_are_flush() {
        assert_eq!(window_starts(40, 4, 2), (0..=36).step_by(2).collect::<Vec<_>>());
        assert_eq!(window_starts(41, 4, 2).last(), Some(&37));
        assert_eq!(window_starts(5, 5, 2), vec![0]);
    }

    #[test]
    fn lmse_zero_cases() {
        let mut rng = Rng::new(3);
        let t = random(Shape::of(1, 3, 30, 40), &mut rng);
        let cfg = LmseConfig::default();
        assert!(lmse(&t, &t, None, &cfg).unwrap() < 1e-28);
        assert!(lmse(&t, &t.map(|v| 0.3 * v), None, &cfg).unwrap() < 1e-28);
        assert!(lmse(&t, &random(t.shape(), &mut rng), None, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn lmse_rejects_no_valid_window() {
        let t = Tensor::full(Shape::of(1, 1, 20, 20), 0.5);
        let m = Tensor::zeros(Shape::of(1, 1, 20, 20));
        assert!(lmse(&t, &t, Some(&m), &LmseConfig::default()).is_err());
    }

    #[test]
    fn mit_total_normalization() {
        let mut rng = Rng::new(4);
        let cfg = LmseConfig::default();
        let a = random(Shape::of(1, 3, 30, 30), &mut rng);
        let s = random(Shape::of(1, 3, 30, 30), &mut rng);
        let z = Tensor::zeros(a.shape());
        let pa = lmse_parts(&a, &a, None, &cfg).unwrap();
        let ps = lmse_parts(&s, &s, None, &cfg).unwrap();
        assert!(mit_total_lmse(&pa, &ps).unwrap() < 1e-28);
        let za = lmse_parts(&a, &z, None, &cfg).unwrap();
        let zs = lmse_parts(&s, &z, None, &cfg).unwrap();
        assert_eq!(mit_total_lmse(&za, &zs).unwrap(), 1.0);
        assert!(mit_total_lmse(&za, &LmseParts::default()).is_err());
    }

    #[test]
    fn dssim_identity_and_bounds() {
        let mut rng = Rng::new(5);
        let x = random(Shape::of(1, 3, 16, 20), &mut rng);
        assert_eq!(dssim(&x, &x, true).unwrap(), 0.0);
        assert_eq!(dssim(&x, &x, false).unwrap(), 0.0);
        for _ in 0..20 {
            let y = random(x.shape(), &mut rng);
            let d = dssim(&x, &y, true).unwrap();
            assert!((0.0..=1.0).contains(&d));
        }
        assert!(dssim(&Tensor::zeros(Shape::of(1, 1, 10, 30)), &Tensor::zeros(Shape::of(1, 1, 10, 30)), true).is_err());
    }

    #[test]
    fn dssim_symmetric_without_alignment() {
        let mut rng = Rng::new(6);
        let x = random(Shape::of(1, 3, 14, 14), &mut rng);
        let y = random(x.shape(), &mut rng);
        let d1 = dssim(&x, &y, false).unwrap();
        let d2 = dssim(&y, &x, false).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn gaussian_taps_normalized() {
        let g = gaussian_taps();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g[0], g[10]);
        assert!(g[5] > g[4]);
    }

    fn input(id: &str, rng: &mut Rng, perfect: bool) -> EvalInput {
        let s = Shape::of(1, 3, 24, 24);
        let albedo = random(s, rng);
        let shading = random(s, rng);
        let (pa, ps) = if perfect {
            (albedo.clone(), shading.clone())
        } else {
            (random(s, rng), random(s, rng))
        };
        EvalInput {
            id: id.into(),
            albedo,
            shading,
            pred_albedo: pa,
            pred_shading: ps,
            mask: None,
        }
    }

    #[test]
    fn report_perfect_sample_is_zero() {
        let mut rng = Rng::new(7);
        let r = evaluate_report(vec![("a".into(), Ok(input("a", &mut rng, true)))], &EvalConfig::default()).unwrap();
        assert_eq!(r.mean.unwrap(), MetricRow::default());
        assert!(r.mean.unwrap().mse_a == 0.0);
        assert!(r.errors.is_empty());
    }

    #[test]
    fn report_means_and_avg() {
        let mut rng = Rng::new(8);
        let cfg = EvalConfig {
            mit_total: true,
            ..EvalConfig::default()
        };
        let cases = vec![
            ("a".to_string(), Ok(input("a", &mut rng, false))),
            ("b".to_string(), Ok(input("b", &mut rng, false))),
            ("c".to_string(), Err(Error::invalid("missing prediction"))),
        ];
        let r = evaluate_report(cases, &cfg).unwrap();
        assert_eq!(r.per_sample.len(), 2);
        assert_eq!(r.errors[0].id, "c");
        let (a, b) = (r.per_sample[0].row, r.per_sample[1].row);
        let mean = r.mean.unwrap();
        assert_eq!(mean.lmse_s, (a.lmse_s + b.lmse_s) / 2.0);
        assert_eq!(mean.dssim_a, (a.dssim_a + b.dssim_a) / 2.0);
        for m in &r.per_sample {
            assert_eq!(m.avg.mse, (m.row.mse_a + m.row.mse_s) / 2.0);
        }
        assert_eq!(r.avg.unwrap().lmse, (mean.lmse_a + mean.lmse_s) / 2.0);
        assert_eq!(r.mit_total_lmse_approximation, Some(true));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json["per_sample"][0]["mse_a"].is_number());
        assert!(json["mean"]["dssim_s"].is_number());
        assert!(json["avg"]["lmse"].is_number());
        assert!(json["mit_total_lmse"].is_number());
    }

    #[test]
    fn empty_report_rejected() {
        assert!(evaluate_report(vec![], &EvalConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn si_mse_invariant_to_prediction_scale(seed in 0u64..1000, k in 0.01f64..100.0) {
            let mut rng = Rng::new(seed);
            let t = random(Shape::of(1, 3, 6, 5), &mut rng);
            let p = random(t.shape(), &mut rng);
            let a = si_mse(&t, &p, None).unwrap();
            let b = si_mse(&t, &p.map(|v| k * v), None).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            prop_assert!(a >= 0.0);
        }
    }
}
