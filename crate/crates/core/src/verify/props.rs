//! Property and oracle suites. Each returns whether it passed and a
//! one-line summary of the worst deviation seen.

use super::oracles::{conv_nested, grid_alpha, lmse_enumerate, sse_at, ssim_direct};
use crate::data::{crop_to, fit_alpha, generate_mit_shading, pad_to_multiple, read_png, resynthesize, synthetic_set, write_png16};
use crate::error::{Error, Result};
use crate::inference::decompose;
use crate::layers::{conv_forward, deconv_forward, transpose_io, ConvSpec};
use crate::losses::{gradient_loss, sil2_loss, total_loss, LossConfig};
use crate::metrics::{dssim, lmse, lmse_parts, mit_total_lmse, si_mse, ssim_map, LmseConfig};
use crate::network::{widths, Network, NetworkConfig};
use crate::params::{Param, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};
use crate::trainer::{sgd_momentum_step, Checkpoint, TrainConfig, Trainer};

pub type Outcome = Result<(bool, String)>;

fn uniform(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| rng.uniform())
}

fn normal(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| rng.normal())
}

/// Collects named `(value, tolerance)` pairs; passes when every value is
/// within its tolerance.
struct Bounds(Vec<(String, f64, f64)>);

impl Bounds {
    fn new() -> Self {
        Bounds(Vec::new())
    }

    fn check(&mut self, what: impl Into<String>, value: f64, tol: f64) {
        self.0.push((what.into(), value, tol));
    }

    fn finish(self) -> (bool, String) {
        let failed: Vec<String> = self
            .0
            .iter()
            .filter(|(_, v, t)| !(v < t))
            .map(|(w, v, t)| format!("{w} = {v:.3e} (limit {t:.0e})"))
            .collect();
        if failed.is_empty() {
            let summary: Vec<String> = self.0.iter().map(|(w, v, _)| format!("{w} {v:.1e}")).collect();
            (true, summary.join("; "))
        } else {
            (false, format!("failed: {}", failed.join("; ")))
        }
    }
}

pub fn loss_algebra(seed: u64) -> Outcome {
    let mut rng = Rng::new(seed);
    let mut b = Bounds::new();
    let (mut offset, mut mse, mut compose, mut masked) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let s = Shape::of(1 + rng.below(3) as usize, 3, 4 + rng.below(8) as usize, 4 + rng.below(8) as usize);
        let t = normal(s, &mut rng);
        let p = normal(s, &mut rng);
        let mut m = Tensor::from_fn(s.with_c(1), |_, _, _, _| if rng.bernoulli(0.85) { 1.0 } else { 0.0 });
        for n in 0..s.n {
            m.item_mut(n)[0] = 1.0;
            m.item_mut(n)[1] = 0.0;
        }
        let c = rng.uniform_in(-3.0, 3.0);
        let base = sil2_loss(&t, &p, &m, 1.0)?.0;
        offset = offset.max((sil2_loss(&t, &p.map(|v| v + c), &m, 1.0)?.0 - base).abs());

        let plain = {
            let mut total = 0.0;
            for n in 0..s.n {
                let (mut acc, mut count) = (0.0, 0usize);
                for ch in 0..s.c {
                    for y in 0..s.h {
                        for x in 0..s.w {
                            if m.at(n, 0, y, x) != 0.0 {
                                acc += (t.at(n, ch, y, x) - p.at(n, ch, y, x)).powi(2);
                                count += 1;
                            }
                        }
                    }
                }
                total += acc / count as f64;
            }
            total / s.n as f64
        };
        mse = mse.max((sil2_loss(&t, &p, &m, 0.0)?.0 - plain).abs());

        let (ta, ts, pa, ps) = (t.clone(), normal(s, &mut rng), p.clone(), normal(s, &mut rng));
        for grad in [false, true] {
            let cfg = LossConfig {
                lambda: 0.5,
                use_gradient_loss: grad,
                log_epsilon: 1e-4,
            };
            let total = total_loss(&ta, &ts, &pa, &ps, &m, &cfg)?.value;
            let mut parts = sil2_loss(&ta, &pa, &m, 0.5)?.0 + sil2_loss(&ts, &ps, &m, 0.5)?.0;
            if grad {
                parts += gradient_loss(&ta, &pa, &m)?.0;
            }
            compose = compose.max((total - parts).abs());
        }

        // perturb one masked pixel in prediction and target
        let cfg = LossConfig {
            use_gradient_loss: true,
            ..LossConfig::default()
        };
        let before = total_loss(&ta, &ts, &pa, &ps, &m, &cfg)?;
        let mut pa2 = pa.clone();
        let mut ta2 = ta.clone();
        for ch in 0..s.c {
            *pa2.at_mut(0, ch, 0, 1) += 7.0;
            *ta2.at_mut(0, ch, 0, 1) -= 3.0;
        }
        let after = total_loss(&ta2, &ts, &pa2, &ps, &m, &cfg)?;
        masked = masked
            .max((after.value - before.value).abs())
            .max(after.d_log_albedo.max_abs_diff(&before.d_log_albedo)?)
            .max(after.d_log_shading.max_abs_diff(&before.d_log_shading)?);
    }
    b.check("lambda=1 offset invariance", offset, 1e-10);
    b.check("lambda=0 vs log-MSE", mse, 1e-12);
    b.check("composition identity", compose, 1e-12);
    b.check("masked-pixel perturbation", masked, 1e-12);
    Ok(b.finish())
}

pub fn oracles(seed: u64) -> Outcome {
    let mut rng = Rng::new(seed);
    let mut b = Bounds::new();

    let mut conv = 0.0f64;
    let mut adjoint = 0.0f64;
    for i in 0..6 {
        let (k, stride) = ([1, 3, 5, 11, 2, 8][i], [1, 2, 1, 4, 2, 4][i]);
        let spec = ConvSpec::square(1 + rng.below(3) as usize, 1 + rng.below(4) as usize, k, stride, k / 2);
        let x = uniform(Shape::of(2, spec.in_channels, k + 5, k + 7), &mut rng);
        let w = normal(spec.weight_shape(), &mut rng);
        let bias = normal(spec.bias_shape(), &mut rng);
        let y = conv_forward(&x, &w, Some(&bias), &spec)?;
        conv = conv.max(y.max_abs_diff(&conv_nested(&x, &w, &bias, &spec))?);

        let y0 = conv_forward(&x, &w, None, &spec)?;
        let r = normal(y0.shape(), &mut rng);
        let ds = ConvSpec::square(spec.out_channels, spec.in_channels, k, stride, k / 2);
        let back = deconv_forward(&r, &transpose_io(&w), None, &ds)?;
        if back.shape() != x.shape() {
            // output padding would be needed to restore the exact extent
            continue;
        }
        adjoint = adjoint.max((y0.dot(&r)? - x.dot(&back)?).abs());
    }
    b.check("conv vs nested loop", conv, 1e-10);
    b.check("deconv adjoint identity", adjoint, 1e-10);

    let (mut alpha_gap, mut simse_gap) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 20 + rng.below(40) as usize;
        let p: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let true_a = rng.uniform_in(0.1, 9.0);
        let t: Vec<f64> = p.iter().map(|v| true_a * v + 0.1 * rng.normal()).collect();
        let s = Shape::of(1, 1, 1, n);
        let (tt, pt) = (Tensor::from_vec(s, t.clone())?, Tensor::from_vec(s, p.clone())?);
        let a = fit_alpha(&tt, &pt)?;
        let (ga, gl) = grid_alpha(&t, &p);
        if ga > 0.0 && ga < 10.0 {
            alpha_gap = alpha_gap.max((a - ga).abs());
        }
        alpha_gap = alpha_gap.max((sse_at(&t, &p, a) - gl).max(0.0));
        simse_gap = simse_gap.max((si_mse(&tt, &pt, None)? - gl / n as f64).max(0.0));
    }
    b.check("fit_alpha vs grid", alpha_gap, 1e-3);
    b.check("si_mse vs grid", simse_gap, 1e-3);

    let mut lm = 0.0f64;
    for &(h, w) in &[(30, 30), (40, 40), (45, 63), (80, 52), (71, 80)] {
        let t = uniform(Shape::of(1, 3, h, w), &mut rng);
        let p = uniform(t.shape(), &mut rng);
        let m = Tensor::from_fn(Shape::of(1, 1, h, w), |_, _, _, _| if rng.bernoulli(0.9) { 1.0 } else { 0.0 });
        let fast = lmse(&t, &p, Some(&m), &LmseConfig::default())?;
        let slow = lmse_enumerate(&t, &p, Some(&m), 0.1).ok_or_else(|| Error::invalid("no window"))?;
        lm = lm.max((fast - slow).abs());
    }
    b.check("lmse vs window enumeration", lm, 1e-10);

    let mut ss = 0.0f64;
    for &(h, w) in &[(11, 11), (16, 13), (20, 24)] {
        let x = uniform(Shape::of(1, 3, h, w), &mut rng);
        let y = uniform(x.shape(), &mut rng);
        let fast = 1.0 - 2.0 * dssim(&x, &y, false)?;
        ss = ss.max((fast - ssim_direct(&x, &y)).abs());
    }
    b.check("dssim vs direct SSIM", ss, 1e-8);
    Ok(b.finish())
}

pub fn data_synthesis(seed: u64) -> Outcome {
    let mut b = Bounds::new();
    let set = synthetic_set(3, 20, 4, seed);
    let mut mem = 0.0f64;
    let mut disk = 0.0f64;
    let dir = std::env::temp_dir().join(format!("dint-verify-{}-{seed}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let result = (|| -> Result<()> {
        for s in &set {
            let i = resynthesize(&s.albedo, &s.shading)?;
            let prod = s.albedo.zip_map(&s.shading, |a, b| a * b)?;
            mem = mem.max(i.max_abs_diff(&prod)?);
            let paths = ["i", "a", "s"].map(|k| dir.join(format!("{}_{k}.png", s.id)));
            write_png16(&paths[0], &i)?;
            write_png16(&paths[1], &s.albedo)?;
            write_png16(&paths[2], &s.shading)?;
            let (ri, ra, rs) = (read_png(&paths[0])?, read_png(&paths[1])?, read_png(&paths[2])?);
            disk = disk.max(ri.max_abs_diff(&ra.zip_map(&rs, |a, b| a * b)?)?);
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result?;
    b.check("resynthesis in memory", mem, 1e-6);
    b.check("resynthesis after 16-bit PNG", disk, 2.0 / 65535.0);

    let (mut s_err, mut a_err) = (0.0f64, 0.0f64);
    for s in &set {
        let g = generate_mit_shading(&s.image, &s.albedo, 1e-4)?;
        s_err = s_err.max(g.shading.max_abs_diff(&s.shading)?);
        a_err = a_err.max((g.alpha - 1.0).abs());
    }
    b.check("generated shading error", s_err, 1e-8);
    b.check("generated alpha - 1", a_err, 1e-8);
    Ok(b.finish())
}

pub fn shape_contract(seed: u64) -> Outcome {
    let extents = [32usize, 64, 96, 128, 160];
    let mut bad = Vec::new();
    let mut runs = 0;
    for hc in [false, true] {
        for deconv in [false, true] {
            let cfg = NetworkConfig {
                channel_scale: 1.0 / 16.0,
                use_hypercolumn: hc,
                use_deconv_head: deconv,
                ..NetworkConfig::default()
            };
            let net = Network::<f32>::build(&cfg, &mut Rng::new(seed))?;
            for &h in &extents {
                for &w in &extents {
                    let (a, s) = net.predict(&Tensor::full(Shape::of(1, 3, h, w), 0.5))?;
                    runs += 1;
                    for (name, t) in [("albedo", &a), ("shading", &s)] {
                        if t.shape() != Shape::of(1, 3, h, w) {
                            bad.push(format!("hc={hc} deconv={deconv} {name} {h}x{w} -> {}", t.shape()));
                        }
                    }
                }
            }
            let img = Tensor::full(Shape::of(1, 3, 70, 65), 0.5);
            let (a, s) = decompose(&net, &img)?;
            if a.shape() != img.shape() || s.shape() != img.shape() {
                bad.push(format!("hc={hc} deconv={deconv} 70x65 round trip"));
            }
        }
    }
    let (padded, (h, w)) = pad_to_multiple(&Tensor::<f64>::full(Shape::of(1, 3, 70, 65), 0.25), 32);
    if padded.shape() != Shape::of(1, 3, 96, 96) || crop_to(&padded, h, w).shape() != Shape::of(1, 3, 70, 65) {
        bad.push("pad/crop 70x65".into());
    }
    Ok(if bad.is_empty() {
        (true, format!("{runs} forward passes, all outputs match input extents"))
    } else {
        (false, format!("failed: {}", bad.join("; ")))
    })
}

pub fn metric_invariants(seed: u64) -> Outcome {
    let mut rng = Rng::new(seed);
    let mut b = Bounds::new();
    let (mut scale, mut sym, mut neg, mut range) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = uniform(Shape::of(1, 3, 12, 14), &mut rng);
        let y = uniform(x.shape(), &mut rng);
        let k = rng.uniform_in(0.05, 20.0);
        let base = si_mse(&x, &y, None)?;
        scale = scale.max((si_mse(&x, &y.map(|v| k * v), None)? - base).abs() / base.max(1e-12));
        scale = scale.max(si_mse(&x, &x.map(|v| k * v), None)?);
        neg = neg.max((-base).max(0.0));
        let d = dssim(&x, &y, true)?;
        range = range.max((-d).max(d - 1.0).max(0.0));
        sym = sym.max((dssim(&x, &y, false)? - dssim(&y, &x, false)?).abs());
    }
    b.check("si_mse scale invariance", scale, 1e-10);
    b.check("negative metric values", neg, 1e-300);
    b.check("dssim outside [0,1]", range, 1e-300);
    b.check("unaligned dssim asymmetry", sym, 1e-12);

    let x = uniform(Shape::of(1, 3, 20, 20), &mut rng);
    b.check("dssim(x, x)", dssim(&x, &x, true)?, 1e-300);
    b.check("ssim_map(x, x) - 1", ssim_map(&x, &x)?.data().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max), 1e-12);
    let cfg = LmseConfig::default();
    let s = uniform(x.shape(), &mut rng);
    let zero = Tensor::zeros(x.shape());
    let total_zero = mit_total_lmse(&lmse_parts(&x, &zero, None, &cfg)?, &lmse_parts(&s, &zero, None, &cfg)?)?;
    b.check("mit total of zero predictor - 1", (total_zero - 1.0).abs(), 1e-12);
    let noisy = |amp: f64, rng: &mut Rng| Tensor::from_fn(x.shape(), |n, c, y, xx| x.at(n, c, y, xx) + amp * (rng.uniform() - 0.5));
    let sp = lmse_parts(&s, &s, None, &cfg)?;
    let t1 = mit_total_lmse(&lmse_parts(&x, &noisy(0.1, &mut Rng::new(1)), None, &cfg)?, &sp)?;
    let t2 = mit_total_lmse(&lmse_parts(&x, &noisy(0.3, &mut Rng::new(1)), None, &cfg)?, &sp)?;
    b.check("mit total monotone violation", if t2 > t1 { 0.0 } else { 1.0 }, 0.5);
    Ok(b.finish())
}

pub fn trainer_invariants(seed: u64) -> Outcome {
    let mut rng = Rng::new(seed);
    let mut b = Bounds::new();

    let mut store = ParamStore::<f64>::new();
    for (name, len) in [("a.weight", 7usize), ("b.bias", 3)] {
        let mut p = Param::new(name, vec![len], normal(Shape::of(1, len, 1, 1), &mut rng));
        p.grad = normal(p.shape(), &mut rng);
        store.insert(p)?;
    }
    let cfg = TrainConfig {
        base_lr: 0.037,
        momentum: 0.0,
        ..TrainConfig::default()
    };
    let expect: Vec<Vec<f64>> = store
        .iter()
        .map(|p| p.value.data().iter().zip(p.grad.data()).map(|(v, g)| v - 0.037 * g).collect())
        .collect();
    sgd_momentum_step(&mut store, &cfg, 0)?;
    let gd = store
        .iter()
        .zip(&expect)
        .flat_map(|(p, e)| p.value.data().iter().zip(e).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    b.check("momentum-0 step vs gradient descent", gd, 1e-12);

    let mut frozen_cfg = TrainConfig {
        momentum: 0.9,
        ..cfg
    };
    frozen_cfg.lr_multipliers.insert("a".into(), 0.0);
    for p in store.iter_mut() {
        p.momentum = Tensor::zeros(p.shape());
    }
    let before = store.value("a.weight")?.clone();
    for i in 0..5 {
        for p in store.iter_mut() {
            p.grad = normal(p.shape(), &mut rng);
        }
        sgd_momentum_step(&mut store, &frozen_cfg, i)?;
    }
    b.check("frozen tensor drift", store.value("a.weight")?.max_abs_diff(&before)?, 1e-300);

    let net = NetworkConfig {
        channel_scale: 1.0 / 16.0,
        ..NetworkConfig::default()
    };
    let mut train = TrainConfig {
        base_lr: 1e-3,
        batch_size: 2,
        max_iterations: 4,
        seed,
        ..TrainConfig::default()
    };
    train.augment.crop_h = 32;
    train.augment.crop_w = 32;
    let data = synthetic_set(3, 40, 4, seed);
    let run = |cfg: &TrainConfig| -> Result<(Vec<(u64, f64)>, Checkpoint)> {
        let mut t = Trainer::new(&net, cfg)?;
        let trace = t.run(&data, |_| Ok(()))?;
        Ok((trace, t.checkpoint()))
    };
    let (t1, c1) = run(&train)?;
    let (t2, c2) = run(&train)?;
    let same = t1 == t2 && c1.to_bytes() == c2.to_bytes();
    b.check("repeat-run difference", if same { 0.0 } else { 1.0 }, 0.5);
    let half = TrainConfig {
        max_iterations: 2,
        ..train.clone()
    };
    let (_, mid) = run(&half)?;
    let mut resumed = Trainer::resume(&net, &train, &Checkpoint::from_bytes(&mid.to_bytes())?)?;
    let tail = resumed.run(&data, |_| Ok(()))?;
    let exact = tail == t1[2..] && resumed.checkpoint().to_bytes() == c1.to_bytes();
    b.check("resume difference", if exact { 0.0 } else { 1.0 }, 0.5);
    b.check(
        "non-finite trace entries",
        t1.iter().filter(|(_, l)| !l.is_finite()).count() as f64,
        0.5,
    );
    Ok(b.finish())
}

/// Registry audit at full width against the published layer constants.
pub fn topology(seed: u64) -> Outcome {
    let cfg = NetworkConfig {
        channel_scale: 1.0,
        use_deconv_head: true,
        ..NetworkConfig::default()
    };
    let net = Network::<f32>::build(&cfg, &mut Rng::new(seed))?;
    let p = net.params();
    let mut bad = Vec::new();
    let mut expect = |name: &str, dims: [usize; 4]| match p.get(name) {
        Ok(t) if t.dims == dims => {}
        Ok(t) => bad.push(format!("{name} is {:?}, expected {dims:?}", t.dims)),
        Err(_) => bad.push(format!("{name} missing")),
    };
    expect("s1.conv1.weight", [widths::CONV1, 3, 11, 11]);
    expect("s1.conv2.weight", [widths::CONV2, widths::CONV1, 5, 5]);
    expect("s1.conv3.weight", [widths::CONV3, widths::CONV2, 3, 3]);
    expect("s1.conv4.weight", [widths::CONV4, widths::CONV3, 3, 3]);
    expect("s1.conv5.weight", [widths::CONV5, widths::CONV4, 3, 3]);
    expect("s1.conv6.weight", [widths::CONV6, widths::CONV5, 1, 1]);
    expect("s2.conv1.weight", [96, 3, 9, 9]);
    expect("s2.conv2.weight", [64, 96 + 64, 5, 5]);
    expect("s2.conv3.weight", [64, 64, 5, 5]);
    expect("s2.conv4.weight", [64, 64, 5, 5]);
    for h in ["albedo", "shading"] {
        expect(&format!("{h}.conv.weight"), [64, 64, 5, 5]);
        expect(&format!("{h}.deconv.weight"), [3, 64, 8, 8]);
    }
    let widths_ok = [96, 256, 384, 384, 256, 64] == [widths::CONV1, widths::CONV2, widths::CONV3, widths::CONV4, widths::CONV5, widths::CONV6];
    if !widths_ok {
        bad.push("width constants differ from 96/256/384/384/256/64".into());
    }
    let strides: Vec<(String, usize)> = net
        .layer_specs()
        .into_iter()
        .filter(|(n, _, _)| n == "s1.conv1" || n == "s2.conv1" || n.ends_with(".deconv"))
        .map(|(n, s, _)| (n, s.stride_h))
        .collect();
    for (n, s) in &strides {
        let want = match n.as_str() {
            "s1.conv1" | "albedo.deconv" | "shading.deconv" => 4,
            _ => 2,
        };
        if *s != want {
            bad.push(format!("{n} stride {s}, expected {want}"));
        }
    }
    Ok(if bad.is_empty() {
        (true, format!("{} tensors, {} scalars match", p.len(), p.scalar_count()))
    } else {
        (false, format!("failed: {}", bad.join("; ")))
    })
}
