//! Finite-difference checks of every layer and loss over random shapes.
//!
//! Each check contracts the layer output with a fixed random tensor `r`,
//! so the scalar objective is `Σ r ⊙ layer(x)` and its analytic gradient
//! is the layer backward applied to `r`.

use crate::error::Result;
use crate::gradcheck::check_gradient;
use crate::layers::*;
use crate::losses::{gradient_loss, sil2_loss};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const STEP: f64 = 1e-3;
pub const SHAPES_PER_LAYER: usize = 5;

pub const LAYER_NAMES: [&str; 9] = [
    "conv", "deconv", "max_pool", "upsample", "prelu", "dropout", "concat", "sil2_loss", "gradient_loss",
];

/// Worst relative error of one layer over all its shapes and inputs.
#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub shapes: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

fn normal(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| rng.normal())
}

/// Values at least 0.05 away from zero, so ±h never crosses a PReLU kink.
fn off_zero(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(s, |_, _, _, _| {
        let m = 0.05 + rng.uniform();
        if rng.bernoulli(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced ≥ 0.01 apart, so ±h never changes a pool winner.
fn well_separated(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    rng.shuffle(&mut order);
    let v: Vec<f64> = order.iter().map(|&k| k as f64 * 0.01 + rng.uniform_in(0.0, 0.002)).collect();
    Tensor::from_vec(s, v).expect("length matches")
}

fn contract(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.dot(y).expect("same shape")
}

struct Acc {
    layer: &'static str,
    shapes: usize,
    worst: f64,
    at: String,
}

impl Acc {
    fn new(layer: &'static str) -> Self {
        Acc {
            layer,
            shapes: 0,
            worst: 0.0,
            at: String::new(),
        }
    }

    fn add(&mut self, what: String, f: impl FnMut(&Tensor<f64>) -> (f64, Tensor<f64>), x: &Tensor<f64>) -> Result<()> {
        let r = check_gradient(f, x, STEP)?;
        if r.max_rel_error > self.worst || self.at.is_empty() {
            self.worst = self.worst.max(r.max_rel_error);
            self.at = format!("{what}[{}]", r.worst_index);
        }
        Ok(())
    }

    fn done(self) -> LayerCheck {
        LayerCheck {
            layer: self.layer,
            shapes: self.shapes,
            max_rel_error: self.worst,
            worst: self.at,
        }
    }
}

fn scaled(mut t: Tensor<f64>, k: f64) -> Tensor<f64> {
    t.scale(k);
    t
}

fn random_conv_spec(rng: &mut Rng, deconv: bool) -> (usize, ConvSpec, usize, usize) {
    loop {
        let k = 1 + rng.below(5) as usize;
        let stride = 1 + rng.below(3) as usize;
        let pad = rng.below(k as u64) as usize;
        let spec = ConvSpec::square(1 + rng.below(3) as usize, 1 + rng.below(3) as usize, k, stride, pad);
        let (h, w) = (3 + rng.below(6) as usize, 3 + rng.below(6) as usize);
        let ok = if deconv {
            spec.deconv_extent(h, w).is_ok()
        } else {
            spec.conv_extent(h, w).is_ok()
        };
        if ok {
            return (1 + rng.below(2) as usize, spec, h, w);
        }
    }
}

fn conv_like(seed: u64, k: f64, deconv: bool) -> Result<LayerCheck> {
    let mut acc = Acc::new(if deconv { "deconv" } else { "conv" });
    let mut rng = Rng::new(seed);
    let fwd = if deconv { deconv_forward::<f64> } else { conv_forward::<f64> };
    let bwd = if deconv { deconv_backward::<f64> } else { conv_backward::<f64> };
    for i in 0..SHAPES_PER_LAYER {
        let (n, spec, h, w) = random_conv_spec(&mut rng, deconv);
        let x = normal(Shape::of(n, spec.in_channels, h, w), &mut rng);
        let wt = normal(spec.weight_shape(), &mut rng);
        let b = normal(spec.bias_shape(), &mut rng);
        let y = fwd(&x, &wt, Some(&b), &spec)?;
        let r = normal(y.shape(), &mut rng);
        let mut dw = Tensor::zeros(spec.weight_shape());
        let mut db = Tensor::zeros(spec.bias_shape());
        let dx = bwd(&r, &x, &wt, &spec, &mut dw, Some(&mut db))?;
        let tag = format!("shape {i} {spec:?} on {}", x.shape());
        acc.add(
            format!("{tag} dx"),
            |v| (contract(&r, &fwd(v, &wt, Some(&b), &spec).unwrap()), scaled(dx.clone(), k)),
            &x,
        )?;
        acc.add(
            format!("{tag} dweight"),
            |v| (contract(&r, &fwd(&x, v, Some(&b), &spec).unwrap()), scaled(dw.clone(), k)),
            &wt,
        )?;
        acc.add(
            format!("{tag} dbias"),
            |v| (contract(&r, &fwd(&x, &wt, Some(v), &spec).unwrap()), scaled(db.clone(), k)),
            &b,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn max_pool(seed: u64, k: f64) -> Result<LayerCheck> {
    let mut acc = Acc::new("max_pool");
    let mut rng = Rng::new(seed);
    let specs = [PoolSpec::new(3, 2, 1), PoolSpec::new(2, 2, 0), PoolSpec::new(3, 1, 1), PoolSpec::new(3, 2, 0)];
    for i in 0..SHAPES_PER_LAYER {
        let spec = specs[i % specs.len()];
        let s = Shape::of(1 + rng.below(2) as usize, 1 + rng.below(3) as usize, 4 + rng.below(6) as usize, 4 + rng.below(6) as usize);
        let x = well_separated(s, &mut rng);
        let (y, idx) = max_pool_forward(&x, &spec)?;
        let r = normal(y.shape(), &mut rng);
        let dx = max_pool_backward(&r, &idx, s)?;
        acc.add(
            format!("shape {i} {spec:?} on {s}"),
            |v| (contract(&r, &max_pool_forward(v, &spec).unwrap().0), scaled(dx.clone(), k)),
            &x,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn upsample(seed: u64, k: f64) -> Result<LayerCheck> {
    let mut acc = Acc::new("upsample");
    let mut rng = Rng::new(seed);
    let factors = [2, 4, 8, 3, 1];
    for (i, &f) in factors.iter().enumerate().take(SHAPES_PER_LAYER) {
        let s = Shape::of(1 + rng.below(2) as usize, 1 + rng.below(3) as usize, 2 + rng.below(4) as usize, 2 + rng.below(4) as usize);
        let x = normal(s, &mut rng);
        let y = bilinear_upsample_forward(&x, f)?;
        let r = normal(y.shape(), &mut rng);
        let dx = bilinear_upsample_backward(&r, f, s)?;
        acc.add(
            format!("shape {i} factor {f} on {s}"),
            |v| (contract(&r, &bilinear_upsample_forward(v, f).unwrap()), scaled(dx.clone(), k)),
            &x,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn prelu(seed: u64, k: f64) -> Result<LayerCheck> {
    let mut acc = Acc::new("prelu");
    let mut rng = Rng::new(seed);
    for i in 0..SHAPES_PER_LAYER {
        let s = Shape::of(1 + rng.below(2) as usize, 1 + rng.below(4) as usize, 2 + rng.below(5) as usize, 2 + rng.below(5) as usize);
        let x = off_zero(s, &mut rng);
        let slopes = Tensor::from_fn(Shape::of(1, s.c, 1, 1), |_, _, _, _| rng.uniform_in(-0.5, 0.8));
        let r = normal(s, &mut rng);
        let mut ds = Tensor::zeros(slopes.shape());
        let dx = prelu_backward(&r, &x, &slopes, &mut ds)?;
        acc.add(
            format!("shape {i} {s} dx"),
            |v| (contract(&r, &prelu_forward(v, &slopes).unwrap()), scaled(dx.clone(), k)),
            &x,
        )?;
        acc.add(
            format!("shape {i} {s} dslopes"),
            |v| (contract(&r, &prelu_forward(&x, v).unwrap()), scaled(ds.clone(), k)),
            &slopes,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn dropout(seed: u64, k: f64) -> Result<LayerCheck> {
    let mut acc = Acc::new("dropout");
    let mut rng = Rng::new(seed);
    for i in 0..SHAPES_PER_LAYER {
        let s = Shape::of(1 + rng.below(2) as usize, 1 + rng.below(3) as usize, 2 + rng.below(6) as usize, 2 + rng.below(6) as usize);
        let x = normal(s, &mut rng);
        let p = [0.5, 0.2, 0.7, 0.5, 0.9][i];
        let (_, mask) = Dropout::new(p, true)?.forward(&x, &mut rng);
        let r = normal(s, &mut rng);
        let dx = dropout_backward(&r, mask.as_ref())?;
        acc.add(
            format!("shape {i} p={p} on {s}"),
            |v| (contract(&r, &apply_mask(v, mask.as_ref()).unwrap()), scaled(dx.clone(), k)),
            &x,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn concat(seed: u64, k: f64) -> Result<LayerCheck> {
    let mut acc = Acc::new("concat");
    let mut rng = Rng::new(seed);
    for i in 0..SHAPES_PER_LAYER {
        let (n, h, w) = (1 + rng.below(2) as usize, 2 + rng.below(5) as usize, 2 + rng.below(5) as usize);
        let (c1, c2) = (1 + rng.below(3) as usize, 1 + rng.below(3) as usize);
        let a = normal(Shape::of(n, c1, h, w), &mut rng);
        let b = normal(Shape::of(n, c2, h, w), &mut rng);
        let r = normal(Shape::of(n, c1 + c2, h, w), &mut rng);
        let parts = split_channels(&r, &[c1, c2])?;
        acc.add(
            format!("shape {i} first part {}", a.shape()),
            |v| (contract(&r, &concat_channels(&[v, &b]).unwrap()), scaled(parts[0].clone(), k)),
            &a,
        )?;
        acc.add(
            format!("shape {i} second part {}", b.shape()),
            |v| (contract(&r, &concat_channels(&[&a, v]).unwrap()), scaled(parts[1].clone(), k)),
            &b,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

fn random_mask(s: Shape, rng: &mut Rng) -> Tensor<f64> {
    let mut m = Tensor::from_fn(s.with_c(1), |_, _, _, _| if rng.bernoulli(0.8) { 1.0 } else { 0.0 });
    // keep at least one valid pixel per item
    for n in 0..s.n {
        m.item_mut(n)[0] = 1.0;
    }
    m
}

fn losses(seed: u64, k: f64, gradient: bool) -> Result<LayerCheck> {
    let mut acc = Acc::new(if gradient { "gradient_loss" } else { "sil2_loss" });
    let mut rng = Rng::new(seed);
    for i in 0..SHAPES_PER_LAYER {
        let s = Shape::of(1 + rng.below(3) as usize, 1 + rng.below(3) as usize, 2 + rng.below(6) as usize, 2 + rng.below(6) as usize);
        let t = normal(s, &mut rng);
        let p = normal(s, &mut rng);
        let m = random_mask(s, &mut rng);
        let lambda = [0.0, 0.5, 1.0, 0.25, 0.75][i];
        let eval = |v: &Tensor<f64>| {
            if gradient {
                gradient_loss(&t, v, &m).unwrap()
            } else {
                sil2_loss(&t, v, &m, lambda).unwrap()
            }
        };
        acc.add(
            format!("shape {i} {s} lambda {lambda}"),
            |v| {
                let (l, g) = eval(v);
                (l, scaled(g, k))
            },
            &p,
        )?;
        acc.shapes += 1;
    }
    Ok(acc.done())
}

/// Runs every layer and loss check. `corrupt` scales the analytic
/// gradient of the named layer to prove the check can fail.
pub fn check_layers(seed: u64, corrupt: Option<(&str, f64)>) -> Result<Vec<LayerCheck>> {
    let k = |name: &str| match corrupt {
        Some((c, f)) if c == name => f,
        _ => 1.0,
    };
    Ok(vec![
        conv_like(seed, k("conv"), false)?,
        conv_like(seed + 1, k("deconv"), true)?,
        max_pool(seed + 2, k("max_pool"))?,
        upsample(seed + 3, k("upsample"))?,
        prelu(seed + 4, k("prelu"))?,
        dropout(seed + 5, k("dropout"))?,
        concat(seed + 6, k("concat"))?,
        losses(seed + 7, k("sil2_loss"), false)?,
        losses(seed + 8, k("gradient_loss"), true)?,
    ])
}
