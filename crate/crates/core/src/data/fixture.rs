//! Synthetic intrinsic-image samples: piecewise-constant albedo times
//! smooth gray shading, resynthesized so `I = A·S` holds exactly.

use super::synth::resynthesize;
use super::Sample;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Albedo made of `regions` Voronoi cells with random colors in
/// [0.15, 0.9]; shading a sum of two low-frequency waves in [0.2, 0.95].
pub fn synthetic_sample(id: &str, h: usize, w: usize, regions: usize, rng: &mut Rng) -> Sample {
    let s = Shape::of(1, 3, h, w);
    let sites: Vec<(f64, f64, [f64; 3])> = (0..regions.max(1))
        .map(|_| {
            let y = rng.uniform_in(0.0, h as f64);
            let x = rng.uniform_in(0.0, w as f64);
            (y, x, [rng.uniform_in(0.15, 0.9), rng.uniform_in(0.15, 0.9), rng.uniform_in(0.15, 0.9)])
        })
        .collect();
    let region = |y: usize, x: usize| {
        let d = |&(sy, sx, _): &(f64, f64, [f64; 3])| (sy - y as f64).powi(2) + (sx - x as f64).powi(2);
        sites
            .iter()
            .min_by(|a, b| d(a).total_cmp(&d(b)))
            .expect("at least one site")
            .2
    };
    let albedo = Tensor::from_fn(s, |_, c, y, x| region(y, x)[c]);

    let waves: Vec<[f64; 3]> = (0..2)
        .map(|_| {
            let theta = rng.uniform_in(0.0, std::f64::consts::TAU);
            let freq = rng.uniform_in(0.5, 1.5) * std::f64::consts::TAU / h.max(w) as f64;
            [freq * theta.cos(), freq * theta.sin(), rng.uniform_in(0.0, std::f64::consts::TAU)]
        })
        .collect();
    let gray = Tensor::from_fn(s.with_c(1), |_, _, y, x| {
        let v: f64 = waves.iter().map(|[fy, fx, ph]| (fy * y as f64 + fx * x as f64 + ph).sin()).sum();
        0.575 + 0.1875 * v
    });
    let shading = Tensor::from_fn(s, |_, _, y, x| gray.at(0, 0, y, x));
    Sample {
        id: id.to_string(),
        scene: id.to_string(),
        image: resynthesize(&albedo, &shading).expect("matching extents"),
        albedo,
        shading,
        mask: Tensor::full(s.with_c(1), 1.0),
    }
}

/// `count` samples of `size`×`size` drawn from `seed`.
pub fn synthetic_set(count: usize, size: usize, regions: usize, seed: u64) -> Vec<Sample> {
    let root = Rng::new(seed);
    (0..count)
        .map(|k| synthetic_sample(&format!("synth{k:03}"), size, size, regions, &mut root.fork(k as u64)))
        .collect()
}
