//! The two-scale convolutional regression network.
//!
//! Scale 1 is an AlexNet-style stack (conv1–conv5 with three max-pools)
//! that reaches 1/32 of the input resolution, is bilinearly upsampled to
//! 1/4, and mixed by a 1×1 conv6. Scale 2 starts from the image with a
//! 9×9 stride-2 conv and a 2×2 pool, concatenates the scale-1 features at
//! 1/4 resolution, and runs three 5×5 convs feeding an albedo head and a
//! shading head. Each head either predicts 3 channels and upsamples them
//! bilinearly ×4, or predicts 64 hidden channels and learns the ×4
//! upsampling with an 8×8 stride-4 transposed convolution.
//!
//! With `use_hypercolumn`, the pooled outputs of conv1, conv2 and conv5
//! are all resized to 1/4 resolution and concatenated before conv6.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    bilinear_upsample_backward, bilinear_upsample_forward, concat_channels, conv_backward, conv_forward,
    deconv_backward, deconv_forward, dropout_backward, max_pool_backward, max_pool_forward, prelu_backward,
    prelu_forward, split_channels, ConvSpec, Dropout, PoolSpec,
};
use crate::params::{Param, ParamStore};
use crate::real::Real;
use crate::rng::{stable_hash, Rng};
use crate::tensor::{Shape, Tensor};

/// Unscaled layer widths of the full-size topology.
pub mod widths {
    pub const CONV1: usize = 96;
    pub const CONV2: usize = 256;
    pub const CONV3: usize = 384;
    pub const CONV4: usize = 384;
    pub const CONV5: usize = 256;
    pub const CONV6: usize = 64;
    pub const SCALE2_FIRST: usize = 96;
    pub const SCALE2_FEATURES: usize = 64;
    pub const HEAD_HIDDEN: usize = 64;
    pub const OUTPUT: usize = 3;
}

const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Multiplier applied to every width constant (rounded up).
    pub channel_scale: f64,
    pub use_hypercolumn: bool,
    pub use_deconv_head: bool,
    pub dropout_prob: f64,
    pub input_multiple: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channel_scale: 1.0,
            use_hypercolumn: false,
            use_deconv_head: true,
            dropout_prob: 0.5,
            input_multiple: 32,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.channel_scale > 0.0) || !self.channel_scale.is_finite() {
            return Err(Error::invalid(format!("channel_scale {} must be > 0", self.channel_scale)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::invalid(format!("dropout_prob {} outside [0, 1)", self.dropout_prob)));
        }
        if self.input_multiple == 0 || !self.input_multiple.is_multiple_of(32) {
            return Err(Error::invalid(format!(
                "input_multiple {} must be a positive multiple of 32",
                self.input_multiple
            )));
        }
        Widths::scaled(self.channel_scale).map(|_| ())
    }
}

/// Concrete channel counts of one network instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub conv1: usize,
    pub conv2: usize,
    pub conv3: usize,
    pub conv4: usize,
    pub conv5: usize,
    pub conv6: usize,
    pub scale2_first: usize,
    pub scale2_features: usize,
    pub head_hidden: usize,
}

impl Widths {
    pub fn scaled(scale: f64) -> Result<Self> {
        let w = |base: usize, name: &str| {
            let v = (base as f64 * scale - 1e-9).ceil();
            if v < 1.0 {
                Err(Error::invalid(format!(
                    "channel_scale {scale} leaves {name} with zero channels"
                )))
            } else {
                Ok(v as usize)
            }
        };
        Ok(Widths {
            conv1: w(widths::CONV1, "conv1")?,
            conv2: w(widths::CONV2, "conv2")?,
            conv3: w(widths::CONV3, "conv3")?,
            conv4: w(widths::CONV4, "conv4")?,
            conv5: w(widths::CONV5, "conv5")?,
            conv6: w(widths::CONV6, "conv6")?,
            scale2_first: w(widths::SCALE2_FIRST, "scale-2 conv1")?,
            scale2_features: w(widths::SCALE2_FEATURES, "scale-2 features")?,
            head_hidden: w(widths::HEAD_HIDDEN, "head")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Conv,
    Deconv,
}

/// A convolution (or transposed convolution) optionally followed by PReLU
/// and dropout.
#[derive(Clone, Debug)]
struct Block {
    name: String,
    kind: Kind,
    spec: ConvSpec,
    prelu: bool,
    dropout: bool,
}

impl Block {
    fn conv(name: &str, spec: ConvSpec, prelu: bool, dropout: bool) -> Self {
        Block {
            name: name.to_string(),
            kind: Kind::Conv,
            spec,
            prelu,
            dropout,
        }
    }

    fn weight(&self) -> String {
        format!("{}.weight", self.name)
    }
    fn bias(&self) -> String {
        format!("{}.bias", self.name)
    }
    fn slopes(&self) -> String {
        format!("{}.prelu", self.name)
    }

    fn fan_in(&self) -> f64 {
        let s = &self.spec;
        let taps = (s.in_channels * s.kernel_h * s.kernel_w) as f64;
        match self.kind {
            Kind::Conv => taps,
            // each output pixel of a transposed conv sees kernel/stride taps per axis
            Kind::Deconv => taps / (s.stride_h * s.stride_w) as f64,
        }
    }
}

#[derive(Clone, Debug)]
struct BlockCache<F: Real> {
    input: Tensor<F>,
    pre_activation: Option<Tensor<F>>,
    mask: Option<Tensor<F>>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    indices: Vec<usize>,
    input_shape: Shape,
}

#[derive(Clone, Debug)]
struct HeadCache<F: Real> {
    conv: BlockCache<F>,
    deconv: Option<BlockCache<F>>,
    upsample_input: Option<Shape>,
}

#[derive(Clone, Debug)]
struct Cache<F: Real> {
    input_shape: Shape,
    s1: Vec<BlockCache<F>>,
    pools: [PoolCache; 3],
    pooled_shapes: [Shape; 3],
    conv6_parts: Vec<usize>,
    conv6: BlockCache<F>,
    s2_first: BlockCache<F>,
    s2_pool: PoolCache,
    concat_parts: [usize; 2],
    s2: Vec<BlockCache<F>>,
    heads: [HeadCache<F>; 2],
}

/// Which of the two outputs a head produces.
pub const HEADS: [&str; 2] = ["albedo", "shading"];

/// Built network: topology, parameters, and the activation cache of the
/// last training-mode forward pass.
#[derive(Clone, Debug)]
pub struct Network<F: Real> {
    cfg: NetworkConfig,
    widths: Widths,
    scale1: Vec<Block>,
    conv6: Block,
    scale2_first: Block,
    scale2: Vec<Block>,
    heads: [Vec<Block>; 2],
    params: ParamStore<F>,
    cache: Option<Cache<F>>,
}

const POOL_S1: PoolSpec = PoolSpec {
    kernel: 3,
    stride: 2,
    pad: 1,
};
const POOL_S2: PoolSpec = PoolSpec {
    kernel: 2,
    stride: 2,
    pad: 0,
};

impl<F: Real> Network<F> {
    /// Builds the topology for `cfg` and initializes every parameter from
    /// `rng`: He-normal weights, zero biases, PReLU slopes 0.25.
    pub fn build(cfg: &NetworkConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let widths = Widths::scaled(cfg.channel_scale)?;
        let mut net = Self::topology(cfg.clone(), widths);
        for b in net.blocks().cloned().collect::<Vec<_>>() {
            let std = (2.0 / b.fan_in()).sqrt();
            let ws = b.spec.weight_shape();
            let w = Tensor::from_fn(ws, |_, _, _, _| F::from_f64(rng.normal() * std));
            net.params.insert(Param::new(b.weight(), ws.dims().to_vec(), w))?;
            let oc = b.spec.out_channels;
            net.params
                .insert(Param::new(b.bias(), vec![oc], Tensor::zeros(b.spec.bias_shape())))?;
            if b.prelu {
                let s = Tensor::full(Shape::of(1, oc, 1, 1), F::from_f64(PRELU_INIT));
                net.params.insert(Param::new(b.slopes(), vec![oc], s))?;
            }
        }
        Ok(net)
    }

    /// Rebuilds a network around existing parameters, inferring the widths
    /// and head variant from their shapes. `cfg` supplies dropout and the
    /// input multiple; its width-related fields are overwritten.
    pub fn from_params(cfg: &NetworkConfig, params: ParamStore<F>) -> Result<Self> {
        let out = |name: &str| -> Result<usize> { Ok(params.get(name)?.shape().n) };
        let deconv = params.contains("albedo.deconv.weight");
        let widths = Widths {
            conv1: out("s1.conv1.weight")?,
            conv2: out("s1.conv2.weight")?,
            conv3: out("s1.conv3.weight")?,
            conv4: out("s1.conv4.weight")?,
            conv5: out("s1.conv5.weight")?,
            conv6: out("s1.conv6.weight")?,
            scale2_first: out("s2.conv1.weight")?,
            scale2_features: out("s2.conv2.weight")?,
            head_hidden: if deconv {
                out("albedo.conv.weight")?
            } else {
                let scale = out("s1.conv1.weight")? as f64 / widths::CONV1 as f64;
                Widths::scaled(scale)?.head_hidden
            },
        };
        let conv6_in = params.get("s1.conv6.weight")?.shape().c;
        let mut cfg = cfg.clone();
        cfg.use_deconv_head = deconv;
        cfg.use_hypercolumn = conv6_in != widths.conv5;
        cfg.channel_scale = widths.conv1 as f64 / widths::CONV1 as f64;
        let mut net = Self::topology(cfg, widths);
        net.check_params_match(&params)?;
        net.params = params;
        Ok(net)
    }

    fn check_params_match(&self, params: &ParamStore<F>) -> Result<()> {
        let mut expected = 0;
        for b in self.blocks() {
            let mut want = vec![(b.weight(), b.spec.weight_shape()), (b.bias(), b.spec.bias_shape())];
            if b.prelu {
                want.push((b.slopes(), Shape::of(1, b.spec.out_channels, 1, 1)));
            }
            for (name, shape) in want {
                let p = params.get(&name)?;
                if p.shape() != shape {
                    return Err(Error::shape(
                        "network parameters",
                        format!("tensor {name} has shape {} but the topology needs {shape}", p.shape()),
                    ));
                }
                expected += 1;
            }
        }
        if expected != params.len() {
            return Err(Error::invalid(format!(
                "registry has {} tensors, topology expects {expected}",
                params.len()
            )));
        }
        Ok(())
    }

    fn topology(cfg: NetworkConfig, w: Widths) -> Self {
        let sq = ConvSpec::square;
        let scale1 = vec![
            Block::conv("s1.conv1", sq(3, w.conv1, 11, 4, 5), true, false),
            Block::conv("s1.conv2", sq(w.conv1, w.conv2, 5, 1, 2), true, false),
            Block::conv("s1.conv3", sq(w.conv2, w.conv3, 3, 1, 1), true, false),
            Block::conv("s1.conv4", sq(w.conv3, w.conv4, 3, 1, 1), true, false),
            Block::conv("s1.conv5", sq(w.conv4, w.conv5, 3, 1, 1), true, false),
        ];
        let conv6_in = if cfg.use_hypercolumn {
            w.conv1 + w.conv2 + w.conv5
        } else {
            w.conv5
        };
        let conv6 = Block::conv("s1.conv6", sq(conv6_in, w.conv6, 1, 1, 0), true, true);
        let scale2_first = Block::conv("s2.conv1", sq(3, w.scale2_first, 9, 2, 4), true, true);
        let f = w.scale2_features;
        let scale2 = vec![
            Block::conv("s2.conv2", sq(w.scale2_first + w.conv6, f, 5, 1, 2), true, true),
            Block::conv("s2.conv3", sq(f, f, 5, 1, 2), true, true),
            Block::conv("s2.conv4", sq(f, f, 5, 1, 2), true, true),
        ];
        let head = |h: &str| {
            if cfg.use_deconv_head {
                vec![
                    Block::conv(&format!("{h}.conv"), sq(f, w.head_hidden, 5, 1, 2), true, true),
                    Block {
                        name: format!("{h}.deconv"),
                        kind: Kind::Deconv,
                        spec: sq(w.head_hidden, widths::OUTPUT, 8, 4, 2),
                        prelu: false,
                        dropout: false,
                    },
                ]
            } else {
                vec![Block::conv(&format!("{h}.conv"), sq(f, widths::OUTPUT, 5, 1, 2), false, false)]
            }
        };
        Network {
            heads: [head(HEADS[0]), head(HEADS[1])],
            cfg,
            widths: w,
            scale1,
            conv6,
            scale2_first,
            scale2,
            params: ParamStore::new(),
            cache: None,
        }
    }

    fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.scale1
            .iter()
            .chain(std::iter::once(&self.conv6))
            .chain(std::iter::once(&self.scale2_first))
            .chain(self.scale2.iter())
            .chain(self.heads.iter().flatten())
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    /// Convolution geometry of every layer, by layer name.
    pub fn layer_specs(&self) -> Vec<(String, ConvSpec, bool)> {
        self.blocks()
            .map(|b| (b.name.clone(), b.spec, b.kind == Kind::Deconv))
            .collect()
    }

    pub fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c != 3 {
            return Err(Error::shape("network input", format!("expected 3 channels, got {}", shape.c)));
        }
        let m = self.cfg.input_multiple;
        if !shape.h.is_multiple_of(m) || !shape.w.is_multiple_of(m) {
            let pad = |v: usize| (m - v % m) % m;
            return Err(Error::shape(
                "network input",
                format!(
                    "{}x{} is not a multiple of {m}; pad by {} rows and {} columns",
                    shape.h,
                    shape.w,
                    pad(shape.h),
                    pad(shape.w)
                ),
            ));
        }
        Ok(())
    }

    /// Training-mode or evaluation forward pass that records the activation
    /// cache for [`Network::backward`]. Returns `(log_albedo, log_shading)`.
    pub fn forward(&mut self, input: &Tensor<F>, train: bool, rng: &mut Rng) -> Result<(Tensor<F>, Tensor<F>)> {
        let (a, s, cache) = self.run(input, train, rng)?;
        self.cache = Some(cache);
        Ok((a, s))
    }

    /// Evaluation-mode forward that leaves the network untouched; safe to
    /// call concurrently.
    pub fn predict(&self, input: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let (a, s, _) = self.run(input, false, &mut Rng::new(0))?;
        Ok((a, s))
    }

    fn run(&self, input: &Tensor<F>, train: bool, rng: &mut Rng) -> Result<(Tensor<F>, Tensor<F>, Cache<F>)> {
        self.check_input(input.shape())?;
        let p = &self.params;
        let dp = self.cfg.dropout_prob;
        let shape = input.shape();
        let (qh, qw) = (shape.h / 4, shape.w / 4);

        // scale 1
        let mut s1 = Vec::with_capacity(5);
        let mut pools = Vec::with_capacity(3);
        let mut pooled = Vec::with_capacity(3);
        let mut x = input.clone();
        for (i, b) in self.scale1.iter().enumerate() {
            let (y, c) = block_forward(b, p, &x, train, dp, rng)?;
            s1.push(c);
            x = y;
            if matches!(i, 0 | 1 | 4) {
                let (y, idx) = max_pool_forward(&x, &POOL_S1)?;
                pools.push(PoolCache {
                    indices: idx,
                    input_shape: x.shape(),
                });
                pooled.push(y.clone());
                x = y;
            }
        }
        let mut taps = Vec::new();
        let sources: Vec<&Tensor<F>> = if self.cfg.use_hypercolumn {
            pooled.iter().collect()
        } else {
            vec![&pooled[2]]
        };
        for t in sources {
            let f = qh / t.shape().h;
            let up = bilinear_upsample_forward(t, f)?;
            expect_extent("scale-1 feature", up.shape(), qh, qw)?;
            taps.push(up);
        }
        let conv6_parts: Vec<usize> = taps.iter().map(|t| t.shape().c).collect();
        let conv6_in = concat_channels(&taps.iter().collect::<Vec<_>>())?;
        let (s1_out, conv6) = block_forward(&self.conv6, p, &conv6_in, train, dp, rng)?;

        // scale 2
        let (y, s2_first) = block_forward(&self.scale2_first, p, input, train, dp, rng)?;
        let (q, idx) = max_pool_forward(&y, &POOL_S2)?;
        let s2_pool = PoolCache {
            indices: idx,
            input_shape: y.shape(),
        };
        expect_extent("scale-2 feature", q.shape(), qh, qw)?;
        let concat_parts = [q.shape().c, s1_out.shape().c];
        let mut x = concat_channels(&[&q, &s1_out])?;
        let mut s2 = Vec::with_capacity(3);
        for b in &self.scale2 {
            let (y, c) = block_forward(b, p, &x, train, dp, rng)?;
            s2.push(c);
            x = y;
        }

        // heads
        let mut outs = Vec::with_capacity(2);
        let mut head_caches = Vec::with_capacity(2);
        for head in &self.heads {
            let (h, conv) = block_forward(&head[0], p, &x, train, dp, rng)?;
            let (out, hc) = if let Some(d) = head.get(1) {
                let (o, dc) = block_forward(d, p, &h, train, dp, rng)?;
                (
                    o,
                    HeadCache {
                        conv,
                        deconv: Some(dc),
                        upsample_input: None,
                    },
                )
            } else {
                let s = h.shape();
                (
                    bilinear_upsample_forward(&h, 4)?,
                    HeadCache {
                        conv,
                        deconv: None,
                        upsample_input: Some(s),
                    },
                )
            };
            expect_extent("head output", out.shape(), shape.h, shape.w)?;
            outs.push(out);
            head_caches.push(hc);
        }
        let shading = outs.pop().expect("two heads");
        let albedo = outs.pop().expect("two heads");
        let mut hcs = head_caches.into_iter();
        let cache = Cache {
            input_shape: shape,
            s1,
            pools: pools.try_into().expect("three scale-1 pools"),
            pooled_shapes: [pooled[0].shape(), pooled[1].shape(), pooled[2].shape()],
            conv6_parts,
            conv6,
            s2_first,
            s2_pool,
            concat_parts,
            s2,
            heads: [hcs.next().expect("albedo head"), hcs.next().expect("shading head")],
        };
        Ok((albedo, shading, cache))
    }

    /// Back-propagates output gradients through the cached forward pass,
    /// accumulating into every parameter gradient. Returns the gradient
    /// with respect to the input image.
    pub fn backward(&mut self, d_albedo: &Tensor<F>, d_shading: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let result = self.backward_with(&cache, d_albedo, d_shading);
        self.cache = Some(cache);
        result
    }

    fn backward_with(&mut self, cache: &Cache<F>, d_albedo: &Tensor<F>, d_shading: &Tensor<F>) -> Result<Tensor<F>> {
        let out_shape = cache.input_shape;
        for d in [d_albedo, d_shading] {
            if d.shape() != out_shape {
                return Err(Error::shape(
                    "network backward",
                    format!("upstream gradient {} != output {out_shape}", d.shape()),
                ));
            }
        }
        let params = &mut self.params;

        // heads
        let mut d_feat: Option<Tensor<F>> = None;
        for ((head, hc), d) in self.heads.iter().zip(&cache.heads).zip([d_albedo, d_shading]) {
            let dh = match (&hc.deconv, hc.upsample_input) {
                (Some(dc), _) => block_backward(&head[1], params, d, dc)?,
                (None, Some(s)) => bilinear_upsample_backward(d, 4, s)?,
                _ => unreachable!("head cache has either a deconv or an upsample"),
            };
            let dx = block_backward(&head[0], params, &dh, &hc.conv)?;
            match d_feat.as_mut() {
                Some(acc) => acc.add_assign(&dx)?,
                None => d_feat = Some(dx),
            }
        }
        let mut d = d_feat.expect("two heads");

        // scale 2
        for (b, c) in self.scale2.iter().zip(&cache.s2).rev() {
            d = block_backward(b, params, &d, c)?;
        }
        let mut parts = split_channels(&d, &cache.concat_parts)?.into_iter();
        let d_q = parts.next().expect("scale-2 part");
        let d_s1_out = parts.next().expect("scale-1 part");
        let d_y = max_pool_backward(&d_q, &cache.s2_pool.indices, cache.s2_pool.input_shape)?;
        let mut d_input = block_backward(&self.scale2_first, params, &d_y, &cache.s2_first)?;

        // scale 1
        let d_conv6_in = block_backward(&self.conv6, params, &d_s1_out, &cache.conv6)?;
        let qh = out_shape.h / 4;
        let mut d_taps = split_channels(&d_conv6_in, &cache.conv6_parts)?;
        // gradient arriving at each pooled output (after conv1, conv2, conv5) from the taps
        let mut d_pooled: [Option<Tensor<F>>; 3] = [None, None, None];
        let tap_targets: Vec<usize> = if self.cfg.use_hypercolumn { vec![0, 1, 2] } else { vec![2] };
        for (t, dt) in tap_targets.into_iter().zip(d_taps.drain(..)) {
            let s = cache.pooled_shapes[t];
            d_pooled[t] = Some(bilinear_upsample_backward(&dt, qh / s.h, s)?);
        }
        let mut d = d_pooled[2].take().expect("conv5 tap");
        for i in (0..5).rev() {
            let pool_slot = match i {
                0 => Some(0),
                1 => Some(1),
                4 => Some(2),
                _ => None,
            };
            if let Some(slot) = pool_slot {
                if slot < 2 {
                    if let Some(extra) = d_pooled[slot].take() {
                        d.add_assign(&extra)?;
                    }
                }
                let pc = &cache.pools[slot];
                d = max_pool_backward(&d, &pc.indices, pc.input_shape)?;
            }
            d = block_backward(&self.scale1[i], params, &d, &cache.s1[i])?;
        }
        d_input.add_assign(&d)?;
        Ok(d_input)
    }

    /// Fingerprint of every PReLU sign and max-pool winner in the cached
    /// forward pass. Two passes with equal patterns lie on the same linear
    /// piece of the network.
    pub fn activation_pattern(&self) -> Option<u64> {
        let c = self.cache.as_ref()?;
        let mut bytes = Vec::new();
        let mut push_block = |b: &BlockCache<F>| {
            if let Some(pre) = &b.pre_activation {
                bytes.extend(pre.data().iter().map(|&v| (v < F::ZERO) as u8));
            }
        };
        c.s1.iter().for_each(&mut push_block);
        push_block(&c.conv6);
        push_block(&c.s2_first);
        c.s2.iter().for_each(&mut push_block);
        for h in &c.heads {
            push_block(&h.conv);
            if let Some(d) = &h.deconv {
                push_block(d);
            }
        }
        for p in c.pools.iter().chain(std::iter::once(&c.s2_pool)) {
            for &i in &p.indices {
                bytes.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        Some(stable_hash(&bytes))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

fn expect_extent(what: &str, s: Shape, h: usize, w: usize) -> Result<()> {
    if s.h != h || s.w != w {
        return Err(Error::shape(
            "network",
            format!("{what} at {}x{}, expected {h}x{w}", s.h, s.w),
        ));
    }
    Ok(())
}

fn block_forward<F: Real>(
    b: &Block,
    p: &ParamStore<F>,
    x: &Tensor<F>,
    train: bool,
    dropout_prob: f64,
    rng: &mut Rng,
) -> Result<(Tensor<F>, BlockCache<F>)> {
    let w = p.value(&b.weight())?;
    let bias = p.value(&b.bias())?;
    let mut y = match b.kind {
        Kind::Conv => conv_forward(x, w, Some(bias), &b.spec)?,
        Kind::Deconv => deconv_forward(x, w, Some(bias), &b.spec)?,
    };
    let mut pre_activation = None;
    if b.prelu {
        let a = prelu_forward(&y, p.value(&b.slopes())?)?;
        pre_activation = Some(std::mem::replace(&mut y, a));
    }
    let mut mask = None;
    if b.dropout {
        let (out, m) = Dropout::new(dropout_prob, train)?.forward(&y, rng);
        y = out;
        mask = m;
    }
    Ok((
        y,
        BlockCache {
            input: x.clone(),
            pre_activation,
            mask,
        },
    ))
}

fn block_backward<F: Real>(b: &Block, p: &mut ParamStore<F>, dy: &Tensor<F>, c: &BlockCache<F>) -> Result<Tensor<F>> {
    let mut d = dropout_backward(dy, c.mask.as_ref())?;
    if let Some(pre) = &c.pre_activation {
        let sp = p.get_mut(&b.slopes())?;
        d = prelu_backward(&d, pre, &sp.value, &mut sp.grad)?;
    }
    let mut db = Tensor::zeros(b.spec.bias_shape());
    let wp = p.get_mut(&b.weight())?;
    let dx = match b.kind {
        Kind::Conv => conv_backward(&d, &c.input, &wp.value, &b.spec, &mut wp.grad, Some(&mut db))?,
        Kind::Deconv => deconv_backward(&d, &c.input, &wp.value, &b.spec, &mut wp.grad, Some(&mut db))?,
    };
    p.get_mut(&b.bias())?.grad.add_assign(&db)?;
    Ok(dx)
}
