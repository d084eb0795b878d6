//! SGD-with-momentum training.
//!
//! Batch composition is a pure function of `(seed, iteration)`: slot `g`
//! of the infinite sample stream falls in epoch `g / len` and takes the
//! position `g % len` of that epoch's permutation. Augmentation and
//! dropout draw from streams keyed by one value taken from the trainer's
//! rng per iteration, so restoring the rng state from a checkpoint
//! resumes the exact trajectory.

mod checkpoint;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{Checkpoint, TensorRecord, MAGIC, VERSION};

use crate::data::{augment, pad_to_multiple, pad_to_multiple_with, AugmentConfig, Sample};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossConfig};
use crate::network::{Network, NetworkConfig};
use crate::params::ParamStore;
use crate::real::Real;
use crate::rng::{stable_hash, Rng};
use crate::tensor::{guarded_log, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Learning-rate multipliers keyed by parameter-name prefix; the
    /// longest matching prefix wins, unmatched parameters use 1.
    pub lr_multipliers: BTreeMap<String, f64>,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    /// Checkpoint interval in iterations; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            lr_multipliers: BTreeMap::new(),
            momentum: 0.9,
            batch_size: 32,
            max_iterations: 1000,
            seed: 0,
            loss: LossConfig::default(),
            augment: AugmentConfig {
                crop_h: 64,
                crop_w: 64,
                ..AugmentConfig::default()
            },
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(format!("base_lr {} must be > 0", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        for (k, &m) in &self.lr_multipliers {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid(format!("lr multiplier for {k} must be finite and >= 0")));
            }
        }
        self.loss.validate()?;
        self.augment.validate()
    }

    /// Multiplier for parameter `name`: the entry whose key equals the
    /// name or is a dot-delimited prefix of it, longest first.
    pub fn lr_multiplier(&self, name: &str) -> f64 {
        self.lr_multipliers
            .iter()
            .filter(|(k, _)| {
                name == k.as_str() || (name.starts_with(k.as_str()) && name.as_bytes().get(k.len()) == Some(&b'.'))
            })
            .max_by_key(|(k, _)| k.len())
            .map_or(1.0, |(_, &m)| m)
    }
}

/// SHA-256 over everything that shapes the trajectory; the iteration
/// budget and checkpoint interval are excluded so a run can be extended.
pub fn config_fingerprint(net: &NetworkConfig, train: &TrainConfig) -> [u8; 32] {
    let mut t = train.clone();
    t.max_iterations = 0;
    t.checkpoint_every = 0;
    let text = serde_json::to_string(&(net, &t)).expect("config serializes");
    Sha256::digest(text.as_bytes()).into()
}

/// `v ← μ·v − η·g; θ ← θ + v` for every parameter with `η = base_lr ×
/// multiplier`, then zeroes the gradients. Nothing is modified when any
/// gradient is non-finite.
pub fn sgd_momentum_step<F: Real>(params: &mut ParamStore<F>, cfg: &TrainConfig, iteration: u64) -> Result<()> {
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of {} at iteration {iteration}",
            p.name
        )));
    }
    let mu = F::from_f64(cfg.momentum);
    for p in params.iter_mut() {
        let eta = F::from_f64(cfg.base_lr * cfg.lr_multiplier(&p.name));
        let g = p.grad.data();
        for ((v, th), &g) in p.momentum.data_mut().iter_mut().zip(p.value.data_mut()).zip(g) {
            *v = mu * *v - eta * g;
            *th += *v;
        }
    }
    params.zero_grads();
    Ok(())
}

/// Network-ready tensors for one mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<String>,
    pub image: Tensor<f32>,
    pub log_albedo: Tensor<f32>,
    pub log_shading: Tensor<f32>,
    pub mask: Tensor<f32>,
}

/// Dataset indices for `iteration`, reshuffling at every epoch boundary.
pub fn batch_indices(seed: u64, iteration: u64, batch_size: usize, len: usize) -> Vec<usize> {
    let epoch_rng = Rng::new(seed).fork(stable_hash(b"epoch"));
    let mut cached: Option<(u64, Vec<usize>)> = None;
    (0..batch_size as u64)
        .map(|j| {
            let g = iteration * batch_size as u64 + j;
            let epoch = g / len as u64;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..len).collect();
                epoch_rng.fork(epoch).shuffle(&mut perm);
                cached = Some((epoch, perm));
            }
            cached.as_ref().expect("filled above").1[(g % len as u64) as usize]
        })
        .collect()
}

/// Augments, pads and stacks the selected samples; each slot draws from
/// its own stream derived from `key`, the slot and the sample id.
pub fn assemble_batch(
    data: &[Sample],
    indices: &[usize],
    key: u64,
    cfg: &TrainConfig,
    multiple: usize,
) -> Result<Batch> {
    let base = Rng::new(key);
    let items = crate::exec::map_indexed(indices.len(), |j| -> Result<[Tensor<f64>; 4]> {
        let s = &data[indices[j]];
        let mut rng = base.fork(stable_hash(s.id.as_bytes()) ^ j as u64);
        let a = augment(s, &cfg.augment, &mut rng)?;
        let eps = cfg.loss.log_epsilon;
        Ok([
            pad_to_multiple(&a.image, multiple).0,
            guarded_log(&pad_to_multiple(&a.albedo, multiple).0, eps),
            guarded_log(&pad_to_multiple(&a.shading, multiple).0, eps),
            pad_to_multiple_with(&a.mask, multiple, 0.0).0,
        ])
    });
    let items: Vec<[Tensor<f64>; 4]> = items.into_iter().collect::<Result<_>>()?;
    let stack = |k: usize| -> Result<Tensor<f32>> {
        let parts: Vec<&Tensor<f64>> = items.iter().map(|it| &it[k]).collect();
        Ok(Tensor::stack(&parts)?.cast())
    };
    Ok(Batch {
        ids: indices.iter().map(|&i| data[i].id.clone()).collect(),
        image: stack(0)?,
        log_albedo: stack(1)?,
        log_shading: stack(2)?,
        mask: stack(3)?,
    })
}

/// Loss trace entry: the iteration index and the batch loss measured
/// before that iteration's update.
pub type TracePoint = (u64, f64);

pub struct Trainer {
    net: Network<f32>,
    net_cfg: NetworkConfig,
    cfg: TrainConfig,
    iteration: u64,
    rng: Rng,
}

impl Trainer {
    /// Fresh network initialized from `cfg.seed`.
    pub fn new(net_cfg: &NetworkConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let net = Network::build(net_cfg, &mut root.fork(stable_hash(b"init")))?;
        Ok(Trainer {
            net,
            net_cfg: net_cfg.clone(),
            cfg: cfg.clone(),
            iteration: 0,
            rng: root.fork(stable_hash(b"train")),
        })
    }

    /// Continues from `ck`, which must come from a run with the same
    /// configuration (apart from the iteration budget).
    pub fn resume(net_cfg: &NetworkConfig, cfg: &TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(net_cfg, cfg)?;
        if ck.fingerprint != config_fingerprint(net_cfg, cfg) {
            return Err(Error::Checkpoint(
                "configuration fingerprint differs from the checkpoint's run".into(),
            ));
        }
        ck.apply_to(t.net.params_mut())?;
        t.iteration = ck.iteration;
        t.rng = ck.rng();
        Ok(t)
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn into_network(self) -> Network<f32> {
        self.net
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            self.net.params(),
            self.iteration,
            &self.rng,
            config_fingerprint(&self.net_cfg, &self.cfg),
        )
    }

    /// One iteration: batch, forward, loss, backward, update.
    pub fn step(&mut self, data: &[Sample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let i = self.iteration;
        let key = self.rng.next_u64();
        let idx = batch_indices(self.cfg.seed, i, self.cfg.batch_size, data.len());
        let batch = assemble_batch(data, &idx, key, &self.cfg, self.net_cfg.input_multiple)?;
        let mut dropout = Rng::new(key).fork(stable_hash(b"dropout"));
        let (a, s) = self.net.forward(&batch.image, true, &mut dropout)?;
        let loss = total_loss(&batch.log_albedo, &batch.log_shading, &a, &s, &batch.mask, &self.cfg.loss)?;
        let value = loss.value.to_f64();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at iteration {i} (samples {})",
                batch.ids.join(", ")
            )));
        }
        self.net.backward(&loss.d_log_albedo, &loss.d_log_shading)?;
        self.net.clear_cache();
        sgd_momentum_step(self.net.params_mut(), &self.cfg, i)?;
        self.iteration += 1;
        Ok(value)
    }

    /// Runs until `max_iterations`, calling `on_checkpoint` every
    /// `checkpoint_every` iterations.
    pub fn run(
        &mut self,
        data: &[Sample],
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
    ) -> Result<Vec<TracePoint>> {
        let mut trace = Vec::new();
        while self.iteration < self.cfg.max_iterations {
            let i = self.iteration;
            let loss = self.step(data)?;
            log::debug!("iteration {i} loss {loss:.6}");
            trace.push((i, loss));
            let every = self.cfg.checkpoint_every;
            if every > 0 && self.iteration.is_multiple_of(every) {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(trace)
    }
}

/// Trains a fresh network; returns the final checkpoint and the trace.
pub fn train_loop(net_cfg: &NetworkConfig, data: &[Sample], cfg: &TrainConfig) -> Result<(Checkpoint, Vec<TracePoint>)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut t = Trainer::new(net_cfg, cfg)?;
    let trace = t.run(data, |_| Ok(()))?;
    Ok((t.checkpoint(), trace))
}

pub fn write_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "iteration,loss").map_err(io)?;
    for (i, l) in trace {
        writeln!(f, "{i},{l:e}").map_err(io)?;
    }
    f.flush().map_err(io)
}
