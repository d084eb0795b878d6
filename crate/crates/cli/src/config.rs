//! Run configuration: TOML with one table per module.
//!
//! ```toml
//! [network]
//! channel_scale = 0.0625
//!
//! [train]
//! base_lr = 0.02
//! max_iterations = 2000
//!
//! [train.lr_multipliers]
//! "s1" = 0.1
//!
//! [augment]
//! crop_height = 416
//!
//! [data]
//! manifest = "data/manifest.txt"
//!
//! [output]
//! dir = "runs/a"
//! ```
//!
//! Every key is optional and falls back to the module default. Unknown
//! keys and tables are rejected. Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dint_core::data::{AugmentConfig, Split};
use dint_core::losses::LossConfig;
use dint_core::metrics::{EvalConfig, LmseConfig};
use dint_core::network::NetworkConfig;
use dint_core::trainer::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    loss: LossSection,
    #[serde(default)]
    augment: AugmentSection,
    #[serde(default)]
    eval: EvalSection,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    channel_scale: Option<f64>,
    hypercolumn: Option<bool>,
    deconv_head: Option<bool>,
    dropout: Option<f64>,
    input_multiple: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    base_lr: Option<f64>,
    momentum: Option<f64>,
    batch_size: Option<usize>,
    max_iterations: Option<u64>,
    checkpoint_every: Option<u64>,
    seed: Option<u64>,
    lr_multipliers: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    lambda: Option<f64>,
    gradient_loss: Option<bool>,
    log_epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentSection {
    crop_height: Option<usize>,
    crop_width: Option<usize>,
    mirror_prob: Option<f64>,
    rotate_min_deg: Option<f64>,
    rotate_max_deg: Option<f64>,
    zoom_min: Option<f64>,
    zoom_max: Option<f64>,
    rotate_zoom: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    lmse_window_fraction: Option<f64>,
    lmse_stride_fraction: Option<f64>,
    dssim_align: Option<bool>,
    mit_total: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    manifest: Option<PathBuf>,
    split: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    trace: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub manifest: Option<PathBuf>,
    pub split: Option<Split>,
    pub output_dir: PathBuf,
    pub trace_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut train = TrainConfig::default();
        train.augment = AugmentConfig::default();
        RunConfig {
            network: NetworkConfig::default(),
            train,
            eval: EvalConfig::default(),
            manifest: None,
            split: Some(Split::Train),
            output_dir: PathBuf::from("."),
            trace_path: PathBuf::from("trace.csv"),
            checkpoint_path: PathBuf::from("final.ckpt"),
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    /// Parses and validates; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let f: File = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |r| text[..r.start].matches('\n').count() + 1);
            anyhow::anyhow!("line {line}: {}", e.message().trim())
        })?;
        let mut c = RunConfig::default();

        let n = &mut c.network;
        set(&mut n.channel_scale, f.network.channel_scale);
        set(&mut n.use_hypercolumn, f.network.hypercolumn);
        set(&mut n.use_deconv_head, f.network.deconv_head);
        set(&mut n.dropout_prob, f.network.dropout);
        set(&mut n.input_multiple, f.network.input_multiple);

        let t = &mut c.train;
        set(&mut t.base_lr, f.train.base_lr);
        set(&mut t.momentum, f.train.momentum);
        set(&mut t.batch_size, f.train.batch_size);
        set(&mut t.max_iterations, f.train.max_iterations);
        set(&mut t.checkpoint_every, f.train.checkpoint_every);
        set(&mut t.seed, f.train.seed);
        set(&mut t.lr_multipliers, f.train.lr_multipliers);

        let l: &mut LossConfig = &mut t.loss;
        set(&mut l.lambda, f.loss.lambda);
        set(&mut l.use_gradient_loss, f.loss.gradient_loss);
        set(&mut l.log_epsilon, f.loss.log_epsilon);

        let a = &mut t.augment;
        set(&mut a.crop_h, f.augment.crop_height);
        set(&mut a.crop_w, f.augment.crop_width);
        set(&mut a.mirror_prob, f.augment.mirror_prob);
        set(&mut a.rotate_range_deg.0, f.augment.rotate_min_deg);
        set(&mut a.rotate_range_deg.1, f.augment.rotate_max_deg);
        set(&mut a.zoom_range.0, f.augment.zoom_min);
        set(&mut a.zoom_range.1, f.augment.zoom_max);
        set(&mut a.enable_rotate_zoom, f.augment.rotate_zoom);

        let e = &mut c.eval;
        let lm: &mut LmseConfig = &mut e.lmse;
        set(&mut lm.window_fraction, f.eval.lmse_window_fraction);
        set(&mut lm.stride_fraction, f.eval.lmse_stride_fraction);
        set(&mut e.dssim_align, f.eval.dssim_align);
        set(&mut e.mit_total, f.eval.mit_total);

        c.manifest = f.data.manifest.map(|p| base.join(p));
        if let Some(s) = f.data.split {
            c.split = match s.as_str() {
                "all" => None,
                other => Some(other.parse().map_err(|e| anyhow::anyhow!("data.split: {e}"))?),
            };
        }
        if let Some(d) = f.output.dir {
            c.output_dir = base.join(d);
        } else {
            c.output_dir = base.to_path_buf();
        }
        c.trace_path = c.output_dir.join(f.output.trace.unwrap_or_else(|| "trace.csv".into()));
        c.checkpoint_path = c.output_dir.join(f.output.checkpoint.unwrap_or_else(|| "final.ckpt".into()));
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate().context("[network]")?;
        self.train.validate().context("[train]")?;
        self.eval.lmse.validate().context("[eval]")?;
        if !self.train.augment.crop_h.is_multiple_of(self.network.input_multiple)
            || !self.train.augment.crop_w.is_multiple_of(self.network.input_multiple)
        {
            bail!(
                "[augment] crop {}x{} is not a multiple of network.input_multiple {}",
                self.train.augment.crop_h,
                self.train.augment.crop_w,
                self.network.input_multiple
            );
        }
        Ok(())
    }
}
