//! Command bodies. Each returns `Ok(false)` when it finished but has
//! failures to report, `Err` when it could not run at all.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dint_core::data::{
    generate_mit_shading, load_all, load_dataset, read_mask, read_rgb, resynthesize, write_png16, DatasetManifest,
    ManifestEntry, Split,
};
use dint_core::inference::decompose as run_decompose;
use dint_core::metrics::{evaluate_report, EvalInput};
use dint_core::network::{Network, NetworkConfig};
use dint_core::trainer::{write_trace_csv, Checkpoint, Trainer};
use dint_core::verify::{run_all, VerifyOptions, SUITE_NAMES};

use crate::config::RunConfig;
use crate::{DecomposeArgs, EvalArgs, SplitArg, SynthArgs, SynthMode, TrainArgs, VerifyArgs};

pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

impl Globals {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.train.seed = s;
        }
        Ok(c)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn train(g: &Globals, a: &TrainArgs) -> Result<bool> {
    if g.config.is_none() {
        bail!("train needs --config");
    }
    let c = g.run_config()?;
    let manifest_path = c.manifest.as_ref().ok_or_else(|| anyhow!("config has no data.manifest"))?;
    let manifest = DatasetManifest::read(manifest_path)?;
    let data = load_all(&manifest, c.split)?;
    if data.is_empty() {
        bail!("{} has no samples in the selected split", manifest_path.display());
    }
    log::info!("training on {} samples", data.len());
    create_dir(&c.output_dir)?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(&c.network, &c.train, &Checkpoint::load(p)?)?,
        None => Trainer::new(&c.network, &c.train)?,
    };
    let dir = c.output_dir.clone();
    let trace = trainer.run(&data, |ck| {
        let p = dir.join(format!("iter{:07}.ckpt", ck.iteration));
        log::info!("checkpoint {}", p.display());
        ck.save(&p)
    })?;
    write_trace_csv(&c.trace_path, &trace)?;
    trainer.checkpoint().save(&c.checkpoint_path)?;
    match trace.last() {
        Some((i, l)) => println!("iteration {i} loss {l:.6e}; wrote {}", c.checkpoint_path.display()),
        None => println!("nothing to do at iteration {}", trainer.iteration()),
    }
    Ok(true)
}

fn load_network(ck_path: &Path, cfg: &NetworkConfig) -> Result<Network<f32>> {
    let ck = Checkpoint::load(ck_path)?;
    let store = ck.to_store()?;
    Network::from_params(cfg, store).with_context(|| format!("checkpoint {} does not fit the network", ck_path.display()))
}

fn decompose_one(net: &Network<f32>, input: &Path, out_a: &Path, out_s: &Path) -> Result<()> {
    let image = read_rgb(input)?;
    let (a, s) = run_decompose(net, &image).with_context(|| format!("decomposing {}", input.display()))?;
    write_png16(out_a, &a)?;
    write_png16(out_s, &s)?;
    Ok(())
}

pub fn decompose(g: &Globals, a: &DecomposeArgs) -> Result<bool> {
    let c = g.run_config()?;
    let net = load_network(&a.checkpoint, &c.network)?;
    match (&a.input, &a.manifest) {
        (Some(input), _) => {
            let (oa, os) = (a.out_albedo.as_ref().unwrap(), a.out_shading.as_ref().unwrap());
            decompose_one(&net, input, oa, os)?;
            Ok(true)
        }
        (None, Some(m)) => {
            let manifest = DatasetManifest::read(m)?;
            let dir = a.out_dir.as_ref().unwrap();
            create_dir(dir)?;
            let mut ok = true;
            for e in &manifest.entries {
                let (oa, os) = pred_paths(dir, &e.id);
                if let Err(err) = decompose_one(&net, &manifest.resolve(&e.image), &oa, &os) {
                    eprintln!("error: sample {}: {err:#}", e.id);
                    ok = false;
                }
            }
            println!("decomposed {} images into {}", manifest.len(), dir.display());
            Ok(ok)
        }
        (None, None) => bail!("decompose needs --input or --manifest"),
    }
}

fn pred_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}_albedo.png")), dir.join(format!("{id}_shading.png")))
}

pub fn eval(g: &Globals, a: &EvalArgs) -> Result<bool> {
    let c = g.run_config()?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let split = match a.split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    let cases = load_dataset(&manifest, split)
        .zip(&entries)
        .map(|(sample, e)| {
            let input = sample.map_err(anyhow::Error::from).and_then(|s| {
                let (pa, ps) = pred_paths(&a.pred_dir, &e.id);
                Ok(EvalInput {
                    id: s.id,
                    pred_albedo: read_rgb(&pa)?,
                    pred_shading: read_rgb(&ps)?,
                    albedo: s.albedo,
                    shading: s.shading,
                    mask: e.mask.is_some().then_some(s.mask),
                })
            });
            (e.id.clone(), input.map_err(|err| dint_core::Error::InvalidArgument(format!("{err:#}"))))
        })
        .collect();
    let report = evaluate_report(cases, &c.eval)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(&a.out, report.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    for e in &report.errors {
        eprintln!("error: sample {}: {}", e.id, e.error);
    }
    if let Some(m) = &report.avg {
        println!(
            "{} samples: mse {:.6} lmse {:.6} dssim {:.6}",
            report.per_sample.len(),
            m.mse,
            m.lmse,
            m.dssim
        );
    }
    Ok(!report.has_errors())
}

pub fn synth(_g: &Globals, a: &SynthArgs) -> Result<bool> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    if manifest.is_empty() {
        log::warn!("{} lists no samples; nothing to do", a.manifest.display());
        return Ok(true);
    }
    create_dir(&a.out_dir)?;
    let mut out = DatasetManifest {
        split_mode: manifest.split_mode,
        entries: Vec::new(),
        base_dir: a.out_dir.clone(),
    };
    for e in &manifest.entries {
        let ctx = || format!("sample {}", e.id);
        let image = read_rgb(&manifest.resolve(&e.image)).with_context(ctx)?;
        let albedo = read_rgb(&manifest.resolve(&e.albedo)).with_context(ctx)?;
        let mask = e.mask.as_ref().map(|p| read_mask(&manifest.resolve(p))).transpose().with_context(ctx)?;
        let (image, shading, mask) = match a.mode {
            SynthMode::GenMitShading => {
                let gen = generate_mit_shading(&image, &albedo, 1e-4).with_context(ctx)?;
                log::info!("{}: alpha {:.6}", e.id, gen.alpha);
                let merged = match mask {
                    Some(m) => m.zip_map(&gen.valid, |a, b| a * b)?,
                    None => gen.valid,
                };
                let any_invalid = merged.data().contains(&0.0);
                (image, gen.shading, any_invalid.then_some(merged))
            }
            SynthMode::ResynthSintel => {
                let shading = read_rgb(&manifest.resolve(&e.shading)).with_context(ctx)?;
                (resynthesize(&albedo, &shading).with_context(ctx)?, shading, mask)
            }
        };
        let name = |k: &str| PathBuf::from(format!("{}_{k}.png", e.id));
        write_png16(&a.out_dir.join(name("image")), &image)?;
        write_png16(&a.out_dir.join(name("albedo")), &albedo)?;
        write_png16(&a.out_dir.join(name("shading")), &shading)?;
        let mask_path = match &mask {
            Some(m) => {
                write_png16(&a.out_dir.join(name("mask")), m)?;
                Some(name("mask"))
            }
            None => None,
        };
        out.entries.push(ManifestEntry {
            id: e.id.clone(),
            image: name("image"),
            albedo: name("albedo"),
            shading: name("shading"),
            mask: mask_path,
            scene: e.scene.clone(),
            split: e.split,
        });
    }
    let path = a.out_dir.join("manifest.txt");
    out.write(&path)?;
    println!("wrote {} samples and {}", out.len(), path.display());
    Ok(true)
}

fn parse_corruption(s: &str) -> Result<(String, f64)> {
    match s.split_once('=') {
        Some((t, f)) => Ok((t.to_string(), f.parse().with_context(|| format!("bad factor in {s}"))?)),
        None => Ok((s.to_string(), 1.01)),
    }
}

pub fn verify(g: &Globals, a: &VerifyArgs) -> Result<bool> {
    for s in &a.suites {
        if !SUITE_NAMES.contains(&s.as_str()) {
            bail!("unknown suite {s}; expected one of {}", SUITE_NAMES.join(", "));
        }
    }
    let mut opts = VerifyOptions {
        corrupt: a.corrupt_gradient.as_deref().map(parse_corruption).transpose()?,
        only: a.suites.clone(),
        ..VerifyOptions::default()
    };
    if let Some(s) = g.seed {
        opts.seed = s;
    }
    let results = run_all(&opts);
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<20} {:>6.1}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    println!("{} of {} suites passed", results.len() - failed, results.len());
    Ok(failed == 0)
}
