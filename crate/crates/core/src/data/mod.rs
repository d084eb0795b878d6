//! Datasets: manifest parsing, PNG loading, synthesis of ground truth,
//! augmentation and padding.
//!
//! A manifest is a tab-separated text file with one record per line:
//!
//! ```text
//! # comment
//! #@ split-mode scene
//! #@ split train
//! id	image.png	albedo.png	shading.png	[mask.png]	scene
//! ```
//!
//! `#@` lines are directives. `split-mode` (image, scene or object) sets
//! how records may be distributed over splits; `split` (train or test)
//! tags every following record. Paths are relative to the manifest's
//! directory unless absolute.

pub mod augment;
pub mod fixture;
pub mod pad;
pub mod png;
pub mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use augment::{augment, AugmentConfig, Transform};
pub use fixture::{synthetic_sample, synthetic_set};
pub use pad::{crop_to, pad_to_multiple, pad_to_multiple_with};
pub use png::{read_mask, read_png, read_rgb, write_png16};
pub use synth::{fit_alpha, fit_alpha_masked, generate_mit_shading, resynthesize, GeneratedShading};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One training or evaluation example. Images are 1×3×H×W in linear
/// [0, 1]; the mask is 1×1×H×W with 1 for valid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub scene: String,
    pub image: Tensor<f64>,
    pub albedo: Tensor<f64>,
    pub shading: Tensor<f64>,
    pub mask: Tensor<f64>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape().h
    }

    pub fn width(&self) -> usize {
        self.image.shape().w
    }

    pub fn valid_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    #[default]
    Image,
    Scene,
    Object,
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?} (expected train or test)"))),
        }
    }
}

impl FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(SplitMode::Image),
            "scene" => Ok(SplitMode::Scene),
            "object" => Ok(SplitMode::Object),
            _ => Err(Error::invalid(format!("unknown split mode {s:?} (expected image, scene or object)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Image => "image",
            SplitMode::Scene => "scene",
            SplitMode::Object => "object",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub albedo: PathBuf,
    pub shading: PathBuf,
    pub mask: Option<PathBuf>,
    /// Scene id (Sintel) or object id (MIT).
    pub scene: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetManifest {
    pub split_mode: SplitMode,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| Error::file(path, e.to_string()))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m = DatasetManifest {
            base_dir: base_dir.to_path_buf(),
            ..Default::default()
        };
        let mut split = Split::Train;
        for (lineno, line) in text.lines().enumerate() {
            let at = |e: Error| Error::invalid(format!("line {}: {e}", lineno + 1));
            let trimmed = line.trim();
            if let Some(directive) = trimmed.strip_prefix("#@") {
                let mut parts = directive.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("split-mode"), Some(v), None) => m.split_mode = v.parse().map_err(at)?,
                    (Some("split"), Some(v), None) => split = v.parse().map_err(at)?,
                    _ => return Err(at(Error::invalid(format!("unknown directive {trimmed:?}")))),
                }
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            let (mask, scene) = match f.len() {
                5 => (None, f[4]),
                6 => (Some(PathBuf::from(f[4])), f[5]),
                n => {
                    return Err(at(Error::invalid(format!(
                        "expected 5 or 6 tab-separated fields (id image albedo shading [mask] scene), found {n}"
                    ))))
                }
            };
            if f.iter().any(|s| s.is_empty()) {
                return Err(at(Error::invalid("empty field")));
            }
            m.entries.push(ManifestEntry {
                id: f[0].to_string(),
                image: f[1].into(),
                albedo: f[2].into(),
                shading: f[3].into(),
                mask,
                scene: scene.to_string(),
                split,
            });
        }
        m.validate()?;
        Ok(m)
    }

    /// Rejects duplicate ids and, in scene or object mode, any group that
    /// appears in both splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {}", e.id)));
            }
        }
        if self.split_mode != SplitMode::Image {
            let mut seen: HashMap<&str, Split> = HashMap::new();
            for e in &self.entries {
                match seen.get(e.scene.as_str()) {
                    Some(&s) if s != e.split => {
                        let what = if self.split_mode == SplitMode::Scene { "scene" } else { "object" };
                        return Err(Error::invalid(format!(
                            "{what} {} appears in both train and test ({}-split manifest)",
                            e.scene, self.split_mode
                        )));
                    }
                    _ => {
                        seen.insert(&e.scene, e.split);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#@ split-mode {}\n", self.split_mode);
        let mut current = None;
        for e in &self.entries {
            if current != Some(e.split) {
                out.push_str(&format!("#@ split {}\n", e.split));
                current = Some(e.split);
            }
            let mut fields = vec![e.id.clone(), show(&e.image), show(&e.albedo), show(&e.shading)];
            if let Some(m) = &e.mask {
                fields.push(show(m));
            }
            fields.push(e.scene.clone());
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

fn show(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Decodes one manifest record. Gray albedo or shading files are
/// replicated to three channels; a missing mask means all pixels are valid.
pub fn load_sample(manifest: &DatasetManifest, e: &ManifestEntry) -> Result<Sample> {
    let ctx = |err: Error| Error::invalid(format!("sample {}: {err}", e.id));
    let image = read_rgb(&manifest.resolve(&e.image)).map_err(ctx)?;
    let albedo = read_rgb(&manifest.resolve(&e.albedo)).map_err(ctx)?;
    let shading = read_rgb(&manifest.resolve(&e.shading)).map_err(ctx)?;
    let s = image.shape();
    let mask = match &e.mask {
        Some(p) => read_mask(&manifest.resolve(p)).map_err(ctx)?,
        None => Tensor::full(s.with_c(1), 1.0),
    };
    for (what, t) in [("albedo", &albedo), ("shading", &shading), ("mask", &mask)] {
        let o = t.shape();
        if (o.h, o.w) != (s.h, s.w) {
            return Err(ctx(Error::shape(
                "load_sample",
                format!("{what} is {}x{} but image is {}x{}", o.h, o.w, s.h, s.w),
            )));
        }
    }
    Ok(Sample {
        id: e.id.clone(),
        scene: e.scene.clone(),
        image,
        albedo,
        shading,
        mask,
    })
}

/// Lazily loads the records of `manifest`, optionally restricted to one split.
pub fn load_dataset<'a>(
    manifest: &'a DatasetManifest,
    split: Option<Split>,
) -> impl Iterator<Item = Result<Sample>> + 'a {
    manifest
        .entries
        .iter()
        .filter(move |e| split.is_none_or(|s| e.split == s))
        .map(move |e| load_sample(manifest, e))
}

/// Loads every selected record, decoding in parallel; fails on the first
/// bad record in manifest order.
pub fn load_all(manifest: &DatasetManifest, split: Option<Split>) -> Result<Vec<Sample>> {
    let entries: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    crate::exec::map_indexed(entries.len(), |i| load_sample(manifest, entries[i]))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn write_triple(dir: &Path, id: &str, h: usize, w: usize) {
        let a = Tensor::from_fn(Shape::of(1, 3, h, w), |_, c, y, x| 0.2 + 0.1 * c as f64 + 0.01 * (x + y) as f64);
        let s = Tensor::full(Shape::of(1, 1, h, w), 0.5);
        write_png16(&dir.join(format!("{id}_a.png")), &a).unwrap();
        write_png16(&dir.join(format!("{id}_s.png")), &s).unwrap();
        write_png16(&dir.join(format!("{id}_i.png")), &resynthesize(&a, &s).unwrap()).unwrap();
    }

    fn line(id: &str, scene: &str) -> String {
        format!("{id}\t{id}_i.png\t{id}_a.png\t{id}_s.png\t{scene}\n")
    }

    #[test]
    fn one_valid_triple_loads_with_full_mask() {
        let dir = tempfile::tempdir().unwrap();
        write_triple(dir.path(), "x", 6, 9);
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, format!("# test\n{}", line("x", "sc"))).unwrap();
        let m = DatasetManifest::read(&path).unwrap();
        let samples: Vec<Sample> = load_dataset(&m, None).collect::<Result<_>>().unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.shading.shape(), Shape::of(1, 3, 6, 9));
        assert_eq!(s.valid_count(), 54);
        assert!(s.image.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn mismatched_extents_name_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        write_triple(dir.path(), "x", 6, 9);
        write_triple(dir.path(), "y", 7, 9);
        let text = "bad\tx_i.png\ty_a.png\tx_s.png\tsc\n";
        let m = DatasetManifest::parse(text, dir.path()).unwrap();
        let err = load_all(&m, None).unwrap_err().to_string();
        assert!(err.contains("sample bad"), "{err}");
    }

    #[test]
    fn missing_file_names_the_path() {
        let m = DatasetManifest::parse(&line("q", "s"), Path::new("/nonexistent")).unwrap();
        let err = load_all(&m, None).unwrap_err().to_string();
        assert!(err.contains("q_i.png"), "{err}");
    }

    #[test]
    fn scene_split_rejects_shared_scene() {
        let text = format!(
            "#@ split-mode scene\n#@ split train\n{}#@ split test\n{}",
            line("a", "alley"),
            line("b", "alley")
        );
        let err = DatasetManifest::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("alley"));
        let ok = text.replace("split-mode scene", "split-mode image");
        assert!(DatasetManifest::parse(&ok, Path::new(".")).is_ok());
        let obj = text.replace("split-mode scene", "split-mode object");
        assert!(DatasetManifest::parse(&obj, Path::new(".")).unwrap_err().to_string().contains("object"));
    }

    #[test]
    fn duplicate_ids_and_bad_lines_rejected() {
        let dup = format!("{}{}", line("a", "s1"), line("a", "s2"));
        assert!(DatasetManifest::parse(&dup, Path::new(".")).is_err());
        assert!(DatasetManifest::parse("a\tb\tc\n", Path::new(".")).is_err());
        assert!(DatasetManifest::parse("#@ bogus\n", Path::new(".")).is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = format!(
            "#@ split-mode scene\n#@ split train\n{}a2\ti\ta\ts\tm.png\tsc2\n#@ split test\n{}",
            line("a", "sc"),
            line("b", "sc3")
        );
        let m = DatasetManifest::parse(&text, Path::new("base")).unwrap();
        assert_eq!(m.entries[1].mask.as_deref(), Some(Path::new("m.png")));
        assert_eq!(m.split(Split::Test).count(), 1);
        let again = DatasetManifest::parse(&m.to_text(), Path::new("base")).unwrap();
        assert_eq!(again, m);
        assert_eq!(m.resolve(Path::new("x.png")), Path::new("base/x.png"));
    }
}
