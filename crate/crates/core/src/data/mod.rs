//! Synthetic shapes dataset: generation, splits and on-disk layout.
//!
//! ```text
//! <root>/images/00000.ppm   P6 RGB, ids 0..train_count+val_count
//! <root>/labels/00000.pgm   P5 class ids
//! <root>/manifest.json      {"labeled", "unlabeled", "val", "fraction"}
//! ```
//!
//! Validation ids follow the training ids.

pub mod netpbm;
pub mod shapes;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Image, LabelMask, Result, RngStream};
pub use shapes::{Geometry, Shape, ShapeConfig};

pub const NUM_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "circle", "rectangle", "triangle"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub image_size: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub noise_sigma: f64,
    pub label_fraction: f64,
    /// Falls back to the run seed when absent.
    pub seed: Option<u64>,
    pub shapes: ShapeConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            train_count: 512,
            val_count: 128,
            noise_sigma: 0.05,
            label_fraction: 1.0 / 16.0,
            seed: None,
            shapes: ShapeConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.val_count == 0 {
            return Err(Error::Config("train_count and val_count must be >= 1".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Config(format!("image_size {} < 8", self.image_size)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        let s = &self.shapes;
        for (name, [lo, hi]) in [("circle_radius", s.circle_radius), ("rect_side", s.rect_side), ("triangle_radius", s.triangle_radius)] {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("shapes.{name} [{lo}, {hi}] must satisfy 0 < lo <= hi")));
            }
        }
        for (name, [lo, hi]) in [
            ("background_saturation", s.background_saturation),
            ("background_value", s.background_value),
            ("shape_saturation", s.shape_saturation),
            ("shape_value", s.shape_value),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("shapes.{name} [{lo}, {hi}] must lie in [0, 1] with lo <= hi")));
            }
        }
        if s.max_shapes == 0 {
            return Err(Error::Config("shapes.max_shapes must be >= 1".into()));
        }
        label_count(self.label_fraction, self.train_count).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.train_count + self.val_count
    }
}

/// One rendered sample before quantization to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: LabelMask,
    pub background: [f32; 3],
    pub shapes: Vec<Shape>,
}

/// Render sample `id`; depends only on `(seed, id)` and the spec.
pub fn render_sample(spec: &DatasetSpec, seed: u64, id: usize) -> Result<Sample> {
    let mut s = RngStream::new(seed).child("dataset").child(id);
    let n = spec.image_size;
    let background = shapes::random_background(&mut s, &spec.shapes)?;
    let count = 1 + s.below(spec.shapes.max_shapes);
    let shapes = (0..count)
        .map(|_| shapes::random_shape(&mut s, n, background, &spec.shapes))
        .collect::<Result<Vec<_>>>()?;
    let labels = shapes::rasterize(&shapes, n, n);
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let color = shapes.iter().rev().find(|sh| sh.contains(px, py)).map_or(background, |sh| sh.color);
            for c in color {
                let v = c as f64 + spec.noise_sigma * s.normal();
                data.push(crate::raster::from_level(crate::raster::to_level(v as f32)));
            }
        }
    }
    Ok(Sample {
        image: Image::new(n, n, data)?,
        label: LabelMask::new(n, n, labels)?,
        background,
        shapes,
    })
}

fn label_count(fraction: f64, train_count: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("label fraction {fraction} outside (0, 1]")));
    }
    let n = (fraction * train_count as f64).round() as usize;
    if n == 0 {
        return Err(Error::Argument(format!("fraction {fraction} of {train_count} images labels none")));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub val: Vec<usize>,
    pub fraction: f64,
}

/// Uniformly choose `round(fraction * train_count)` labeled ids; ids are
/// listed in ascending order.
pub fn make_split(seed: u64, fraction: f64, train_count: usize, val_count: usize) -> Result<SplitManifest> {
    let n = label_count(fraction, train_count)?;
    let perm = RngStream::new(seed).child("split").permutation(train_count)?;
    let mut labeled = perm[..n].to_vec();
    let mut unlabeled = perm[n..].to_vec();
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(SplitManifest { labeled, unlabeled, val: (train_count..train_count + val_count).collect(), fraction })
}

impl SplitManifest {
    pub fn validate(&self) -> Result<()> {
        let l: BTreeSet<_> = self.labeled.iter().collect();
        let u: BTreeSet<_> = self.unlabeled.iter().collect();
        let v: BTreeSet<_> = self.val.iter().collect();
        if self.labeled.is_empty() {
            return Err(Error::format("labeled", "no labeled ids"));
        }
        if self.val.is_empty() {
            return Err(Error::format("val", "no validation ids"));
        }
        if l.len() != self.labeled.len() || u.len() != self.unlabeled.len() || v.len() != self.val.len() {
            return Err(Error::format("labeled", "duplicate ids"));
        }
        if l.intersection(&u).next().is_some() || l.intersection(&v).next().is_some() || u.intersection(&v).next().is_some() {
            return Err(Error::format("unlabeled", "id sets overlap"));
        }
        Ok(())
    }

    pub fn train_count(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }
}

pub fn image_path(root: &Path, id: usize) -> PathBuf {
    root.join("images").join(format!("{id:05}.ppm"))
}

pub fn label_path(root: &Path, id: usize) -> PathBuf {
    root.join("labels").join(format!("{id:05}.pgm"))
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Write every image, label and the manifest under `root`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64, root: &Path) -> Result<SplitManifest> {
    spec.validate()?;
    mkdir(&root.join("images"))?;
    mkdir(&root.join("labels"))?;
    for id in 0..spec.total() {
        let sample = render_sample(spec, seed, id)?;
        netpbm::write_ppm(image_path(root, id), &sample.image)?;
        let (h, w) = sample.label.dims();
        netpbm::write_pgm(label_path(root, id), h, w, sample.label.data())?;
    }
    let manifest = make_split(seed, spec.label_fraction, spec.train_count, spec.val_count)?;
    save_manifest(root, &manifest)?;
    Ok(manifest)
}

pub fn save_manifest(root: &Path, manifest: &SplitManifest) -> Result<()> {
    let path = manifest_path(root);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_manifest(root: &Path) -> Result<SplitManifest> {
    let path = manifest_path(root);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: SplitManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))?;
    m.validate()?;
    Ok(m)
}

/// Read an image and, when a label path is given, its mask.
pub fn load_sample(image: &Path, label: Option<&Path>) -> Result<(Image, Option<LabelMask>)> {
    let img = netpbm::read_ppm(image)?;
    let Some(label) = label else { return Ok((img, None)) };
    let (h, w, levels) = netpbm::read_pgm(label)?;
    if (h, w) != img.dims() {
        return Err(Error::format(
            "height",
            format!("{}: label {h}x{w} vs image {:?}", label.display(), img.dims()),
        ));
    }
    let mask = LabelMask::new(h, w, levels)?;
    mask.validate(NUM_CLASSES)
        .map_err(|e| Error::format("pixels", format!("{}: {e}", label.display())))?;
    Ok((img, Some(mask)))
}

/// Whole dataset in memory, indexed by id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: SplitManifest,
    pub images: Vec<Image>,
    pub labels: Vec<LabelMask>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest = load_manifest(root)?;
        let max = manifest.labeled.iter().chain(&manifest.unlabeled).chain(&manifest.val).max().copied().unwrap_or(0);
        let mut images = Vec::with_capacity(max + 1);
        let mut labels = Vec::with_capacity(max + 1);
        for id in 0..=max {
            let (img, lbl) = load_sample(&image_path(root, id), Some(&label_path(root, id)))?;
            images.push(img);
            labels.push(lbl.expect("label requested"));
        }
        Ok(Self { manifest, images, labels })
    }

    /// Build from in-memory samples indexed by id.
    pub fn from_samples(manifest: SplitManifest, samples: Vec<(Image, LabelMask)>) -> Result<Self> {
        manifest.validate()?;
        let (images, labels): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
        if let Some(id) = manifest.labeled.iter().chain(&manifest.unlabeled).chain(&manifest.val).find(|&&id| id >= images.len()) {
            return Err(Error::Structural(format!("manifest id {id} has no sample")));
        }
        Ok(Self { manifest, images, labels })
    }

    /// Render in memory without touching the disk.
    pub fn synthesize(spec: &DatasetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let samples = (0..spec.total())
            .map(|id| render_sample(spec, seed, id).map(|s| (s.image, s.label)))
            .collect::<Result<Vec<_>>>()?;
        let manifest = make_split(seed, spec.label_fraction, spec.train_count, spec.val_count)?;
        Self::from_samples(manifest, samples)
    }
}
