//! Seeded toy segmentation cases: three nested ellipses on a noisy
//! background.
//!
//! Class 1 is the outer ellipse minus the middle one, class 2 the middle minus
//! the inner one, class 3 the inner ellipse. Each ellipse contains the disc
//! around its centre whose radius is its larger semi-axis, and that disc is
//! placed inside the parent's inscribed disc, so nesting holds by
//! construction. The inner ellipse's larger diameter is at most a quarter of
//! the outer ellipse's smaller diameter. Every case draws from its own
//! ChaCha8 stream `(seed, index)`, so any subset can be regenerated alone.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::segmetrics::{ClassMap, LabelMask};
use crate::tensorad::{Scalar, Tensor};
use crate::{Error, Result};

pub const NUM_CLASSES: u8 = 4;
pub const GENERATOR: &str = "mgnets-synthdata";
pub const GENERATOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Mean intensity of background, outer, middle and inner regions.
const LEVELS: [f64; 4] = [0.0, 0.45, 0.7, 1.0];
const NOISE_FRACTION: f64 = 0.1;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, i: f64, j: f64) -> bool {
        let (di, dj) = (i - self.center.0, j - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = c * di + s * dj;
        let v = -s * di + c * dj;
        (u / self.semi_axes.0).powi(2) + (v / self.semi_axes.1).powi(2) <= 1.0
    }

    fn min_axis(&self) -> f64 {
        self.semi_axes.0.min(self.semi_axes.1)
    }

    fn max_axis(&self) -> f64 {
        self.semi_axes.0.max(self.semi_axes.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub case_id: String,
    pub seed: u64,
    pub index: usize,
    /// Shape (1, size, size).
    pub image: Tensor<f32>,
    pub labels: LabelMask,
    /// Outer, middle and inner ellipse.
    pub ellipses: [Ellipse; 3],
}

fn random_ellipse(rng: &mut ChaCha8Rng, lo: f64, hi: f64, center: (f64, f64)) -> Ellipse {
    Ellipse {
        center,
        semi_axes: (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)),
        angle: rng.gen_range(0.0..PI),
    }
}

/// A centre whose disc of radius `r` stays inside the parent's inscribed disc.
fn nested_center(rng: &mut ChaCha8Rng, parent: &Ellipse, r: f64) -> (f64, f64) {
    let slack = (parent.min_axis() - r).max(0.0);
    let rho = slack * rng.gen::<f64>().sqrt();
    let phi = rng.gen_range(0.0..2.0 * PI);
    (parent.center.0 + rho * phi.cos(), parent.center.1 + rho * phi.sin())
}

fn sample_ellipses(rng: &mut ChaCha8Rng, size: usize) -> [Ellipse; 3] {
    let s = size as f64;
    let (lo, hi) = (0.15 * s, 0.35 * s);
    let a = rng.gen_range(lo..=hi);
    let b = rng.gen_range(lo..=hi);
    let r = a.max(b);
    let margin = r + 1.0;
    let c = (rng.gen_range(margin..=s - 1.0 - margin), rng.gen_range(margin..=s - 1.0 - margin));
    let outer = Ellipse {
        center: c,
        semi_axes: (a, b),
        angle: rng.gen_range(0.0..PI),
    };
    let m1 = outer.min_axis();
    let mut middle = random_ellipse(rng, 0.35 * m1, 0.6 * m1, (0.0, 0.0));
    middle.center = nested_center(rng, &outer, middle.max_axis());
    let hi3 = (0.25 * m1).min(0.7 * middle.min_axis());
    let mut inner = random_ellipse(rng, (0.5 * hi3).max(0.75).min(hi3), hi3, (0.0, 0.0));
    inner.center = nested_center(rng, &middle, inner.max_axis());
    [outer, middle, inner]
}

fn rasterize(size: usize, e: &[Ellipse; 3]) -> Vec<u8> {
    let mut labels = vec![0u8; size * size];
    for i in 0..size {
        for j in 0..size {
            let (x, y) = (i as f64, j as f64);
            labels[i * size + j] = if e[2].contains(x, y) {
                3
            } else if e[1].contains(x, y) {
                2
            } else if e[0].contains(x, y) {
                1
            } else {
                0
            };
        }
    }
    labels
}

fn counts_ordered(labels: &[u8]) -> bool {
    let mut c = [0usize; 4];
    for &l in labels {
        c[l as usize] += 1;
    }
    c[1] > c[2] && c[2] > c[3] && c[3] >= 1
}

fn check_size(size: usize) -> Result<()> {
    if size < 32 || !size.is_power_of_two() {
        return Err(Error::invalid(format!("image size must be a power of two ≥ 32, got {size}")));
    }
    Ok(())
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

/// The case with the given index; independent of every other case.
pub fn generate_case(size: usize, seed: u64, index: usize) -> Result<SynthCase> {
    check_size(size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (ellipses, labels) = (0..MAX_ATTEMPTS)
        .map(|_| {
            let e = sample_ellipses(&mut rng, size);
            let l = rasterize(size, &e);
            (e, l)
        })
        .find(|(_, l)| counts_ordered(l))
        .ok_or_else(|| Error::invalid(format!("could not place nested ellipses at size {size}")))?;
    let range = LEVELS[3] - LEVELS[0];
    let noise = Normal::new(0.0, NOISE_FRACTION * range).expect("positive sigma");
    let pixels: Vec<f32> = labels
        .iter()
        .map(|&l| (LEVELS[l as usize] + noise.sample(&mut rng)) as f32)
        .collect();
    Ok(SynthCase {
        case_id: case_id(index),
        seed,
        index,
        image: Tensor::new(&[1, size, size], pixels)?,
        labels: LabelMask::isotropic(&[size, size], labels, NUM_CLASSES)?,
        ellipses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub index: usize,
    /// Relative to the dataset directory.
    pub image: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub version: u32,
    pub seed: u64,
    pub size: usize,
    pub num_classes: u8,
    pub class_map: ClassMap,
    pub cases: Vec<ManifestEntry>,
}

/// Writes `count` cases and `manifest.json` into `out`.
pub fn generate(count: usize, size: usize, seed: u64, out: &Path) -> Result<DatasetManifest> {
    check_size(size)?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    fs::create_dir_all(out)?;
    let mut cases = Vec::with_capacity(count);
    for index in 0..count {
        let case = generate_case(size, seed, index)?;
        let entry = ManifestEntry {
            case_id: case.case_id.clone(),
            index,
            image: format!("{}_image.tsr", case.case_id),
            labels: format!("{}_labels.tsr", case.case_id),
        };
        case.image.save(out.join(&entry.image))?;
        labels_tensor(&case.labels).save(out.join(&entry.labels))?;
        cases.push(entry);
    }
    let manifest = DatasetManifest {
        generator: GENERATOR.into(),
        version: GENERATOR_VERSION,
        seed,
        size,
        num_classes: NUM_CLASSES,
        class_map: ClassMap::nested(),
        cases,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn labels_tensor(labels: &LabelMask) -> Tensor<f32> {
    Tensor::new(labels.shape(), labels.labels().iter().map(|&l| f32::from(l)).collect()).expect("mask shape")
}

/// A stored case; the ellipse parameters are not kept on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCase {
    pub case_id: String,
    pub image: Tensor<f32>,
    pub labels: LabelMask,
}

impl From<SynthCase> for StoredCase {
    fn from(c: SynthCase) -> Self {
        StoredCase {
            case_id: c.case_id,
            image: c.image,
            labels: c.labels,
        }
    }
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "dataset",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| format_error(&path, e.to_string()))?;
    let mut seen = HashSet::new();
    for c in &manifest.cases {
        if !seen.insert(&c.case_id) {
            return Err(format_error(&path, format!("duplicate case id {}", c.case_id)));
        }
    }
    Ok(manifest)
}

/// Loads and validates every case listed in `dir/manifest.json`.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<StoredCase>)> {
    let manifest = read_manifest(dir)?;
    let size = manifest.size;
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for entry in &manifest.cases {
        let image_path: PathBuf = dir.join(&entry.image);
        let image = Tensor::<f32>::load(&image_path)?;
        if image.shape() != [1, size, size] {
            return Err(format_error(&image_path, format!("image shape {:?}", image.shape())));
        }
        let label_path = dir.join(&entry.labels);
        let raw = Tensor::<f32>::load(&label_path)?;
        if raw.shape() != [size, size] {
            return Err(format_error(&label_path, format!("label shape {:?}", raw.shape())));
        }
        let mut labels = Vec::with_capacity(raw.len());
        for &v in raw.data() {
            if v.fract() != 0.0 || v < 0.0 || v >= f32::from(manifest.num_classes) {
                return Err(format_error(&label_path, format!("label value {v}")));
            }
            labels.push(v as u8);
        }
        cases.push(StoredCase {
            case_id: entry.case_id.clone(),
            image,
            labels: LabelMask::isotropic(&[size, size], labels, manifest.num_classes)?,
        });
    }
    Ok((manifest, cases))
}

/// Z-score over the non-zero pixels; zero pixels are left at zero.
pub fn normalize_zscore_nonzero(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let nz: Vec<f64> = image.data().iter().filter(|&&v| v != 0.0).map(|&v| f64::from(v)).collect();
    if nz.len() < 2 {
        return Err(Error::invalid("z-score normalisation needs at least two non-zero pixels"));
    }
    let n = nz.len() as f64;
    let mean = nz.iter().sum::<f64>() / n;
    let var = nz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 1e-12 {
        return Err(Error::invalid("non-zero pixels have degenerate variance"));
    }
    let sd = var.sqrt();
    let data = image
        .data()
        .iter()
        .map(|&v| if v == 0.0 { 0.0 } else { ((f64::from(v) - mean) / sd) as f32 })
        .collect();
    Tensor::new(image.shape(), data)
}

/// Channel-first one-hot encoding, shape (classes, spatial dims...).
pub fn to_onehot<T: Scalar>(labels: &LabelMask, num_classes: usize) -> Result<Tensor<T>> {
    let plane = labels.labels().len();
    let mut shape = vec![num_classes];
    shape.extend_from_slice(labels.shape());
    let mut t = Tensor::zeros(&shape);
    for (p, &l) in labels.labels().iter().enumerate() {
        if l as usize >= num_classes {
            return Err(Error::invalid(format!("label {l} is outside 0..{num_classes}")));
        }
        t.data_mut()[l as usize * plane + p] = T::one();
    }
    Ok(t)
}
