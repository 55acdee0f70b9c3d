//! Frame/map datasets: a directory loader, a deterministic synthetic scene
//! generator, batching and image I/O.
//!
//! Directory layout:
//!
//! ```text
//! root/frames/<id>.png      RGB frame
//! root/maps/<id>.png        8-bit grayscale attention map
//! root/fixations/<id>.txt   optional, one "row col" pair per line
//! ```
//!
//! Fixation coordinates are in the source frame's resolution and are rescaled
//! with the frame. Without a fixations file they are recovered from the map
//! with [`fixations_from_map`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use image::{imageops::FilterType, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::metrics::{fixations_from_map, AttentionMap, FixationSet};

/// One frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `3 x S x S`, channel-major, values in `[0, 1]`.
    pub image: Vec<f32>,
    /// Max-normalised ground truth on the `S x S` grid.
    pub gt_map: AttentionMap,
    pub fixations: FixationSet,
}

impl Sample {
    /// Checks the type invariants and builds the sample.
    pub fn new(id: String, image: Vec<f32>, gt_map: AttentionMap, fixations: FixationSet) -> Result<Self> {
        let (h, w) = (gt_map.height, gt_map.width);
        if image.len() != 3 * h * w {
            return Err(Error::shape(format!("image of {id}"), &[3, h, w], &[image.len()]));
        }
        if image.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("image of {id} leaves [0, 1]")));
        }
        if !(gt_map.max() > 0.0) || gt_map.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("gt map of {id} must lie in [0, 1] with positive max")));
        }
        if fixations.frame_shape != (h, w) || fixations.is_empty() {
            return Err(Error::EmptyFix);
        }
        Ok(Sample {
            id,
            image,
            gt_map,
            fixations,
        })
    }

    pub fn side(&self) -> usize {
        self.gt_map.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn salt(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e00_0000,
            Split::Val => 0x7661_6c00_0000_0000,
            Split::Test => 0x7465_7374_0000_0000,
        }
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Directory {
        root: PathBuf,
        side: usize,
        fixation_threshold: f64,
    },
    Synthetic {
        synth: SynthConfig,
        split: Split,
        side: usize,
        fixation_threshold: f64,
    },
}

impl DatasetSpec {
    /// Synthetic spec sized by `synth.n_train` or `synth.n_val`.
    pub fn synthetic(synth: &SynthConfig, split: Split, side: usize, fixation_threshold: f64) -> Self {
        DatasetSpec::Synthetic {
            synth: synth.clone(),
            split,
            side,
            fixation_threshold,
        }
    }
}

/// An immutable, fully loaded list of samples at a common side.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub side: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Hex SHA-256 over ids, image bytes and map bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.id.as_bytes());
            for v in &s.image {
                h.update(v.to_le_bytes());
            }
            for v in &s.gt_map.values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes the dataset in the directory layout, with explicit fixation
    /// files so a reload reproduces the same fixation sets.
    pub fn save(&self, root: &Path) -> Result<()> {
        for sub in ["frames", "maps", "fixations"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for s in &self.samples {
            image_to_rgb(&s.image, s.side()).save(root.join("frames").join(format!("{}.png", s.id)))?;
            map_to_gray(&s.gt_map).save(root.join("maps").join(format!("{}.png", s.id)))?;
            let text: String = s.fixations.points.iter().map(|(r, c)| format!("{r} {c}\n")).collect();
            let p = root.join("fixations").join(format!("{}.txt", s.id));
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Loads or generates the dataset described by `spec`.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::Directory {
            root,
            side,
            fixation_threshold,
        } => load_directory(root, *side, *fixation_threshold),
        DatasetSpec::Synthetic { .. } => synth_generate(spec),
    }
}

fn stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

fn load_directory(root: &Path, side: usize, theta: f64) -> Result<Dataset> {
    let frames = stems(&root.join("frames"))?;
    let maps = stems(&root.join("maps"))?;
    if let Some(id) = frames.symmetric_difference(&maps).next() {
        return Err(Error::MissingPair(id.clone()));
    }
    let mut samples = Vec::with_capacity(frames.len());
    for id in &frames {
        let frame_path = root.join("frames").join(format!("{id}.png"));
        let (image, (src_w, src_h)) = load_image(&frame_path, side)?;
        let map_path = root.join("maps").join(format!("{id}.png"));
        let map = image::open(&map_path)?.to_luma32f();
        let map = image::imageops::resize(&map, side as u32, side as u32, FilterType::Triangle);
        let raw: Vec<f64> = map.pixels().map(|p| p.0[0].max(0.0) as f64).collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            log::warn!("skipping {id}: attention map has no mass");
            continue;
        }
        let gt = AttentionMap::new(side, side, raw.iter().map(|v| v / max).collect())?;
        let fix_path = root.join("fixations").join(format!("{id}.txt"));
        let fixations = if fix_path.exists() {
            read_fixations(&fix_path, (src_h as usize, src_w as usize), side)?
        } else {
            fixations_from_map(&gt, theta)?
        };
        if fixations.is_empty() {
            log::warn!("skipping {id}: no fixations");
            continue;
        }
        samples.push(Sample::new(id.clone(), image, gt, fixations)?);
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("no usable samples under {}", root.display())));
    }
    Ok(Dataset { side, samples })
}

fn read_fixations(path: &Path, src: (usize, usize), side: usize) -> Result<FixationSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Domain(format!("{}:{}: expected \"row col\"", path.display(), n + 1)))?;
        let [r, c] = nums[..] else {
            return Err(Error::Domain(format!("{}:{}: expected \"row col\"", path.display(), n + 1)));
        };
        if r >= src.0 || c >= src.1 {
            return Err(Error::Domain(format!("{}:{}: fixation outside frame", path.display(), n + 1)));
        }
        points.push((r * side / src.0, c * side / src.1));
    }
    FixationSet::new(points, (side, side))
}

/// Reads an image, resizes it to `side x side` and returns channel-major
/// values in `[0, 1]` with the source `(width, height)`.
pub fn load_image(path: &Path, side: usize) -> Result<(Vec<f32>, (u32, u32))> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let img = image::open(path)?.to_rgb32f();
    let size = img.dimensions();
    let img = image::imageops::resize(&img, side as u32, side as u32, FilterType::Triangle);
    let n = side * side;
    let mut out = vec![0.0f32; 3 * n];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * n + i] = p.0[c].clamp(0.0, 1.0);
        }
    }
    Ok((out, size))
}

fn image_to_rgb(image: &[f32], side: usize) -> RgbImage {
    let n = side * side;
    ImageBuffer::from_fn(side as u32, side as u32, |x, y| {
        let i = y as usize * side + x as usize;
        Rgb([0, 1, 2].map(|c| (image[c * n + i] * 255.0).round() as u8))
    })
}

/// Grayscale PNG pixels of a map assumed to lie in `[0, 1]`.
pub fn map_to_gray(map: &AttentionMap) -> GrayImage {
    ImageBuffer::from_fn(map.width as u32, map.height as u32, |x, y| {
        let v = map.get(y as usize, x as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

struct Blob {
    pos: (f64, f64),
    vel: (f64, f64),
    radius: f64,
    color: [f32; 3],
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let t = (x - lo).rem_euclid(2.0 * span);
    lo + if t > span { 2.0 * span - t } else { t }
}

/// Deterministic synthetic scenes. Each clip of `frames_per_clip` frames has
/// a fixed textured background and `n_blobs` coloured discs drifting in
/// straight lines. The attended blob in each frame is the one nearest the
/// vertical centre line; the ground truth is a Gaussian on it plus weaker
/// Gaussians on the others, max-normalised. Frames are emitted in clip order.
pub fn synth_generate(spec: &DatasetSpec) -> Result<Dataset> {
    Ok(synth_with_centres(spec)?.0)
}

/// Also returns the attended blob centre `(row, col)` of every sample.
pub(crate) fn synth_with_centres(spec: &DatasetSpec) -> Result<(Dataset, Vec<(f64, f64)>)> {
    let DatasetSpec::Synthetic {
        synth,
        split,
        side,
        fixation_threshold,
    } = spec
    else {
        return Err(Error::Config("synth_generate needs a synthetic spec".into()));
    };
    let n = match split {
        Split::Train => synth.n_train,
        Split::Val | Split::Test => synth.n_val,
    };
    if n == 0 || synth.n_blobs == 0 || synth.frames_per_clip == 0 {
        return Err(Error::Config("synthetic data needs samples, blobs and frames per clip".into()));
    }
    if !(0.0 < synth.blob_radius_min && synth.blob_radius_min <= synth.blob_radius_max) {
        return Err(Error::Config("blob radius range must satisfy 0 < min <= max".into()));
    }
    let s = *side;
    let sf = s as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(synth.data_seed ^ split.salt());
    let mut samples = Vec::with_capacity(n);
    let mut centres = Vec::with_capacity(n);
    let mut clip = 0;
    while samples.len() < n {
        let background = texture(&mut rng, s);
        let mut blobs: Vec<Blob> = (0..synth.n_blobs)
            .map(|_| {
                let radius = rng.random_range(synth.blob_radius_min..=synth.blob_radius_max) * sf;
                let hue = rng.random_range(0.0..1.0);
                Blob {
                    pos: (rng.random_range(0.15..0.85) * sf, rng.random_range(0.15..0.85) * sf),
                    vel: (rng.random_range(-0.02..0.02) * sf, rng.random_range(-0.02..0.02) * sf),
                    radius,
                    color: hue_color(hue),
                }
            })
            .collect();
        for frame in 0..synth.frames_per_clip {
            if samples.len() == n {
                break;
            }
            if frame > 0 {
                for b in &mut blobs {
                    b.pos.0 = reflect(b.pos.0 + b.vel.0, 0.1 * sf, 0.9 * sf);
                    b.pos.1 = reflect(b.pos.1 + b.vel.1, 0.1 * sf, 0.9 * sf);
                }
            }
            let id = format!("clip{clip:04}_f{frame:03}");
            let (sample, centre) = render(id, &background, &blobs, s, *fixation_threshold)?;
            samples.push(sample);
            centres.push(centre);
        }
        clip += 1;
    }
    Ok((Dataset { side: s, samples }, centres))
}

fn hue_color(h: f64) -> [f32; 3] {
    let f = |k: f64| {
        let v = ((h * 6.0 + k) % 6.0 - 3.0).abs() - 1.0;
        (0.15 + 0.85 * v.clamp(0.0, 1.0)) as f32
    };
    [f(0.0), f(4.0), f(2.0)]
}

/// Low-contrast grey texture: a vertical gradient plus a few random sinusoids.
fn texture(rng: &mut ChaCha8Rng, s: usize) -> Vec<f32> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..6.0),
                rng.random_range(0.5..6.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.06),
            )
        })
        .collect();
    let tint: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-0.05..0.05));
    let n = s * s;
    let mut out = vec![0.0; 3 * n];
    for r in 0..s {
        for c in 0..s {
            let (y, x) = (r as f64 / s as f64, c as f64 / s as f64);
            let mut v = 0.35 + 0.15 * y;
            for (fx, fy, ph, amp) in &waves {
                v += amp * (std::f64::consts::TAU * (fx * x + fy * y) + ph).sin();
            }
            for ch in 0..3 {
                out[ch * n + r * s + c] = (v + tint[ch]).clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

fn render(id: String, background: &[f32], blobs: &[Blob], s: usize, theta: f64) -> Result<(Sample, (f64, f64))> {
    let n = s * s;
    let centre = s as f64 / 2.0;
    let attended = blobs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.pos.1 - centre).abs().total_cmp(&(b.1.pos.1 - centre).abs()))
        .map(|(i, _)| i)
        .expect("at least one blob");
    let mut image = background.to_vec();
    let mut gt = vec![0.0f64; n];
    for r in 0..s {
        for c in 0..s {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let i = r * s + c;
            for (k, b) in blobs.iter().enumerate() {
                let d2 = (y - b.pos.0).powi(2) + (x - b.pos.1).powi(2);
                let cover = (b.radius + 0.5 - d2.sqrt()).clamp(0.0, 1.0) as f32;
                if cover > 0.0 {
                    for ch in 0..3 {
                        let v = &mut image[ch * n + i];
                        *v = *v * (1.0 - cover) + b.color[ch] * cover;
                    }
                }
                let weight = if k == attended { 1.0 } else { 0.2 };
                gt[i] += weight * (-d2 / (2.0 * b.radius * b.radius)).exp();
            }
        }
    }
    let max = gt.iter().copied().fold(0.0, f64::max);
    let gt = AttentionMap::new(s, s, gt.iter().map(|v| v / max).collect())?;
    let fixations = fixations_from_map(&gt, theta)?;
    Ok((Sample::new(id, image, gt, fixations)?, blobs[attended].pos))
}

/// Index batches for one epoch: a seeded shuffle (or identity order), cut
/// into `batch_size` chunks with a final partial batch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptyDataset("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Endless stream of index batches, reshuffled every epoch.
#[derive(Debug, Clone)]
pub struct BatchIter {
    n: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
    epoch: u64,
    pending: std::collections::VecDeque<Vec<usize>>,
}

impl BatchIter {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Skips ahead by `k` batches, as when resuming a run.
    pub fn skip_batches(&mut self, k: u64) {
        for _ in 0..k {
            self.next();
        }
    }
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pending.is_empty() {
            let batches = epoch_batches(self.n, self.batch_size, self.seed, self.epoch, self.shuffle).ok()?;
            self.pending.extend(batches);
            self.epoch += 1;
        }
        self.pending.pop_front()
    }
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, seed: u64, shuffle: bool) -> Result<BatchIter> {
    epoch_batches(ds.len(), batch_size, seed, 0, shuffle)?;
    Ok(BatchIter {
        n: ds.len(),
        batch_size,
        seed,
        shuffle,
        epoch: 0,
        pending: Default::default(),
    })
}

/// Model-ready tensors for a set of samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `(B, 3, S, S)`.
    pub images: Tensor,
    /// `(B, 1, S, S)`, max-normalised ground truth.
    pub gt: Tensor,
    /// `(B, 1, S, S)`, 1 at fixations.
    pub fix_mask: Tensor,
}

pub fn make_batch(ds: &Dataset, indices: &[usize], dtype: DType) -> Result<Batch> {
    let s = ds.side;
    let b = indices.len();
    let mut images = Vec::with_capacity(b * 3 * s * s);
    let mut gt = Vec::with_capacity(b * s * s);
    let mut mask = Vec::with_capacity(b * s * s);
    let mut ids = Vec::with_capacity(b);
    for &i in indices {
        let sample = &ds.samples[i];
        ids.push(sample.id.clone());
        images.extend(sample.image.iter().map(|&v| v as f64));
        gt.extend(&sample.gt_map.values);
        mask.extend(sample.fixations.mask().into_iter().map(|m| if m { 1.0 } else { 0.0 }));
    }
    let dev = Device::Cpu;
    let t = |v: Vec<f64>, c: usize| -> Result<Tensor> {
        Ok(Tensor::from_vec(v, (b, c, s, s), &dev)?.to_dtype(dtype)?)
    };
    Ok(Batch {
        ids,
        images: t(images, 3)?,
        gt: t(gt, 1)?,
        fix_mask: t(mask, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(n: usize, blobs: usize, seed: u64) -> DatasetSpec {
        let cfg = SynthConfig {
            n_train: n,
            n_blobs: blobs,
            data_seed: seed,
            frames_per_clip: 4,
            ..SynthConfig::default()
        };
        DatasetSpec::synthetic(&cfg, Split::Train, 32, 0.75)
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synth_generate(&synth(6, 3, 5)).unwrap();
        let b = synth_generate(&synth(6, 3, 5)).unwrap();
        let c = synth_generate(&synth(6, 3, 6)).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn single_blob_peak_is_blob_centre() {
        let (ds, centres) = synth_with_centres(&synth(8, 1, 2)).unwrap();
        for (s, (y, x)) in ds.samples.iter().zip(centres) {
            let (r, c) = s.gt_map.argmax();
            assert!((r as f64 + 0.5 - y).abs() <= 1.0 && (c as f64 + 0.5 - x).abs() <= 1.0);
            let peaks = (1..31)
                .flat_map(|r| (1..31).map(move |c| (r, c)))
                .filter(|&(r, c)| {
                    let v = s.gt_map.get(r, c);
                    v > 1e-3 && [(0, 1), (2, 1), (1, 0), (1, 2)].iter().all(|(dr, dc)| v > s.gt_map.get(r + dr - 1, c + dc - 1))
                })
                .count();
            assert_eq!(peaks, 1, "{} is not unimodal", s.id);
        }
    }

    #[test]
    fn split_seeds_differ() {
        let cfg = SynthConfig {
            n_train: 4,
            n_val: 4,
            ..SynthConfig::default()
        };
        let a = synth_generate(&DatasetSpec::synthetic(&cfg, Split::Train, 32, 0.75)).unwrap();
        let b = synth_generate(&DatasetSpec::synthetic(&cfg, Split::Val, 32, 0.75)).unwrap();
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn batching_partition_and_order() {
        let b = epoch_batches(10, 8, 1, 0, true).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![8, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(epoch_batches(10, 8, 1, 0, false).unwrap().concat(), (0..10).collect::<Vec<_>>());
        assert_eq!(b, epoch_batches(10, 8, 1, 0, true).unwrap());
        assert_ne!(b, epoch_batches(10, 8, 1, 1, true).unwrap());
        assert!(matches!(epoch_batches(0, 8, 1, 0, true), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn batch_iter_crosses_epochs() {
        let ds = synth_generate(&synth(5, 2, 1)).unwrap();
        let mut it = batch_iter(&ds, 2, 3, true).unwrap();
        let sizes: Vec<usize> = it.by_ref().take(6).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 2, 2, 1]);
        assert_eq!(it.epoch(), 2);
    }

    #[test]
    fn directory_roundtrip_and_guards() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_generate(&synth(4, 2, 9)).unwrap();
        ds.save(dir.path()).unwrap();
        let spec = DatasetSpec::Directory {
            root: dir.path().to_path_buf(),
            side: 32,
            fixation_threshold: 0.75,
        };
        let back = load_dataset(&spec).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.fixations, b.fixations);
            assert_eq!(a.gt_map.argmax(), b.gt_map.argmax());
        }

        let zero = GrayImage::new(32, 32);
        zero.save(dir.path().join("maps").join(format!("{}.png", ds.samples[0].id))).unwrap();
        assert_eq!(load_dataset(&spec).unwrap().len(), 3);

        std::fs::remove_file(dir.path().join("maps").join(format!("{}.png", ds.samples[1].id))).unwrap();
        match load_dataset(&spec) {
            Err(Error::MissingPair(id)) => assert_eq!(id, ds.samples[1].id),
            other => panic!("expected missing pair, got {other:?}"),
        }
    }

    #[test]
    fn batch_tensors_have_model_shapes() {
        let ds = synth_generate(&synth(3, 2, 4)).unwrap();
        let b = make_batch(&ds, &[2, 0], DType::F32).unwrap();
        assert_eq!(b.images.dims(), &[2, 3, 32, 32]);
        assert_eq!(b.gt.dims(), &[2, 1, 32, 32]);
        assert_eq!(b.ids, vec![ds.samples[2].id.clone(), ds.samples[0].id.clone()]);
        let ones: f32 = b.fix_mask.sum_all().unwrap().to_scalar().unwrap();
        let want = ds.samples[2].fixations.len() + ds.samples[0].fixations.len();
        assert_eq!(ones as usize, want);
    }
}
