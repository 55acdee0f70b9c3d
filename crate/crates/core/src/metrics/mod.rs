//! Saliency metrics on plain `f64` maps: CC, KL divergence, SIM, NSS,
//! AUC-Judd and AUC-Borji, plus fixation extraction and the training loss.
//!
//! Distribution metrics (`kldiv`, `sim`) expect sum-normalised maps; use
//! [`normalize_dist`] first. Location metrics take a [`FixationSet`].

mod loss;
mod report;

pub use loss::{loss, loss_and_grad, LossTerms, LossWeights};
pub use report::{FrameMetrics, MetricsReport, REPORT_COLUMNS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance on the unit-sum precondition of the distribution metrics.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// A single-channel `H x W` map in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape("attention map", &[height, width], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("attention map has non-finite entries".into()));
        }
        Ok(AttentionMap {
            height,
            width,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..height * width).map(|i| f(i / width, i % width)).collect();
        AttentionMap {
            height,
            width,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-major index of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    fn same_shape(&self, other: &AttentionMap) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                "map pair",
                &[self.height, self.width],
                &[other.height, other.width],
            ));
        }
        Ok(())
    }
}

/// Distinct in-bounds fixated pixels, kept sorted in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationSet {
    pub points: Vec<(usize, usize)>,
    pub frame_shape: (usize, usize),
}

impl FixationSet {
    /// Duplicates are dropped; out-of-bounds points are an error.
    pub fn new(mut points: Vec<(usize, usize)>, frame_shape: (usize, usize)) -> Result<Self> {
        if let Some(p) = points
            .iter()
            .find(|(r, c)| *r >= frame_shape.0 || *c >= frame_shape.1)
        {
            return Err(Error::Domain(format!(
                "fixation {p:?} outside frame {frame_shape:?}"
            )));
        }
        points.sort_unstable();
        points.dedup();
        Ok(FixationSet {
            points,
            frame_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major pixel indices.
    pub fn indices(&self) -> Vec<usize> {
        self.points
            .iter()
            .map(|(r, c)| r * self.frame_shape.1 + c)
            .collect()
    }

    /// Binary mask over the frame.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.frame_shape.0 * self.frame_shape.1];
        for i in self.indices() {
            m[i] = true;
        }
        m
    }

    fn check_against(&self, map: &AttentionMap) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyFix);
        }
        if self.frame_shape != (map.height, map.width) {
            return Err(Error::shape(
                "fixation frame",
                &[map.height, map.width],
                &[self.frame_shape.0, self.frame_shape.1],
            ));
        }
        Ok(())
    }
}

/// Scales a nonnegative map to unit sum.
pub fn normalize_dist(map: &AttentionMap) -> Result<AttentionMap> {
    if map.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("probability map needs finite nonnegative entries".into()));
    }
    let total = map.sum();
    if total <= 0.0 {
        return Err(Error::ZeroMap);
    }
    Ok(AttentionMap {
        height: map.height,
        width: map.width,
        values: map.values.iter().map(|v| v / total).collect(),
    })
}

fn check_normalized(map: &AttentionMap) -> Result<()> {
    let s = map.sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(s));
    }
    Ok(())
}

/// Z-scored copy of the values (population standard deviation) and that deviation.
pub(crate) fn zscore(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::ConstMap);
    }
    Ok((values.iter().map(|v| (v - mean) / std).collect(), std))
}

/// Pearson correlation over all pixels.
pub fn cc(p: &AttentionMap, q: &AttentionMap) -> Result<f64> {
    p.same_shape(q)?;
    let (zp, _) = zscore(&p.values)?;
    let (zq, _) = zscore(&q.values)?;
    let n = zp.len() as f64;
    Ok(zp.iter().zip(&zq).map(|(a, b)| a * b).sum::<f64>() / n)
}

/// `sum_i Q_i log(eps + Q_i / (eps + P_i))` on sum-normalised maps.
pub fn kldiv(p: &AttentionMap, q: &AttentionMap, epsilon: f64) -> Result<f64> {
    p.same_shape(q)?;
    check_normalized(p)?;
    check_normalized(q)?;
    Ok(p.values
        .iter()
        .zip(&q.values)
        .map(|(pi, qi)| qi * (epsilon + qi / (epsilon + pi)).ln())
        .sum())
}

/// Histogram intersection of two sum-normalised maps.
pub fn sim(p: &AttentionMap, q: &AttentionMap) -> Result<f64> {
    p.same_shape(q)?;
    check_normalized(p)?;
    check_normalized(q)?;
    Ok(p.values.iter().zip(&q.values).map(|(a, b)| a.min(*b)).sum())
}

/// Mean of the z-scored prediction at the fixated pixels.
pub fn nss(p: &AttentionMap, fix: &FixationSet) -> Result<f64> {
    fix.check_against(p)?;
    let (z, _) = zscore(&p.values)?;
    let idx = fix.indices();
    Ok(idx.iter().map(|&i| z[i]).sum::<f64>() / idx.len() as f64)
}

/// Area under the ROC curve traced by thresholding at each distinct positive
/// value. A sample counts as detected when its value is `>=` the threshold.
/// The curve runs from `(0, 0)` to `(1, 1)`; area by trapezoids.
pub(crate) fn roc_area(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_by(|a, b| b.total_cmp(a));
    neg.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);

    let mut area = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    let (mut ip, mut ineg) = (0, 0);
    let mut k = 0;
    while k < pos.len() {
        let t = pos[k];
        while ip < pos.len() && pos[ip] >= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] >= t {
            ineg += 1;
        }
        let tpr = ip as f64 / np;
        let fpr = if nn > 0.0 { ineg as f64 / nn } else { 0.0 };
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
        k = ip;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    area
}

fn split_values(p: &AttentionMap, fix: &FixationSet) -> (Vec<f64>, Vec<f64>) {
    let mask = fix.mask();
    let mut pos = Vec::with_capacity(fix.len());
    let mut neg = Vec::with_capacity(p.len() - fix.len());
    for (v, m) in p.values.iter().zip(&mask) {
        if *m {
            pos.push(*v);
        } else {
            neg.push(*v);
        }
    }
    (pos, neg)
}

/// AUC with every non-fixated pixel as a negative.
pub fn auc_judd(p: &AttentionMap, fix: &FixationSet) -> Result<f64> {
    fix.check_against(p)?;
    let (pos, neg) = split_values(p, fix);
    Ok(roc_area(&pos, &neg))
}

/// AUC averaged over `n_splits` draws of `|fix|` negatives, sampled
/// uniformly without replacement from the non-fixated pixels.
pub fn auc_borji(p: &AttentionMap, fix: &FixationSet, n_splits: usize, rng_seed: u64) -> Result<f64> {
    fix.check_against(p)?;
    if n_splits == 0 {
        return Err(Error::Domain("auc_borji needs at least one split".into()));
    }
    let (pos, neg) = split_values(p, fix);
    let k = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut total = 0.0;
    let mut sample = Vec::with_capacity(k);
    for _ in 0..n_splits {
        sample.clear();
        sample.extend(
            rand::seq::index::sample(&mut rng, neg.len(), k)
                .into_iter()
                .map(|i| neg[i]),
        );
        total += roc_area(&pos, &sample);
    }
    Ok(total / n_splits as f64)
}

/// All pixels at or above `theta * max(Q)`.
pub fn fixations_from_map(q: &AttentionMap, theta: f64) -> Result<FixationSet> {
    let max = q.max();
    if !(max > 0.0) {
        return Err(Error::ZeroMap);
    }
    let cut = theta * max;
    let points = (0..q.len())
        .filter(|&i| q.values[i] >= cut)
        .map(|i| (i / q.width, i % q.width))
        .collect();
    FixationSet::new(points, (q.height, q.width))
}
