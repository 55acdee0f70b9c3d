//! Straight-line reference implementations on flat `f64` buffers.
//!
//! Nothing here calls into the crate's tensor code; every routine is a plain
//! loop so the tests compare two independent computations.

#![allow(dead_code)]

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A dense NCHW array.
#[derive(Debug, Clone)]
pub struct Nd {
    pub dims: Vec<usize>,
    pub v: Vec<f64>,
}

impl Nd {
    pub fn new(dims: &[usize], v: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), v.len());
        Nd { dims: dims.to_vec(), v }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Nd::new(dims, vec![0.0; dims.iter().product()])
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Nd::new(t.dims(), values(t))
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::from_vec(self.v.clone(), self.dims.as_slice(), &Device::Cpu).unwrap()
    }

    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let d = &self.dims;
        self.v[((n * d[1] + c) * d[2] + h) * d[3] + w]
    }

    pub fn idx4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let d = &self.dims;
        ((n * d[1] + c) * d[2] + h) * d[3] + w
    }
}

pub fn values(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_nd(seed: u64, dims: &[usize]) -> Nd {
    Nd::new(dims, uniform(seed, dims.iter().product(), -1.0, 1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cross-correlation with zero padding, square kernel.
pub fn conv2d(x: &Nd, w: &Nd, bias: Option<&[f64]>, stride: usize, pad: usize) -> Nd {
    let (n, c, h, wd) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let (o, ci, k, _) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
    assert_eq!(c, ci);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Nd::zeros(&[n, o, oh, ow]);
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[oc]);
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at4(b, ic, iy as usize, ix as usize) * w.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                    let i = out.idx4(b, oc, y, xx);
                    out.v[i] = acc;
                }
            }
        }
    }
    out
}

/// Per-channel mean and biased variance over `(N, H, W)`.
pub fn channel_stats(x: &Nd) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let count = (n * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    s += x.at4(b, ch, y, xx);
                }
            }
        }
        mean[ch] = s / count;
        let mut s2 = 0.0;
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    s2 += (x.at4(b, ch, y, xx) - mean[ch]).powi(2);
                }
            }
        }
        var[ch] = s2 / count;
    }
    (mean, var)
}

/// Batch norm with batch statistics.
pub fn batch_norm(x: &Nd, gamma: &[f64], beta: &[f64], eps: f64) -> Nd {
    let (mean, var) = channel_stats(x);
    let mut out = x.clone();
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = x.idx4(b, ch, y, xx);
                    out.v[i] = gamma[ch] * (x.v[i] - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch];
                }
            }
        }
    }
    out
}

pub fn relu(x: &Nd) -> Nd {
    Nd::new(&x.dims, x.v.iter().map(|v| v.max(0.0)).collect())
}

pub fn add(a: &Nd, b: &Nd) -> Nd {
    assert_eq!(a.dims, b.dims);
    Nd::new(&a.dims, a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect())
}

pub fn concat_channels(a: &Nd, b: &Nd) -> Nd {
    let (n, ca, h, w) = (a.dims[0], a.dims[1], a.dims[2], a.dims[3]);
    let cb = b.dims[1];
    let mut out = Nd::zeros(&[n, ca + cb, h, w]);
    for bi in 0..n {
        for c in 0..ca + cb {
            for y in 0..h {
                for x in 0..w {
                    let v = if c < ca { a.at4(bi, c, y, x) } else { b.at4(bi, c - ca, y, x) };
                    let i = out.idx4(bi, c, y, x);
                    out.v[i] = v;
                }
            }
        }
    }
    out
}

/// Bilinear sample of one plane at output pixel `(oy, ox)`, half-pixel
/// centres, coordinates clamped to the edge.
fn sample_plane(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize, oy: usize, ox: usize) -> f64 {
    let src = |o: usize, input: usize, output: usize| {
        let s = ((o as f64 + 0.5) * input as f64 / output as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        (i0, i1, s - i0 as f64)
    };
    let (y0, y1, fy) = src(oy, h, oh);
    let (x0, x1, fx) = src(ox, w, ow);
    let p = |y: usize, x: usize| plane[y * w + x];
    (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1))
}

pub fn bilinear(x: &Nd, oh: usize, ow: usize) -> Nd {
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let mut out = Nd::zeros(&[n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let start = x.idx4(b, ch, 0, 0);
            let plane = &x.v[start..start + h * w];
            for y in 0..oh {
                for xx in 0..ow {
                    let i = out.idx4(b, ch, y, xx);
                    out.v[i] = sample_plane(plane, h, w, oh, ow, y, xx);
                }
            }
        }
    }
    out
}

/// `(N, C, H, W)` to `N` row-major `(H*W, C)` token matrices.
pub fn to_tokens(x: &Nd) -> Vec<Vec<Vec<f64>>> {
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    (0..n)
        .map(|b| {
            (0..h * w)
                .map(|t| (0..c).map(|ch| x.at4(b, ch, t / w, t % w)).collect())
                .collect()
        })
        .collect()
}

pub fn from_tokens(tokens: &[Vec<Vec<f64>>], h: usize, w: usize) -> Nd {
    let n = tokens.len();
    let c = tokens[0][0].len();
    let mut out = Nd::zeros(&[n, c, h, w]);
    for (b, mat) in tokens.iter().enumerate() {
        for (t, row) in mat.iter().enumerate() {
            for (ch, v) in row.iter().enumerate() {
                let i = out.idx4(b, ch, t / w, t % w);
                out.v[i] = *v;
            }
        }
    }
    out
}

pub fn layer_norm(row: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    row.iter()
        .enumerate()
        .map(|(i, v)| gamma[i] * (v - mean) / (var + eps).sqrt() + beta[i])
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `a (m x k)` times `b (k x n)`.
pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Rows of a 2-D tensor.
pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, c) = t.dims2().unwrap();
    let v = values(t);
    (0..r).map(|i| v[i * c..(i + 1) * c].to_vec()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Two-pass covariance over the product of population deviations.
pub fn oracle_cc(p: &[f64], q: &[f64]) -> f64 {
    let (mp, sp) = mean_std(p);
    let (mq, sq) = mean_std(q);
    let cov = p.iter().zip(q).map(|(a, b)| (a - mp) * (b - mq)).sum::<f64>() / p.len() as f64;
    cov / (sp * sq)
}

fn to_dist(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn oracle_kldiv(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let (p, q) = (to_dist(p), to_dist(q));
    p.iter().zip(&q).map(|(pi, qi)| qi * (eps + qi / (eps + pi)).ln()).sum()
}

pub fn oracle_sim(p: &[f64], q: &[f64]) -> f64 {
    let (p, q) = (to_dist(p), to_dist(q));
    p.iter().zip(&q).map(|(a, b)| a.min(*b)).sum()
}

pub fn oracle_nss(p: &[f64], fix: &[usize]) -> f64 {
    let (m, s) = mean_std(p);
    fix.iter().map(|&i| (p[i] - m) / s).sum::<f64>() / fix.len() as f64
}

/// ROC area with one threshold per distinct positive value, every count
/// taken by a full scan; `>=` counts as detected.
pub fn oracle_roc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds = pos.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut curve = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = pos.iter().filter(|&&v| v >= t).count() as f64 / pos.len() as f64;
        let fp = neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64;
        curve.push((fp, tp));
    }
    curve.push((1.0, 1.0));
    curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

pub fn split_fixations(p: &[f64], fix: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut is_fix = vec![false; p.len()];
    fix.iter().for_each(|&i| is_fix[i] = true);
    let pos = fix.iter().map(|&i| p[i]).collect();
    let neg = (0..p.len()).filter(|&i| !is_fix[i]).map(|i| p[i]).collect();
    (pos, neg)
}

pub fn oracle_auc_judd(p: &[f64], fix: &[usize]) -> f64 {
    let (pos, neg) = split_fixations(p, fix);
    oracle_roc(&pos, &neg)
}

/// Mean pairwise win rate, ties counted half.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for a in pos {
        for b in neg {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Monte-Carlo AUC over `n_splits` draws of `|fix|` negatives, using the
/// same generator and sampling routine as the metric.
pub fn oracle_auc_borji(p: &[f64], fix: &[usize], n_splits: usize, seed: u64) -> f64 {
    let (pos, neg) = split_fixations(p, fix);
    let k = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_splits {
        let draw: Vec<f64> = rand::seq::index::sample(&mut rng, neg.len(), k).into_iter().map(|i| neg[i]).collect();
        total += oracle_roc(&pos, &draw);
    }
    total / n_splits as f64
}

/// A seeded `(P, Q, fixations)` triple on a `side x side` grid. `Q` is a
/// sum of Gaussian bumps; fixations are distinct random pixels.
pub fn metric_case(seed: u64, side: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..side as f64),
                rng.random_range(0.0..side as f64),
                rng.random_range(1.0..4.0),
            )
        })
        .collect();
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            bumps
                .iter()
                .map(|(br, bc, s)| (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp())
                .sum::<f64>()
                + 1e-3
        })
        .collect();
    let count = rng.random_range(3..20);
    let mut fix: Vec<usize> = rand::seq::index::sample(&mut rng, n, count).into_vec();
    fix.sort_unstable();
    (p, q, fix)
}

/// A run small enough for unit-speed tests: `S = 32`, `w = 8`, batch 2.
pub fn tiny_run(fusion: fblnet::FusionMode, steps: u64) -> fblnet::RunConfig {
    let mut model = fblnet::ModelConfig::with_scale(32, 8);
    model.fusion_mode = fusion;
    fblnet::RunConfig {
        model,
        train: fblnet::config::TrainConfig {
            steps,
            batch_size: 2,
            validate_every: 0,
            auc_borji_splits: 5,
            ..Default::default()
        },
        synth: fblnet::config::SynthConfig {
            n_train: 4,
            n_val: 3,
            ..Default::default()
        },
    }
}

pub fn split(run: &fblnet::RunConfig, split: fblnet::data::Split) -> fblnet::data::Dataset {
    let spec = fblnet::data::DatasetSpec::synthetic(&run.synth, split, run.model.input_side, run.model.fixation_threshold);
    fblnet::data::synth_generate(&spec).unwrap()
}

/// One knowledge update written out step by step: broadcast `K` over the
/// batch, concatenate with `B` on channels, convolve, normalise with batch
/// statistics, rectify, add `K`, average over the batch.
pub fn scripted_knowledge_update(k: &Nd, b: &Nd, p: &fblnet::fbl::UpdateParams) -> Nd {
    let (n, c, h, w) = (b.dims[0], b.dims[1], b.dims[2], b.dims[3]);
    let per = c * h * w;
    let mut kb = Nd::zeros(&[n, c, h, w]);
    for i in 0..n {
        kb.v[i * per..(i + 1) * per].copy_from_slice(&k.v);
    }
    let x = concat_channels(&kb, b);
    let y = conv2d(&x, &Nd::from_tensor(&p.conv_weight), Some(&values(&p.conv_bias)), 1, 1);
    let y = batch_norm(&y, &values(&p.bn_gamma), &values(&p.bn_beta), p.bn_eps);
    let y = add(&relu(&y), &kb);
    let mut out = vec![0.0; per];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(&y.v[i * per..(i + 1) * per]) {
            *o += v / n as f64;
        }
    }
    Nd::new(&[c, h, w], out)
}
