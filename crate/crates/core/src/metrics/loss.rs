use serde::{Deserialize, Serialize};

use super::{kldiv, normalize_dist, nss, zscore, AttentionMap, FixationSet};
use crate::error::{Error, Result};

/// Scale factors of the KL, NSS and CC terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mu: f64,
    pub eta: f64,
    pub xi: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mu: 1.0,
            eta: 0.1,
            xi: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(mu: f64, eta: f64, xi: f64) -> Result<Self> {
        let w = LossWeights { mu, eta, xi };
        if [mu, eta, xi].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be nonnegative, got {w:?}")));
        }
        Ok(w)
    }
}

/// The three loss terms before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub kldiv: f64,
    pub nss: f64,
    pub cc: f64,
    pub total: f64,
}

/// `mu * kldiv(norm P, norm Q) - eta * nss(P) - xi * cc(P, Q)`.
pub fn loss(
    p: &AttentionMap,
    q: &AttentionMap,
    fix: &FixationSet,
    w: &LossWeights,
    epsilon: f64,
) -> Result<LossTerms> {
    let kl = kldiv(&normalize_dist(p)?, &normalize_dist(q)?, epsilon)?;
    let n = nss(p, fix)?;
    let c = super::cc(p, q)?;
    Ok(LossTerms {
        kldiv: kl,
        nss: n,
        cc: c,
        total: w.mu * kl - w.eta * n - w.xi * c,
    })
}

/// Loss value and its gradient with respect to every entry of `P`.
pub fn loss_and_grad(
    p: &AttentionMap,
    q: &AttentionMap,
    fix: &FixationSet,
    w: &LossWeights,
    epsilon: f64,
) -> Result<(LossTerms, Vec<f64>)> {
    let terms = loss(p, q, fix, w, epsilon)?;
    let n = p.len();
    let nf = n as f64;
    let sum_p = p.sum();
    let ph = normalize_dist(p)?;
    let qh = normalize_dist(q)?;

    // KL through the normalisation: d/dP_j = (g_j - <g, p_hat>) / sum P.
    let g: Vec<f64> = ph
        .values
        .iter()
        .zip(&qh.values)
        .map(|(pi, qi)| {
            let r = qi / (epsilon + pi);
            -qi * qi / ((epsilon + r) * (epsilon + pi) * (epsilon + pi))
        })
        .collect();
    let g_dot: f64 = g.iter().zip(&ph.values).map(|(a, b)| a * b).sum();

    let (zp, sp) = zscore(&p.values)?;
    let (zq, _) = zscore(&q.values)?;
    let mask = fix.mask();
    let nfix = fix.len() as f64;

    let grad = (0..n)
        .map(|j| {
            let d_kl = (g[j] - g_dot) / sum_p;
            let m = if mask[j] { 1.0 / nfix } else { 0.0 };
            let d_nss = (m - 1.0 / nf - terms.nss * zp[j] / nf) / sp;
            let d_cc = (zq[j] - terms.cc * zp[j]) / (nf * sp);
            w.mu * d_kl - w.eta * d_nss - w.xi * d_cc
        })
        .collect();
    Ok((terms, grad))
}
