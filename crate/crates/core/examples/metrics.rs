//! The six saliency metrics and the training loss on small hand-made maps.
//!
//! ```text
//! cargo run --release --example metrics
//! ```

use fblnet::metrics::{
    auc_borji, auc_judd, cc, fixations_from_map, kldiv, loss_and_grad, normalize_dist, nss, sim, AttentionMap,
    LossWeights,
};

fn blob(side: usize, r0: f64, c0: f64, sigma: f64) -> AttentionMap {
    AttentionMap::from_fn(side, side, |r, c| {
        let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

fn main() -> fblnet::Result<()> {
    let gt = blob(16, 5.0, 9.0, 2.0);
    let fix = fixations_from_map(&gt, 0.75)?;
    println!("{} fixations recovered from the ground truth", fix.len());

    let near = blob(16, 6.0, 8.0, 2.5);
    let far = blob(16, 12.0, 2.0, 2.5);
    let q = normalize_dist(&gt)?;
    println!("{:<8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "", "AUC_J", "AUC_B", "SIM", "CC", "Kldiv", "NSS");
    for (name, p) in [("near", &near), ("far", &far), ("exact", &gt)] {
        let pn = normalize_dist(p)?;
        println!(
            "{name:<8} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            auc_judd(p, &fix)?,
            auc_borji(p, &fix, 100, 0)?,
            sim(&pn, &q)?,
            cc(p, &gt)?,
            kldiv(&pn, &q, 1e-7)?,
            nss(p, &fix)?,
        );
    }

    let w = LossWeights::default();
    for (name, p) in [("near", &near), ("far", &far)] {
        let (terms, grad) = loss_and_grad(p, &gt, &fix, &w, 1e-7)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("loss({name}) = {:.4}, |dL/dP| = {norm:.4}", terms.total);
    }
    Ok(())
}
