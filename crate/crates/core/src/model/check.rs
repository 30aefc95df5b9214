use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::numerics::{grad_check_with, GradCheckReport, ParamStore, Tensor};
use crate::rng;

use super::head::{HeadParams, Hyper, Method};
use super::loss::{loss_and_gradients, total_loss, Batch, BatchItem};

/// Random batch of `ids` identities × `per_id` sequences of `hyper.frames`
/// squeezed frames. Each identity has a nonnegative base vector; frames
/// scatter around it so cosines are spread and the hinge stays away from its
/// kink.
pub fn random_batch(hyper: &Hyper, ids: usize, per_id: usize, seed: u64) -> Batch {
    let mut r = rng::stream(seed, "check-batch");
    let c = hyper.channels;
    let noise = Normal::new(0.0, 0.3).expect("finite std");
    let mut items = Vec::with_capacity(ids * per_id);
    for label in 0..ids {
        let base: Vec<f64> = (0..c).map(|_| r.random_range(0.0..1.0)).collect();
        for _ in 0..per_id {
            let frames = (0..hyper.frames)
                .map(|_| Tensor::vector(base.iter().map(|b| b + noise.sample(&mut r)).collect()))
                .collect();
            items.push(BatchItem { frames, label });
        }
    }
    Batch { items }
}

/// A freshly initialized head and a random batch for it.
pub fn gradcheck_instance(hyper: Hyper, method: Method, seed: u64) -> Result<(HeadParams, Batch)> {
    let ids = hyper.batch_ids;
    let head = HeadParams::init(hyper, method, ids, seed)?;
    Ok((head, random_batch(&hyper, ids, hyper.batch_seqs, seed)))
}

/// Central differences of the total loss against the tape gradient of every
/// parameter group. `per_group` limits the coordinates checked per group.
pub fn check_gradients(
    head: &HeadParams,
    batch: &Batch,
    step: f64,
    tol: f64,
    per_group: Option<usize>,
) -> Result<GradCheckReport> {
    let probe = |store: &ParamStore| HeadParams {
        hyper: head.hyper,
        method: head.method,
        store: store.clone(),
    };
    let value = |store: &ParamStore| Ok(total_loss(batch, &probe(store))?.total);
    let gradient = |store: &ParamStore| Ok(loss_and_gradients(batch, &probe(store))?.1);
    let sampling = per_group.map(|n| (n, 0));
    grad_check_with(value, gradient, &head.store, step, tol, sampling)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_method_passes_on_a_small_instance() {
        let hyper = Hyper {
            channels: 8,
            d: 4,
            frames: 4,
            batch_ids: 2,
            batch_seqs: 2,
            ..Hyper::default()
        };
        for (k, m) in Method::ALL.into_iter().enumerate() {
            let (head, batch) = gradcheck_instance(hyper, m, k as u64).unwrap();
            let report = check_gradients(&head, &batch, 1e-5, 1e-4, None).unwrap();
            assert!(report.passed(), "{m}\n{report}");
            assert_eq!(report.params.len(), head.store.len());
        }
    }
}
