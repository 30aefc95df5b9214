use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::rng;
use crate::synthdata::Dataset;

use super::head::HeadParams;
use super::loss::{loss_and_gradients, Batch, BatchItem};
use super::sampling::{sample_frames, SampleMode};

/// Training sequences, already squeezed to per-frame channel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub sequences: Vec<Vec<Tensor>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    by_label: Vec<Vec<usize>>,
}

impl TrainSet {
    pub fn new(sequences: Vec<Vec<Tensor>>, labels: Vec<usize>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Precondition("training set is empty".into()));
        }
        if sequences.len() != labels.len() {
            return Err(Error::dim("train set", &[sequences.len()], &[labels.len()]));
        }
        if let Some(i) = sequences.iter().position(|s| s.is_empty()) {
            return Err(Error::Precondition(format!("training sequence {i} has no frames")));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_label = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            by_label[l].push(i);
        }
        Ok(Self {
            sequences,
            labels,
            classes,
            by_label,
        })
    }

    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let mut sequences = Vec::with_capacity(dataset.train.len());
        let mut labels = Vec::with_capacity(dataset.train.len());
        for seq in &dataset.train {
            let label = dataset.train_label(seq.identity).ok_or_else(|| {
                Error::Config(format!("identity {} is not a training identity", seq.identity))
            })?;
            sequences.push(seq.squeezed()?);
            labels.push(label);
        }
        Self::new(sequences, labels)
    }

    /// Labels with at least one sequence.
    pub fn identities(&self) -> Vec<usize> {
        (0..self.classes).filter(|&l| !self.by_label[l].is_empty()).collect()
    }

    /// Sequence indices for each P × K batch of one epoch.
    fn epoch_batches(&self, p: usize, k: usize, r: &mut impl Rng) -> Vec<Vec<usize>> {
        let mut ids = self.identities();
        ids.shuffle(r);
        let chunks: Vec<&[usize]> = if ids.len() < p { vec![&ids[..]] } else { ids.chunks_exact(p).collect() };
        chunks
            .into_iter()
            .map(|chunk| {
                chunk
                    .iter()
                    .flat_map(|&id| {
                        let pool = &self.by_label[id];
                        if pool.len() >= k {
                            sample(r, pool.len(), k).into_iter().map(|i| pool[i]).collect::<Vec<_>>()
                        } else {
                            (0..k).map(|_| pool[r.random_range(0..pool.len())]).collect()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// SGD with momentum and L2 weight decay:
/// `d = g + λp`, `v ← μv + d`, `p ← p − η v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: ParamStore,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: ParamStore::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Contract(format!("no gradient for parameter `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(Error::dim("sgd step", p.shape(), g.shape()));
            }
            if !self.velocity.contains(name) {
                self.velocity.insert(name, Tensor::zeros(p.shape()));
            }
            let v = self.velocity.get_mut(name).expect("just inserted");
            for ((pi, vi), &gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let d = gi + self.weight_decay * *pi;
                *vi = self.momentum * *vi + d;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: HeadParams,
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains `head` on `set`. Batch composition and frame sampling come from
/// the `sampling` stream of `seed`, so a run is reproducible bit for bit.
pub fn train(set: &TrainSet, head: HeadParams, seed: u64) -> Result<TrainOutcome> {
    train_observed(set, head, seed, |_, _| {})
}

/// [`train`] with a callback after every epoch `(epoch, mean loss)`.
pub fn train_observed(
    set: &TrainSet,
    mut head: HeadParams,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let hyper = head.hyper;
    hyper.validate()?;
    head.check()?;
    let classes = head.classes()?;
    if set.classes > classes {
        return Err(Error::Config(format!(
            "training labels reach {} but the classifier has {classes} classes",
            set.classes
        )));
    }
    if set.identities().len() < 2 {
        return Err(Error::Precondition("training needs at least two identities".into()));
    }
    let mut r = rng::stream(seed, "sampling");
    let mut sgd = Sgd::new(hyper.momentum, hyper.weight_decay);
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch);
        let batches = set.epoch_batches(hyper.batch_ids, hyper.batch_seqs, &mut r);
        let mut total = 0.0;
        for (step, indices) in batches.iter().enumerate() {
            let mut batch = Batch::default();
            for &i in indices {
                let seq = &set.sequences[i];
                let picks = sample_frames(seq.len(), hyper.frames, SampleMode::Train, &mut r)?;
                batch.items.push(BatchItem {
                    frames: picks.into_iter().map(|j| seq[j].clone()).collect(),
                    label: set.labels[i],
                });
            }
            let (loss, grads) = loss_and_gradients(&batch, &head)?;
            if !loss.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {} at epoch {epoch}, step {step} (cross-entropy {}, triplet {})",
                    loss.total, loss.cross_entropy, loss.triplet
                )));
            }
            sgd.step(&mut head.store, &grads, lr)?;
            total += loss.total;
        }
        let mean = total / batches.len() as f64;
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    Ok(TrainOutcome {
        head,
        loss_curve: curve,
    })
}
