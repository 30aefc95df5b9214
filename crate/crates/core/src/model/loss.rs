use crate::csca::squeeze_frame;
use crate::error::{Error, Result};
use crate::numerics::{ops::COSINE_EPS, ParamStore, Tape, Tensor, Var};

use super::forward::TapeHead;
use super::head::HeadParams;

/// One training sequence: squeezed frame vectors and its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub frames: Vec<Tensor>,
    pub label: usize,
}

impl BatchItem {
    pub fn from_maps(maps: &[Tensor], label: usize) -> Result<Self> {
        Ok(Self {
            frames: maps.iter().map(squeeze_frame).collect::<Result<_>>()?,
            label,
        })
    }
}

/// P identities × K sequences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub cross_entropy: f64,
    pub triplet: f64,
    pub total: f64,
}

/// Batch-hard pair chosen for one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardPair {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Hardest positive (lowest cosine) and hardest negative (highest cosine)
/// per anchor, ties to the lower index. Anchors without a positive are
/// skipped.
pub fn mine_hard_pairs(cos: &Tensor, labels: &[usize]) -> Result<Vec<HardPair>> {
    let n = labels.len();
    if cos.shape() != [n, n] {
        return Err(Error::dim("mine_hard_pairs", &[n, n], cos.shape()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Contract(
            "triplet loss needs at least two identities in the batch".into(),
        ));
    }
    let mut pairs = Vec::new();
    for a in 0..n {
        let mut positive: Option<usize> = None;
        let mut negative: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let c = cos.get2(a, j);
            if labels[j] == labels[a] {
                if positive.is_none_or(|p| c < cos.get2(a, p)) {
                    positive = Some(j);
                }
            } else if negative.is_none_or(|q| c > cos.get2(a, q)) {
                negative = Some(j);
            }
        }
        if let (Some(positive), Some(negative)) = (positive, negative) {
            pairs.push(HardPair {
                anchor: a,
                positive,
                negative,
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::Contract(
            "triplet loss needs an identity with at least two sequences".into(),
        ));
    }
    Ok(pairs)
}

struct LossGraph {
    total: Var,
    cross_entropy: Var,
    triplet: Var,
}

fn record(tape: &mut Tape, batch: &Batch, head: &HeadParams) -> Result<LossGraph> {
    if batch.items.is_empty() {
        return Err(Error::Precondition("loss of an empty batch".into()));
    }
    let th = TapeHead::register(tape, head)?;
    let mut hs = Vec::with_capacity(batch.items.len());
    let mut ces = Vec::with_capacity(batch.items.len());
    for item in &batch.items {
        let h = th.video(tape, &item.frames)?.h;
        let logits = tape.matvec(th.classifier, h)?;
        ces.push(tape.cross_entropy(logits, item.label)?);
        hs.push(h);
    }
    let cross_entropy = tape.mean(&ces)?;

    for (i, &h) in hs.iter().enumerate() {
        if tape.value(h).norm() < COSINE_EPS {
            return Err(Error::Degenerate(format!(
                "video feature {i} has norm below {COSINE_EPS}"
            )));
        }
    }
    let labels: Vec<usize> = batch.items.iter().map(|it| it.label).collect();
    let cos = tape.cosine_matrix(&hs)?;
    let n = hs.len();
    let pairs = mine_hard_pairs(tape.value(cos), &labels)?;
    let margin = head.hyper.margin;
    let mut hinges = Vec::with_capacity(pairs.len());
    for p in pairs {
        // d(a,p) − d(a,n) + m with d = 1 − cos
        let ap = tape.pick(cos, p.anchor * n + p.positive)?;
        let an = tape.pick(cos, p.anchor * n + p.negative)?;
        let gap = tape.sub(an, ap)?;
        let shifted = tape.add_scalar(gap, margin);
        hinges.push(tape.relu(shifted));
    }
    let triplet = tape.mean(&hinges)?;
    let total = tape.add(cross_entropy, triplet)?;
    Ok(LossGraph {
        total,
        cross_entropy,
        triplet,
    })
}

fn parts(tape: &Tape, g: &LossGraph) -> LossParts {
    LossParts {
        cross_entropy: tape.scalar(g.cross_entropy),
        triplet: tape.scalar(g.triplet),
        total: tape.scalar(g.total),
    }
}

/// Mean softmax cross-entropy plus batch-hard cosine triplet loss.
pub fn total_loss(batch: &Batch, head: &HeadParams) -> Result<LossParts> {
    let mut tape = Tape::new();
    let g = record(&mut tape, batch, head)?;
    Ok(parts(&tape, &g))
}

/// Loss and its gradient with respect to every parameter group of `head`.
pub fn loss_and_gradients(batch: &Batch, head: &HeadParams) -> Result<(LossParts, ParamStore)> {
    let mut tape = Tape::new();
    let g = record(&mut tape, batch, head)?;
    let grads = tape.backward(g.total)?.into_params();
    Ok((parts(&tape, &g), grads))
}
