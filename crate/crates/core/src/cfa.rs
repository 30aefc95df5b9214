//! Contrastive feature aggregation.
//!
//! Frame features are embedded by one shared projection `θ(f) = W_2 f`, their
//! pairwise cosines form `X`, and each frame's quality score is its row mean.
//! Propagating features toward high-quality frames and then averaging,
//!
//! ```text
//! f̂_t = s_t f_t + (1 − s_t) · 1/(T−1) Σ_{i≠t} s_i f_i,    h = mean_t f̂_t
//! ```
//!
//! collapses to a weighted temporal average with closed-form weights
//! `w_t = s_t (2 − 1/(T−1) Σ_{i≠t} s_i)`. [`propagate`] and
//! [`contrastive_weights`] expose both sides of that identity.

use rand::Rng;

use crate::csca::init_linear;
use crate::error::{Error, Result};
use crate::numerics::{self, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct CfaParams {
    /// Shared projection of shape `d/r2 × d`, applied to every frame.
    pub w_2: Tensor,
    pub r2: usize,
}

impl CfaParams {
    pub fn new(w_2: Tensor) -> Result<Self> {
        let &[out, d] = w_2.shape() else {
            return Err(Error::Config(format!("W_2 must be a matrix, got {:?}", w_2.shape())));
        };
        if d % out != 0 {
            return Err(Error::Config(format!("projection width {out} does not divide {d}")));
        }
        Ok(Self { w_2, r2: d / out })
    }

    pub fn init(d: usize, r2: usize, rng: &mut impl Rng) -> Result<Self> {
        if r2 == 0 || d % r2 != 0 {
            return Err(Error::Config(format!("reduction ratio {r2} must divide feature dimension {d}")));
        }
        Self::new(init_linear(d / r2, d, rng))
    }

    pub fn embed(&self, f: &Tensor) -> Result<Tensor> {
        numerics::matvec(&self.w_2, f)
    }
}

/// QAN-style quality head: `σ(v · f_t)` per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QanParams {
    pub v: Tensor,
}

impl QanParams {
    pub fn init(d: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        Self {
            v: Tensor::vector((0..d).map(|_| rng.random_range(-bound..bound)).collect()),
        }
    }
}

/// Per-frame consistency scores `s` and the aggregation weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityScores {
    pub s: Tensor,
    pub w: Tensor,
}

pub fn similarity_matrix(frames: &[Tensor], params: &CfaParams) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::Precondition("similarity matrix of zero frames".into()));
    }
    let embedded = frames.iter().map(|f| params.embed(f)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = embedded.iter().collect();
    numerics::cosine_matrix(&refs)
}

/// Row means of a square similarity matrix.
pub fn quality_scores(x: &Tensor) -> Result<Tensor> {
    match x.shape() {
        [r, c] if r == c => numerics::row_mean(x),
        s => Err(Error::Precondition(format!("quality scores need a square matrix, got {s:?}"))),
    }
}

fn check_frames(frames: &[Tensor], s: &Tensor, op: &'static str) -> Result<()> {
    if frames.len() != s.len() {
        return Err(Error::dim(op, &[frames.len()], s.shape()));
    }
    if let Some(bad) = frames.iter().find(|f| f.shape() != frames[0].shape()) {
        return Err(Error::dim(op, frames[0].shape(), bad.shape()));
    }
    Ok(())
}

/// Quality-directed propagation: each frame pulled toward the score-weighted
/// mean of the other frames.
pub fn propagate(frames: &[Tensor], s: &Tensor) -> Result<Vec<Tensor>> {
    let t = frames.len();
    if t < 2 {
        return Err(Error::Contract(format!("propagation needs at least two frames, got {t}")));
    }
    check_frames(frames, s, "propagate")?;
    let sv = s.data();
    let d = frames[0].len();
    let inv_others = 1.0 / (t - 1) as f64;
    let out = (0..t)
        .map(|target| {
            let mut others = vec![0.0; d];
            for (i, f) in frames.iter().enumerate() {
                if i == target {
                    continue;
                }
                for (o, &v) in others.iter_mut().zip(f.data()) {
                    *o += sv[i] * v;
                }
            }
            let data = frames[target]
                .data()
                .iter()
                .zip(&others)
                .map(|(&own, &rest)| sv[target] * own + (1.0 - sv[target]) * inv_others * rest)
                .collect();
            Tensor::new(frames[target].shape().to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// Closed-form frame weights `w_t = s_t (2 − mean of the other scores)`.
pub fn contrastive_weights(s: &Tensor) -> Result<Tensor> {
    Ok(Tensor::vector(numerics::contrastive_weights(s.data())?))
}

/// `h = (1/T) Σ w_t f_t`.
pub fn aggregate(frames: &[Tensor], w: &Tensor) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::Precondition("aggregate of zero frames".into()));
    }
    check_frames(frames, w, "aggregate")?;
    let refs: Vec<&Tensor> = frames.iter().collect();
    numerics::weighted_mean(&refs, w.data())
}

/// Similarity, scores, contrastive weights and the aggregated video feature.
pub fn cfa_forward(frames: &[Tensor], params: &CfaParams) -> Result<(Tensor, QualityScores)> {
    if frames.len() < 2 {
        return Err(Error::Contract(format!(
            "contrastive aggregation needs at least two frames, got {}",
            frames.len()
        )));
    }
    let s = quality_scores(&similarity_matrix(frames, params)?)?;
    let w = contrastive_weights(&s)?;
    let h = aggregate(frames, &w)?;
    Ok((h, QualityScores { s, w }))
}

/// CFA-v: the frame-to-video similarity itself is the weight.
pub fn cfa_v_weights(s: &Tensor) -> Tensor {
    s.clone()
}

pub fn qan_weights(frames: &[Tensor], params: &QanParams) -> Result<Tensor> {
    let logits = frames
        .iter()
        .map(|f| params.v.dot(f))
        .collect::<Result<Vec<f64>>>()?;
    if logits.is_empty() {
        return Err(Error::Precondition("QAN weights of zero frames".into()));
    }
    Ok(numerics::sigmoid_map(&Tensor::vector(logits)))
}
