//! The head's forward pass, in two forms.
//!
//! [`video_feature`] runs on full `C×H×W` maps with the plain module
//! functions and is what evaluation uses. [`TapeHead::video`] records the
//! same computation on a tape for training; it starts from the squeezed
//! vectors `z_t`, using `GAP(F ⊗ c) = c ⊙ GAP(F)` so the maps never enter the
//! graph. The two agree to rounding.

use crate::cfa::{self, QualityScores};
use crate::csca::{self, ChannelWeights};
use crate::error::{Error, Result};
use crate::numerics::{self, matvec, ReduceAxis, Tape, Tensor, Var};

use super::head::*;

/// Intermediate quantities of one video forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Per-frame channel weights; empty without channel attention.
    pub channel_weights: Vec<Tensor>,
    /// Frame-to-video similarity scores (CFA and CFA-v).
    pub s: Option<Tensor>,
    /// Aggregation weights; `None` for plain temporal pooling.
    pub w: Option<Tensor>,
}

/// `f_t = fc · GAP(F̂_t)` for every refined map.
pub fn frame_features(refined: &[Tensor], fc: &Tensor) -> Result<Vec<Tensor>> {
    refined
        .iter()
        .map(|map| {
            if map.shape() != refined[0].shape() {
                return Err(Error::dim("frame_features", refined[0].shape(), map.shape()));
            }
            matvec(fc, &csca::squeeze_frame(map)?)
        })
        .collect()
}

/// Channel attention stage: refined maps and the weights applied.
pub fn attend(seq: &[Tensor], head: &HeadParams) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    if seq.is_empty() {
        return Err(Error::Precondition("video feature of zero frames".into()));
    }
    let weights: Vec<ChannelWeights> = match head.method.attention() {
        ChannelAttention::None => return Ok((seq.to_vec(), Vec::new())),
        ChannelAttention::Csca => csca::csca_forward(seq, &head.csca()?)?.1,
        ChannelAttention::SeFrame => csca::se_frame_weights(seq, &head.se()?)?,
        ChannelAttention::SeVideo => {
            let shared = csca::se_video_weights(seq, &head.se()?)?;
            vec![shared; seq.len()]
        }
        ChannelAttention::CscaV => csca::csca_v_weights(seq, &head.se()?, &head.se_video()?)?,
    };
    let refined = seq
        .iter()
        .zip(&weights)
        .map(|(map, c)| csca::refine(map, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((refined, weights.into_iter().map(ChannelWeights::into_tensor).collect()))
}

/// Aggregation stage on frame features.
pub fn aggregate_frames(features: &[Tensor], head: &HeadParams) -> Result<(Tensor, Diagnostics)> {
    let mut diag = Diagnostics::default();
    let h = match head.method.aggregation() {
        Aggregation::Cfa | Aggregation::CfaV if features.len() == 1 => features[0].clone(),
        Aggregation::Mean => numerics::reduce_mean(features, ReduceAxis::Temporal)?,
        Aggregation::Cfa => {
            let (h, QualityScores { s, w }) = cfa::cfa_forward(features, &head.cfa()?)?;
            diag.s = Some(s);
            diag.w = Some(w);
            h
        }
        Aggregation::CfaV => {
            let s = cfa::quality_scores(&cfa::similarity_matrix(features, &head.cfa()?)?)?;
            let w = cfa::cfa_v_weights(&s);
            let h = cfa::aggregate(features, &w)?;
            diag.s = Some(s);
            diag.w = Some(w);
            h
        }
        Aggregation::Qan => {
            let w = cfa::qan_weights(features, &head.qan()?)?;
            let h = cfa::aggregate(features, &w)?;
            diag.w = Some(w);
            h
        }
    };
    Ok((h, diag))
}

/// End-to-end video feature `h` of a sequence of `C×H×W` maps.
pub fn video_feature(seq: &[Tensor], head: &HeadParams) -> Result<(Tensor, Diagnostics)> {
    let (refined, channel_weights) = attend(seq, head)?;
    let features = frame_features(&refined, head.fc()?)?;
    let (h, mut diag) = aggregate_frames(&features, head)?;
    diag.channel_weights = channel_weights;
    Ok((h, diag))
}

/// Head parameters registered on a tape, one leaf per group.
#[derive(Debug, Clone, Copy)]
pub struct TapeHead {
    method: Method,
    csca: Option<[Var; 3]>,
    se: Option<[Var; 2]>,
    se_video: Option<[Var; 2]>,
    fc: Var,
    cfa: Option<Var>,
    qan: Option<Var>,
    pub classifier: Var,
}

/// Video feature node plus the score and weight nodes when the method has them.
#[derive(Debug, Clone, Copy)]
pub struct TapeVideo {
    pub h: Var,
    pub s: Option<Var>,
    pub w: Option<Var>,
}

impl TapeHead {
    pub fn register(tape: &mut Tape, head: &HeadParams) -> Result<Self> {
        let store = &head.store;
        let mut p = |name: &str| tape.param_from(store, name);
        let csca = match head.method.attention() {
            ChannelAttention::Csca => Some([p(CSCA_W_L)?, p(CSCA_W_G)?, p(CSCA_W_1)?]),
            _ => None,
        };
        let se = match head.method.attention() {
            ChannelAttention::SeFrame | ChannelAttention::SeVideo | ChannelAttention::CscaV => {
                Some([p(SE_W_L)?, p(SE_W_1)?])
            }
            _ => None,
        };
        let se_video = match head.method.attention() {
            ChannelAttention::CscaV => Some([p(SE_VIDEO_W_L)?, p(SE_VIDEO_W_1)?]),
            _ => None,
        };
        let fc = p(FC)?;
        let cfa = match head.method.aggregation() {
            Aggregation::Cfa | Aggregation::CfaV => Some(p(CFA_W_2)?),
            _ => None,
        };
        let qan = match head.method.aggregation() {
            Aggregation::Qan => Some(p(QAN_V)?),
            _ => None,
        };
        let classifier = p(CLASSIFIER)?;
        Ok(Self {
            method: head.method,
            csca,
            se,
            se_video,
            fc,
            cfa,
            qan,
            classifier,
        })
    }

    fn excite(tape: &mut Tape, [w_l, w_1]: [Var; 2], z: Var) -> Result<Var> {
        let hidden = tape.matvec(w_l, z)?;
        let out = tape.matvec(w_1, hidden)?;
        Ok(tape.sigmoid(out))
    }

    /// Pooled-and-refined vectors `c_t ⊙ z_t`.
    fn attend(&self, tape: &mut Tape, zs: &[Var]) -> Result<Vec<Var>> {
        let weights: Vec<Var> = match self.method.attention() {
            ChannelAttention::None => return Ok(zs.to_vec()),
            ChannelAttention::Csca => {
                let [w_l, w_g, w_1] = self.csca.expect("registered");
                let mean = tape.mean(zs)?;
                let pre = tape.matvec(w_g, mean)?;
                let gate = tape.sigmoid(pre);
                zs.iter()
                    .map(|&z| {
                        let local = tape.matvec(w_l, z)?;
                        let gated = tape.mul(gate, local)?;
                        let out = tape.matvec(w_1, gated)?;
                        Ok(tape.sigmoid(out))
                    })
                    .collect::<Result<_>>()?
            }
            ChannelAttention::SeFrame => {
                let se = self.se.expect("registered");
                zs.iter().map(|&z| Self::excite(tape, se, z)).collect::<Result<_>>()?
            }
            ChannelAttention::SeVideo => {
                let mean = tape.mean(zs)?;
                let shared = Self::excite(tape, self.se.expect("registered"), mean)?;
                vec![shared; zs.len()]
            }
            ChannelAttention::CscaV => {
                let mean = tape.mean(zs)?;
                let video = Self::excite(tape, self.se_video.expect("registered"), mean)?;
                let se = self.se.expect("registered");
                zs.iter()
                    .map(|&z| {
                        let frame = Self::excite(tape, se, z)?;
                        tape.mul(frame, video)
                    })
                    .collect::<Result<_>>()?
            }
        };
        zs.iter().zip(weights).map(|(&z, c)| tape.mul(c, z)).collect()
    }

    /// Records the video feature of one sequence of squeezed frame vectors.
    pub fn video(&self, tape: &mut Tape, zs: &[Tensor]) -> Result<TapeVideo> {
        if zs.is_empty() {
            return Err(Error::Precondition("video feature of zero frames".into()));
        }
        let z_vars: Vec<Var> = zs.iter().map(|z| tape.constant(z.clone())).collect();
        let pooled = self.attend(tape, &z_vars)?;
        let fs = pooled
            .iter()
            .map(|&g| tape.matvec(self.fc, g))
            .collect::<Result<Vec<_>>>()?;
        let plain = |h| TapeVideo { h, s: None, w: None };
        Ok(match self.method.aggregation() {
            Aggregation::Cfa | Aggregation::CfaV if fs.len() == 1 => plain(fs[0]),
            Aggregation::Mean => plain(tape.mean(&fs)?),
            Aggregation::Cfa | Aggregation::CfaV => {
                let w_2 = self.cfa.expect("registered");
                let embedded = fs.iter().map(|&f| tape.matvec(w_2, f)).collect::<Result<Vec<_>>>()?;
                let x = tape.cosine_matrix(&embedded)?;
                let s = tape.row_mean(x)?;
                let w = match self.method.aggregation() {
                    Aggregation::Cfa => tape.contrastive_weights(s)?,
                    _ => s,
                };
                TapeVideo {
                    h: tape.weighted_mean(&fs, w)?,
                    s: Some(s),
                    w: Some(w),
                }
            }
            Aggregation::Qan => {
                let v = self.qan.expect("registered");
                let logits = fs.iter().map(|&f| tape.dot(v, f)).collect::<Result<Vec<_>>>()?;
                let stacked = tape.stack(&logits)?;
                let w = tape.sigmoid(stacked);
                TapeVideo {
                    h: tape.weighted_mean(&fs, w)?,
                    s: None,
                    w: Some(w),
                }
            }
        })
    }
}
