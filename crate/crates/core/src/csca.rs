//! Context sensing channel attention.
//!
//! Each frame's channel weights come from an SE-style bottleneck whose hidden
//! layer is gated by a sigmoid summary of the whole sequence:
//!
//! ```text
//! z_t   = GAP(F_t)
//! z^g   = σ(W_g · mean_t z_t)
//! c_t   = σ(W_1 · (z^g ⊙ W_l z_t))
//! F̂_t  = F_t ⊗ c_t
//! ```
//!
//! The SE-frame, SE-video and CSCA-v variants used for comparison live here
//! too. They share the `W_l`/`W_1` bottleneck shape and differ only in where
//! (or whether) sequence context enters.

use std::ops::Deref;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{self, ops, ReduceAxis, Tensor};

/// Channel weights of one frame, entries in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights(Tensor);

impl ChannelWeights {
    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

impl Deref for ChannelWeights {
    type Target = Tensor;
    fn deref(&self) -> &Tensor {
        &self.0
    }
}

/// Learnable weights of the attention bottleneck.
///
/// `w_l` and `w_g` are separate matrices of shape `C/r1 × C`; the frame and
/// sequence branches never share parameters. `w_1` maps the hidden layer back
/// to `C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CscaParams {
    pub w_l: Tensor,
    pub w_g: Tensor,
    pub w_1: Tensor,
    pub r1: usize,
}

/// An SE bottleneck: hidden projection then output projection.
pub trait Excitation {
    fn hidden(&self) -> &Tensor;
    fn output(&self) -> &Tensor;
}

/// Plain SE block weights (the video branch of CSCA-v).
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    pub w_l: Tensor,
    pub w_1: Tensor,
}

impl Excitation for CscaParams {
    fn hidden(&self) -> &Tensor {
        &self.w_l
    }
    fn output(&self) -> &Tensor {
        &self.w_1
    }
}

impl Excitation for SeParams {
    fn hidden(&self) -> &Tensor {
        &self.w_l
    }
    fn output(&self) -> &Tensor {
        &self.w_1
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) matrix of shape `rows × cols`.
pub fn init_linear(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("rows*cols entries")
}

fn reduction(channels: usize, r1: usize) -> Result<usize> {
    if r1 == 0 || channels == 0 || channels % r1 != 0 {
        return Err(Error::Config(format!(
            "reduction ratio {r1} must divide channel count {channels}"
        )));
    }
    Ok(channels / r1)
}

fn check_bottleneck(w_l: &Tensor, w_1: &Tensor) -> Result<(usize, usize)> {
    let &[hidden, channels] = w_l.shape() else {
        return Err(Error::dim("csca bottleneck", w_l.shape(), w_1.shape()));
    };
    if w_1.shape() != [channels, hidden] {
        return Err(Error::dim("csca bottleneck", w_l.shape(), w_1.shape()));
    }
    Ok((hidden, channels))
}

impl CscaParams {
    pub fn new(w_l: Tensor, w_g: Tensor, w_1: Tensor) -> Result<Self> {
        let (hidden, channels) = check_bottleneck(&w_l, &w_1)?;
        if w_g.shape() != w_l.shape() {
            return Err(Error::dim("csca branches", w_l.shape(), w_g.shape()));
        }
        if channels % hidden != 0 {
            return Err(Error::Config(format!(
                "hidden width {hidden} does not divide channel count {channels}"
            )));
        }
        Ok(Self {
            w_l,
            w_g,
            w_1,
            r1: channels / hidden,
        })
    }

    pub fn init(channels: usize, r1: usize, rng: &mut impl Rng) -> Result<Self> {
        let hidden = reduction(channels, r1)?;
        let w_l = init_linear(hidden, channels, rng);
        let w_g = init_linear(hidden, channels, rng);
        let w_1 = init_linear(channels, hidden, rng);
        Self::new(w_l, w_g, w_1)
    }

    pub fn channels(&self) -> usize {
        self.w_l.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_l.shape()[0]
    }
}

impl SeParams {
    pub fn new(w_l: Tensor, w_1: Tensor) -> Result<Self> {
        check_bottleneck(&w_l, &w_1)?;
        Ok(Self { w_l, w_1 })
    }

    pub fn init(channels: usize, r1: usize, rng: &mut impl Rng) -> Result<Self> {
        let hidden = reduction(channels, r1)?;
        let w_l = init_linear(hidden, channels, rng);
        let w_1 = init_linear(channels, hidden, rng);
        Self::new(w_l, w_1)
    }
}

/// Spatial mean of each channel of a `C×H×W` map.
pub fn squeeze_frame(map: &Tensor) -> Result<Tensor> {
    ops::spatial_mean(map)
}

/// Sequence-level gate `σ(W_g · mean_t z_t)`.
pub fn sequence_gate(zs: &[Tensor], params: &CscaParams) -> Result<Tensor> {
    if zs.is_empty() {
        return Err(Error::Precondition("sequence gate over zero frames".into()));
    }
    let mean = numerics::reduce_mean(zs, ReduceAxis::Temporal)?;
    Ok(numerics::sigmoid_map(&numerics::matvec(&params.w_g, &mean)?))
}

/// Channel weights of one frame given its squeezed vector and the sequence gate.
pub fn attend_frame(z_t: &Tensor, z_g: &Tensor, params: &CscaParams) -> Result<ChannelWeights> {
    let local = numerics::matvec(&params.w_l, z_t)?;
    let gated = ops::hadamard(z_g, &local)?;
    Ok(ChannelWeights(numerics::sigmoid_map(&numerics::matvec(&params.w_1, &gated)?)))
}

/// Channel-wise product `F_t ⊗ c_t`.
pub fn refine(map: &Tensor, c_t: &Tensor) -> Result<Tensor> {
    numerics::channel_scale(map, c_t)
}

fn squeeze_all(seq: &[Tensor]) -> Result<Vec<Tensor>> {
    if seq.is_empty() {
        return Err(Error::Precondition("empty frame sequence".into()));
    }
    let zs = seq.iter().map(squeeze_frame).collect::<Result<Vec<_>>>()?;
    for (i, z) in zs.iter().enumerate() {
        if seq[i].shape() != seq[0].shape() {
            return Err(Error::dim("frame sequence", seq[0].shape(), seq[i].shape()));
        }
        debug_assert_eq!(z.len(), zs[0].len());
    }
    Ok(zs)
}

/// CSCA channel weights from already squeezed frame vectors.
pub fn csca_weights_squeezed(zs: &[Tensor], params: &CscaParams) -> Result<Vec<ChannelWeights>> {
    let gate = sequence_gate(zs, params)?;
    zs.iter().map(|z| attend_frame(z, &gate, params)).collect()
}

/// Refined maps and the channel weights that produced them.
pub fn csca_forward(seq: &[Tensor], params: &CscaParams) -> Result<(Vec<Tensor>, Vec<ChannelWeights>)> {
    let zs = squeeze_all(seq)?;
    let weights = csca_weights_squeezed(&zs, params)?;
    let refined = seq
        .iter()
        .zip(&weights)
        .map(|(map, c)| refine(map, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((refined, weights))
}

/// Ungated SE excitation `σ(W_1 W_l z)`.
pub fn se_excite(z: &Tensor, params: &impl Excitation) -> Result<ChannelWeights> {
    let hidden = numerics::matvec(params.hidden(), z)?;
    Ok(ChannelWeights(numerics::sigmoid_map(&numerics::matvec(params.output(), &hidden)?)))
}

/// SE-frame: every frame excited on its own content only.
pub fn se_frame_weights(seq: &[Tensor], params: &impl Excitation) -> Result<Vec<ChannelWeights>> {
    squeeze_all(seq)?.iter().map(|z| se_excite(z, params)).collect()
}

/// SE-video: one set of weights from the temporally averaged maps, shared by
/// every frame.
pub fn se_video_weights(seq: &[Tensor], params: &impl Excitation) -> Result<ChannelWeights> {
    squeeze_all(seq)?;
    let pooled = numerics::reduce_mean(seq, ReduceAxis::Spatial)?;
    se_excite(&pooled, params)
}

/// Output-layer modulation `c_frame ⊙ c_video`.
pub fn modulate(frame: &Tensor, video: &Tensor) -> Result<ChannelWeights> {
    Ok(ChannelWeights(ops::hadamard(frame, video)?))
}

/// CSCA-v: SE-frame weights modulated element-wise by SE-video weights.
pub fn csca_v_weights(
    seq: &[Tensor],
    frame_params: &impl Excitation,
    video_params: &impl Excitation,
) -> Result<Vec<ChannelWeights>> {
    let video = se_video_weights(seq, video_params)?;
    se_frame_weights(seq, frame_params)?
        .iter()
        .map(|c| modulate(c, &video))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_map(r: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_vec(r: &mut impl Rng, n: usize) -> Tensor {
        Tensor::vector((0..n).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    fn params(seed: u64, c: usize) -> CscaParams {
        CscaParams::init(c, 4, &mut rng::stream(seed, "init")).unwrap()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn loop_matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
        let (m, n) = (w.shape()[0], w.shape()[1]);
        (0..m)
            .map(|i| (0..n).map(|j| w.data()[i * n + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn squeeze_examples() {
        let ones = Tensor::filled(&[2, 2, 2], 1.0);
        assert_eq!(squeeze_frame(&ones).unwrap().data(), &[1.0, 1.0]);
        let map = Tensor::new(vec![2, 1, 2], vec![0.0, 0.0, 2.0, 4.0]).unwrap();
        assert_eq!(squeeze_frame(&map).unwrap().data(), &[0.0, 3.0]);
    }

    #[test]
    fn squeeze_matches_loop() {
        let mut r = rng::stream(1, "test");
        let map = random_map(&mut r, 8, 4, 3);
        let z = squeeze_frame(&map).unwrap();
        for c in 0..8 {
            let mut acc = 0.0;
            for h in 0..4 {
                for w in 0..3 {
                    acc += map.data()[c * 12 + h * 3 + w];
                }
            }
            assert!((z.data()[c] - acc / 12.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gate_with_zero_weights_is_half() {
        let mut p = params(2, 8);
        p.w_g = Tensor::zeros(p.w_g.shape());
        let mut r = rng::stream(2, "test");
        let zs: Vec<Tensor> = (0..3).map(|_| random_vec(&mut r, 8)).collect();
        assert!(sequence_gate(&zs, &p).unwrap().data().iter().all(|&v| v == 0.5));
        assert!(sequence_gate(&[], &p).is_err());
    }

    #[test]
    fn gate_matches_composed_oracle() {
        let p = params(3, 8);
        let mut r = rng::stream(3, "test");
        let zs: Vec<Tensor> = (0..5).map(|_| random_vec(&mut r, 8)).collect();
        let mean: Vec<f64> = (0..8).map(|i| zs.iter().map(|z| z.data()[i]).sum::<f64>() / 5.0).collect();
        let expected: Vec<f64> = loop_matvec(&p.w_g, &mean).into_iter().map(sig).collect();
        let gate = sequence_gate(&zs, &p).unwrap();
        for (a, b) in gate.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        // single frame
        let single = sequence_gate(&zs[..1], &p).unwrap();
        let direct: Vec<f64> = loop_matvec(&p.w_g, zs[0].data()).into_iter().map(sig).collect();
        for (a, b) in single.data().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn attend_frame_cases() {
        let p = params(4, 8);
        let mut r = rng::stream(4, "test");
        let z = random_vec(&mut r, 8);
        let gate = random_vec(&mut r, 2).map(|v| v.abs());
        let c = attend_frame(&z, &gate, &p).unwrap();
        let local = loop_matvec(&p.w_l, z.data());
        let gated: Vec<f64> = local.iter().zip(gate.data()).map(|(a, b)| a * b).collect();
        let expected: Vec<f64> = loop_matvec(&p.w_1, &gated).into_iter().map(sig).collect();
        for (a, b) in c.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }

        let ones = Tensor::filled(&[2], 1.0);
        let neutral = attend_frame(&z, &ones, &p).unwrap();
        let ungated = se_excite(&z, &p).unwrap();
        assert_eq!(neutral, ungated);

        let mut zero_out = p.clone();
        zero_out.w_1 = Tensor::zeros(p.w_1.shape());
        assert!(attend_frame(&z, &gate, &zero_out).unwrap().data().iter().all(|&v| v == 0.5));

        assert!(matches!(
            attend_frame(&Tensor::zeros(&[7]), &gate, &p),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn refine_cases() {
        let mut r = rng::stream(5, "test");
        let map = random_map(&mut r, 4, 2, 3);
        assert_eq!(refine(&map, &Tensor::filled(&[4], 1.0)).unwrap(), map);
        assert!(refine(&map, &Tensor::zeros(&[4])).unwrap().data().iter().all(|&v| v == 0.0));
        let c = random_vec(&mut r, 4);
        let out = refine(&map, &c).unwrap();
        for ch in 0..4 {
            for k in 0..6 {
                assert_eq!(out.data()[ch * 6 + k], map.data()[ch * 6 + k] * c.data()[ch]);
            }
        }
        assert!(refine(&map, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn forward_matches_manual_pipeline() {
        let p = params(6, 8);
        let mut r = rng::stream(6, "test");
        let seq: Vec<Tensor> = (0..4).map(|_| random_map(&mut r, 8, 2, 2)).collect();
        let (maps, weights) = csca_forward(&seq, &p).unwrap();
        let zs: Vec<Tensor> = seq.iter().map(|m| squeeze_frame(m).unwrap()).collect();
        let gate = sequence_gate(&zs, &p).unwrap();
        for t in 0..4 {
            let c = attend_frame(&zs[t], &gate, &p).unwrap();
            assert!(weights[t].max_abs_diff(&c) < 1e-14);
            assert!(maps[t].max_abs_diff(&refine(&seq[t], &c).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn identical_frames_give_identical_weights_for_every_variant() {
        let p = params(7, 8);
        let video = SeParams::init(8, 4, &mut rng::stream(8, "init")).unwrap();
        let mut r = rng::stream(7, "test");
        let frame = random_map(&mut r, 8, 2, 2);
        let seq = vec![frame.clone(); 5];
        let all_equal = |ws: &[ChannelWeights]| ws.iter().all(|w| w == &ws[0]);
        assert!(all_equal(&csca_forward(&seq, &p).unwrap().1));
        assert!(all_equal(&se_frame_weights(&seq, &p).unwrap()));
        assert!(all_equal(&csca_v_weights(&seq, &p, &video).unwrap()));
        let v = se_video_weights(&seq, &p).unwrap();
        let single = se_frame_weights(&[frame], &p).unwrap();
        assert!(v.max_abs_diff(&single[0]) < 1e-15);
    }

    #[test]
    fn se_frame_is_local() {
        let p = params(9, 8);
        let mut r = rng::stream(9, "test");
        let mut seq: Vec<Tensor> = (0..4).map(|_| random_map(&mut r, 8, 2, 2)).collect();
        let before = se_frame_weights(&seq, &p).unwrap();
        seq[2] = random_map(&mut r, 8, 2, 2);
        let after = se_frame_weights(&seq, &p).unwrap();
        for t in [0, 1, 3] {
            assert_eq!(before[t], after[t]);
        }
        assert_ne!(before[2], after[2]);
        let mut zero_out = p.clone();
        zero_out.w_1 = Tensor::zeros(p.w_1.shape());
        assert!(se_frame_weights(&seq, &zero_out)
            .unwrap()
            .iter()
            .all(|c| c.data().iter().all(|&v| v == 0.5)));
    }

    #[test]
    fn se_video_oracle_and_permutation() {
        let p = params(10, 8);
        let mut r = rng::stream(10, "test");
        let seq: Vec<Tensor> = (0..5).map(|_| random_map(&mut r, 8, 2, 3)).collect();
        let v = se_video_weights(&seq, &p).unwrap();
        // oracle: average maps elementwise, GAP, bottleneck
        let mut avg = vec![0.0; 48];
        for m in &seq {
            for (a, b) in avg.iter_mut().zip(m.data()) {
                *a += b / 5.0;
            }
        }
        let z: Vec<f64> = avg.chunks(6).map(|p| p.iter().sum::<f64>() / 6.0).collect();
        let expected: Vec<f64> = loop_matvec(&p.w_1, &loop_matvec(&p.w_l, &z)).into_iter().map(sig).collect();
        for (a, b) in v.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut shuffled = seq.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(se_video_weights(&shuffled, &p).unwrap(), v);
    }

    #[test]
    fn csca_v_reductions() {
        let p = params(11, 8);
        let video = SeParams::init(8, 4, &mut rng::stream(11, "video")).unwrap();
        let mut r = rng::stream(11, "test");
        let seq: Vec<Tensor> = (0..3).map(|_| random_map(&mut r, 8, 2, 2)).collect();
        let frames = se_frame_weights(&seq, &p).unwrap();
        let vid = se_video_weights(&seq, &video).unwrap();
        let combined = csca_v_weights(&seq, &p, &video).unwrap();
        for (t, c) in combined.iter().enumerate() {
            for k in 0..8 {
                assert!((c.data()[k] - frames[t].data()[k] * vid.data()[k]).abs() < 1e-15);
            }
            assert_eq!(modulate(&frames[t], &Tensor::filled(&[8], 1.0)).unwrap(), frames[t]);
            assert_eq!(*modulate(&Tensor::filled(&[8], 1.0), &vid).unwrap(), *vid);
        }
    }

    #[test]
    fn paper_scale_hidden_width() {
        let p = CscaParams::init(2048, 4, &mut rng::stream(0, "init")).unwrap();
        assert_eq!(p.hidden(), 512);
        let z = Tensor::filled(&[2048], 0.01);
        let gate = sequence_gate(&[z.clone()], &p).unwrap();
        assert_eq!(gate.len(), 512);
        assert_eq!(numerics::matvec(&p.w_l, &z).unwrap().len(), 512);
        assert_eq!(attend_frame(&z, &gate, &p).unwrap().len(), 2048);
    }

    #[test]
    fn bad_reduction_is_rejected() {
        assert!(CscaParams::init(10, 4, &mut rng::stream(0, "init")).is_err());
        let w = Tensor::zeros(&[2, 8]);
        assert!(CscaParams::new(w.clone(), Tensor::zeros(&[3, 8]), Tensor::zeros(&[8, 2])).is_err());
    }
}
