use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bank::IdentityBank;
use crate::csca::squeeze_frame;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Another pedestrian blended into the frame.
    Interference,
    /// A contiguous block of channels loses the identity signal.
    Occlusion,
    /// Bounding-box errors, modelled as broadband noise.
    DetectionNoise,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] = [
        CorruptionKind::Interference,
        CorruptionKind::Occlusion,
        CorruptionKind::DetectionNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Interference => "interference",
            CorruptionKind::Occlusion => "occlusion",
            CorruptionKind::DetectionNoise => "detection_noise",
        }
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Fraction of frames corrupted.
    pub rate: f64,
    /// Mixing coefficient α of the corruption.
    pub severity: f64,
}

impl CorruptionSpec {
    pub fn clean() -> Self {
        Self {
            kind: CorruptionKind::Interference,
            rate: 0.0,
            severity: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!("corruption rate {} outside [0, 1]", self.rate)));
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(Error::Config(format!("corruption severity {} outside [0, 1]", self.severity)));
        }
        Ok(())
    }

    /// Number of corrupted frames in a sequence of `frames`.
    pub fn corrupted_count(&self, frames: usize) -> usize {
        ((self.rate * frames as f64).round() as usize).min(frames)
    }
}

/// Spatial size and noise levels of generated frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub height: usize,
    pub width: usize,
    /// Per-frame channel jitter, as a fraction of the prototype norm. Stands in
    /// for pose and viewpoint changes between frames.
    pub jitter: f64,
    /// Per-sequence deviation from the prototype (camera and clothing
    /// appearance shared by all frames of one tracklet).
    pub sequence_jitter: f64,
    /// Overall scale of the maps; prototypes have this norm.
    pub amplitude: f64,
    /// Strength of a bystander (the second identity) present in every frame,
    /// relative to the tracked identity.
    pub clutter: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            height: 4,
            width: 4,
            jitter: 0.1,
            sequence_jitter: 0.0,
            amplitude: 1.0,
            clutter: 0.0,
        }
    }
}

/// One tracklet of frame feature maps with ground-truth per-frame quality.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub identity: u32,
    /// `C×H×W` maps, one per frame.
    pub frames: Vec<Tensor>,
    /// 1 for clean frames, `1 − severity` for corrupted ones.
    pub quality: Vec<f64>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn map_shape(&self) -> &[usize] {
        self.frames[0].shape()
    }

    /// Spatially pooled channel vector of every frame.
    pub fn squeezed(&self) -> Result<Vec<Tensor>> {
        self.frames.iter().map(squeeze_frame).collect()
    }
}

fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

fn gaussian_vector(r: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| normal.sample(r)).collect()
}

/// Generates one tracklet of identity `id`.
///
/// `other_id` supplies the interfering pedestrian; it must differ from `id`
/// when the corruption kind is interference. Values are rounded to `f32`
/// precision so a sequence survives a round trip through a sequence file
/// unchanged.
pub fn make_sequence(
    bank: &IdentityBank,
    id: usize,
    other_id: usize,
    frames: usize,
    spec: &CorruptionSpec,
    frame_config: &FrameConfig,
    seed: u64,
) -> Result<SequenceBatch> {
    spec.validate()?;
    if frames == 0 {
        return Err(Error::Config("a sequence needs at least one frame".into()));
    }
    if frame_config.height == 0 || frame_config.width == 0 {
        return Err(Error::Config("frame maps need positive height and width".into()));
    }
    if !(frame_config.jitter >= 0.0 && frame_config.sequence_jitter >= 0.0) {
        return Err(Error::Config("jitter amplitudes must be non-negative".into()));
    }
    if !(frame_config.amplitude > 0.0 && frame_config.amplitude.is_finite()) {
        return Err(Error::Config(format!("amplitude {} must be positive", frame_config.amplitude)));
    }
    if !(0.0..1.0).contains(&frame_config.clutter) {
        return Err(Error::Config(format!("clutter {} outside [0, 1)", frame_config.clutter)));
    }
    let needs_other = (spec.kind == CorruptionKind::Interference && spec.rate > 0.0) || frame_config.clutter > 0.0;
    if needs_other && id == other_id {
        return Err(Error::Config(format!(
            "interference and clutter need a second identity, got {id} twice"
        )));
    }
    let proto = bank.prototype(id)?;
    let other = bank.prototype(other_id)?;
    let c = proto.len();
    let area = frame_config.height * frame_config.width;
    let per_channel = 1.0 / (c as f64).sqrt();
    let mut r = rng::stream(seed, "sequence");

    let appearance = gaussian_vector(&mut r, c, frame_config.sequence_jitter * per_channel);
    let base: Vec<f64> = proto
        .data()
        .iter()
        .zip(other.data())
        .zip(&appearance)
        .map(|((p, o), a)| p + frame_config.clutter * o + a)
        .collect();

    let n_bad = spec.corrupted_count(frames);
    let mut corrupted = vec![false; frames];
    for i in sample(&mut r, frames, n_bad) {
        corrupted[i] = true;
    }

    let alpha = spec.severity;
    let mut maps = Vec::with_capacity(frames);
    let mut quality = Vec::with_capacity(frames);
    for &bad in &corrupted {
        let mut signal = base.clone();
        if bad {
            match spec.kind {
                CorruptionKind::Interference => {
                    for (s, o) in signal.iter_mut().zip(other.data()) {
                        *s = (1.0 - alpha) * *s + alpha * o;
                    }
                }
                CorruptionKind::Occlusion => {
                    let block = (alpha * c as f64).round() as usize;
                    let start = r.random_range(0..c);
                    for k in 0..block {
                        signal[(start + k) % c] = 0.0;
                    }
                }
                CorruptionKind::DetectionNoise => {
                    let noise = gaussian_vector(&mut r, c, alpha * per_channel);
                    for (s, n) in signal.iter_mut().zip(noise) {
                        *s += n;
                    }
                }
            }
        }
        let jitter = gaussian_vector(&mut r, c, frame_config.jitter * per_channel);
        let pixel = gaussian_vector(&mut r, c * area, frame_config.jitter * per_channel);
        let mut data = Vec::with_capacity(c * area);
        for ch in 0..c {
            let level = signal[ch] + jitter[ch];
            for k in 0..area {
                data.push(to_f32_precision(frame_config.amplitude * (level + pixel[ch * area + k])));
            }
        }
        maps.push(Tensor::new(vec![c, frame_config.height, frame_config.width], data)?);
        quality.push(to_f32_precision(if bad { 1.0 - alpha } else { 1.0 }));
    }

    Ok(SequenceBatch {
        identity: id as u32,
        frames: maps,
        quality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cosine;
    use crate::synthdata::make_identity_bank;

    fn bank() -> IdentityBank {
        make_identity_bank(6, 16, 2).unwrap()
    }

    #[test]
    fn clean_sequence_stays_near_prototype() {
        let b = bank();
        let seq = make_sequence(&b, 1, 2, 12, &CorruptionSpec::clean(), &FrameConfig::default(), 5).unwrap();
        assert!(seq.quality.iter().all(|&q| q == 1.0));
        for z in seq.squeezed().unwrap() {
            assert!(cosine(&z, &b.prototypes[1]).unwrap() >= 0.99);
        }
    }

    #[test]
    fn full_interference_is_the_mixture() {
        let b = bank();
        let spec = CorruptionSpec {
            kind: CorruptionKind::Interference,
            rate: 1.0,
            severity: 1.0,
        };
        let frame = FrameConfig {
            jitter: 0.0,
            ..FrameConfig::default()
        };
        let seq = make_sequence(&b, 0, 3, 5, &spec, &frame, 1).unwrap();
        for z in seq.squeezed().unwrap() {
            for (a, e) in z.data().iter().zip(b.prototypes[3].data()) {
                assert!((a - e).abs() < 1e-6);
            }
        }
        assert!(seq.quality.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn corrupted_count_is_exact() {
        let b = bank();
        let spec = CorruptionSpec {
            kind: CorruptionKind::Occlusion,
            rate: 0.25,
            severity: 0.5,
        };
        for seed in 0..50 {
            let seq = make_sequence(&b, 0, 1, 16, &spec, &FrameConfig::default(), seed).unwrap();
            assert_eq!(seq.quality.iter().filter(|&&q| q < 1.0).count(), 4);
            let again = make_sequence(&b, 0, 1, 16, &spec, &FrameConfig::default(), seed).unwrap();
            assert_eq!(seq, again);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let b = bank();
        let bad_rate = CorruptionSpec {
            kind: CorruptionKind::Occlusion,
            rate: 1.5,
            severity: 0.5,
        };
        assert!(matches!(
            make_sequence(&b, 0, 1, 8, &bad_rate, &FrameConfig::default(), 0),
            Err(Error::Config(_))
        ));
        let self_interference = CorruptionSpec {
            kind: CorruptionKind::Interference,
            rate: 0.5,
            severity: 0.5,
        };
        assert!(make_sequence(&b, 2, 2, 8, &self_interference, &FrameConfig::default(), 0).is_err());
    }

    #[test]
    fn clutter_adds_the_bystander_to_every_frame() {
        let b = bank();
        let quiet = FrameConfig {
            jitter: 0.0,
            ..FrameConfig::default()
        };
        let cluttered = FrameConfig { clutter: 0.4, ..quiet };
        let clean = CorruptionSpec::clean();
        let seq = make_sequence(&b, 0, 3, 4, &clean, &cluttered, 1).unwrap();
        for z in seq.squeezed().unwrap() {
            for ((a, p), o) in z.data().iter().zip(b.prototypes[0].data()).zip(b.prototypes[3].data()) {
                assert!((a - (p + 0.4 * o)).abs() < 1e-6);
            }
        }
        assert!(seq.quality.iter().all(|&q| q == 1.0));
        assert!(make_sequence(&b, 2, 2, 4, &clean, &cluttered, 1).is_err());
        let too_much = FrameConfig { clutter: 1.0, ..quiet };
        assert!(matches!(make_sequence(&b, 0, 3, 4, &clean, &too_much, 1), Err(Error::Config(_))));
    }

    #[test]
    fn labels_fall_with_severity() {
        let b = bank();
        let mut previous = f64::INFINITY;
        for severity in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let spec = CorruptionSpec {
                kind: CorruptionKind::DetectionNoise,
                rate: 0.5,
                severity,
            };
            let seq = make_sequence(&b, 4, 5, 8, &spec, &FrameConfig::default(), 3).unwrap();
            let worst = seq.quality.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(worst < previous || severity == 0.0);
            previous = worst;
        }
    }
}
