use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

/// Sequences shorter than this are used whole at test time.
pub const TEST_FULL_BELOW: usize = 128;
/// Segments of a long test sequence; two frames are taken from each.
pub const TEST_SEGMENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Train,
    Test,
}

/// Bounds of segment `k` when `len` frames are split into `parts` near-equal runs.
fn segment(len: usize, parts: usize, k: usize) -> (usize, usize) {
    (k * len / parts, (k + 1) * len / parts)
}

/// Frame indices fed to the head.
///
/// Train: `T/2` equal segments with two distinct random frames from each,
/// ascending. A sequence shorter than `T` repeats frames at evenly spaced
/// positions instead. Test: every frame below 128, otherwise the frames at a
/// quarter and three quarters of each of 64 segments.
pub fn sample_frames(seq_len: usize, t: usize, mode: SampleMode, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if seq_len == 0 {
        return Err(Error::Precondition("cannot sample frames from an empty sequence".into()));
    }
    match mode {
        SampleMode::Test if seq_len < TEST_FULL_BELOW => Ok((0..seq_len).collect()),
        SampleMode::Test => Ok((0..TEST_SEGMENTS)
            .flat_map(|k| {
                let (a, b) = segment(seq_len, TEST_SEGMENTS, k);
                let n = b - a;
                [a + n / 4, a + 3 * n / 4]
            })
            .collect()),
        SampleMode::Train => {
            if t == 0 || t % 2 != 0 {
                return Err(Error::Config(format!("training samples T/2 segments; T = {t} must be even")));
            }
            if seq_len < t {
                return Ok((0..t).map(|i| i * seq_len / t).collect());
            }
            let parts = t / 2;
            let mut out = Vec::with_capacity(t);
            for k in 0..parts {
                let (a, b) = segment(seq_len, parts, k);
                let mut pick = sample(rng, b - a, 2).into_vec();
                pick.sort_unstable();
                out.extend(pick.into_iter().map(|i| a + i));
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn exact_length_is_forced() {
        let mut r = rng::stream(0, "t");
        assert_eq!(sample_frames(8, 8, SampleMode::Train, &mut r).unwrap(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn short_test_sequences_are_used_whole() {
        let mut r = rng::stream(0, "t");
        assert_eq!(sample_frames(100, 8, SampleMode::Test, &mut r).unwrap(), (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn long_test_sequences_take_128_deterministic_frames() {
        let mut r = rng::stream(0, "t");
        let a = sample_frames(300, 8, SampleMode::Test, &mut r).unwrap();
        assert_eq!(a.len(), 128);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_frames(300, 8, SampleMode::Test, &mut rng::stream(9, "u")).unwrap());
        let exact = sample_frames(128, 8, SampleMode::Test, &mut r).unwrap();
        assert_eq!(exact, (0..128).collect::<Vec<_>>());
    }

    #[test]
    fn short_train_sequences_repeat_frames() {
        let mut r = rng::stream(0, "t");
        assert_eq!(sample_frames(3, 8, SampleMode::Train, &mut r).unwrap(), vec![0, 0, 0, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn odd_t_is_rejected_in_train_mode() {
        let mut r = rng::stream(0, "t");
        assert!(matches!(sample_frames(16, 7, SampleMode::Train, &mut r), Err(Error::Config(_))));
        assert!(sample_frames(16, 7, SampleMode::Test, &mut r).is_ok());
        assert!(sample_frames(0, 8, SampleMode::Test, &mut r).is_err());
    }
}
