use crate::error::{Error, Result};
use crate::model::{video_feature, HeadParams};
use crate::synthdata::{make_sequence, CorruptionKind, CorruptionSpec, Dataset, SequenceBatch};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub frame: usize,
    /// Frame-to-video similarity; `None` when the method computes none.
    pub s: Option<f64>,
    pub w: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDump {
    pub rows: Vec<WeightRow>,
    /// Spearman correlation of `w` with ground-truth quality; `None` when
    /// either is constant.
    pub spearman: Option<f64>,
}

impl WeightDump {
    /// Frame holding the smallest weight (first on ties).
    pub fn argmin_w(&self) -> usize {
        self.rows
            .iter()
            .min_by(|a, b| a.w.total_cmp(&b.w).then(a.frame.cmp(&b.frame)))
            .map(|r| r.frame)
            .expect("dumps are never empty")
    }

    pub fn weight_spread(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.w), hi.max(r.w)));
        hi - lo
    }
}

/// Per-frame scores and weights of `seq` under `head`. Plain temporal pooling
/// reports a weight of 1 for every frame.
pub fn dump_weights(seq: &SequenceBatch, head: &HeadParams) -> Result<WeightDump> {
    let t = seq.len();
    if t < 2 {
        return Err(Error::Precondition(format!("weight dump needs at least two frames, got {t}")));
    }
    if seq.quality.len() != t {
        return Err(Error::dim("dump_weights", &[t], &[seq.quality.len()]));
    }
    let (_, diag) = video_feature(&seq.frames, head)?;
    let w: Vec<f64> = diag.w.map_or_else(|| vec![1.0; t], |w| w.into_data());
    let s = diag.s.map(|s| s.into_data());
    let rows = (0..t)
        .map(|i| WeightRow {
            frame: i,
            s: s.as_ref().map(|s| s[i]),
            w: w[i],
            quality: seq.quality[i],
        })
        .collect();
    Ok(WeightDump {
        rows,
        spearman: spearman(&w, &seq.quality),
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// One sequence per eval identity with exactly one fully occluded frame
/// (severity 1); every other frame is clean. The next eval identity serves as
/// the bystander when the benchmark has clutter.
pub fn occlusion_probes(dataset: &Dataset, seed: u64) -> Result<Vec<SequenceBatch>> {
    let frames = dataset.config.frames;
    let spec = CorruptionSpec {
        kind: CorruptionKind::Occlusion,
        rate: 1.0 / frames as f64,
        severity: 1.0,
    };
    let frame_config = dataset.config.frame_config();
    let ids = &dataset.eval_ids;
    ids.iter()
        .enumerate()
        .map(|(k, &id)| {
            let s = rng::derive_seed(seed, "occlusion-probe", k as u64);
            let bystander = ids[(k + 1) % ids.len()];
            make_sequence(&dataset.bank, id as usize, bystander as usize, frames, &spec, &frame_config, s)
        })
        .collect()
}
