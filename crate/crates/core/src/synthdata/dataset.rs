use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bank::{make_identity_bank_with, BankConfig, IdentityBank};
use super::csaf::{load_csaf, save_csaf};
use super::sequence::{make_sequence, CorruptionKind, CorruptionSpec, FrameConfig, SequenceBatch};
use crate::error::{Error, Result};
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Total identities; split into train and eval.
    pub ids: usize,
    pub seqs_per_id: usize,
    pub eval_fraction: f64,
    /// Frames per generated tracklet.
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub rate: f64,
    pub severity_min: f64,
    pub severity_max: f64,
    pub kinds: Vec<CorruptionKind>,
    pub jitter: f64,
    pub sequence_jitter: f64,
    pub amplitude: f64,
    pub clutter: f64,
    pub cap: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            ids: 50,
            seqs_per_id: 4,
            eval_fraction: 0.4,
            frames: 16,
            channels: 64,
            height: 4,
            width: 4,
            rate: 0.3,
            severity_min: 0.5,
            severity_max: 1.0,
            kinds: CorruptionKind::ALL.to_vec(),
            jitter: 0.1,
            sequence_jitter: 0.0,
            amplitude: 1.0,
            clutter: 0.0,
            cap: 0.5,
        }
    }
}

impl DatasetConfig {
    /// The seeded method-comparison benchmark: 30 train and 20 eval
    /// identities, every tracklet trailed by a bystander at 0.4 strength, and
    /// 30% of frames taken over completely by that bystander.
    pub fn benchmark() -> Self {
        Self {
            kinds: vec![CorruptionKind::Interference],
            severity_min: 1.0,
            severity_max: 1.0,
            jitter: 0.2,
            sequence_jitter: 0.2,
            amplitude: 4.0,
            clutter: 0.4,
            ..Self::default()
        }
    }

    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            height: self.height,
            width: self.width,
            jitter: self.jitter,
            sequence_jitter: self.sequence_jitter,
            amplitude: self.amplitude,
            clutter: self.clutter,
        }
    }

    pub fn eval_ids(&self) -> usize {
        (self.ids as f64 * self.eval_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.eval_fraction) {
            return fail(format!("eval fraction {} outside [0, 1]", self.eval_fraction));
        }
        let eval = self.eval_ids();
        if eval == 0 || eval >= self.ids {
            return fail(format!(
                "{} identities with eval fraction {} leaves an empty split",
                self.ids, self.eval_fraction
            ));
        }
        if self.seqs_per_id < 2 {
            return fail(format!(
                "eval identities need a query and a gallery sequence, got {} per identity",
                self.seqs_per_id
            ));
        }
        if self.frames == 0 || self.channels == 0 {
            return fail("frames and channels must be positive".into());
        }
        if self.kinds.is_empty() {
            return fail("at least one corruption kind is required".into());
        }
        if !(0.0 <= self.severity_min && self.severity_min <= self.severity_max && self.severity_max <= 1.0) {
            return fail(format!(
                "severity range [{}, {}] must lie within [0, 1]",
                self.severity_min, self.severity_max
            ));
        }
        CorruptionSpec {
            kind: self.kinds[0],
            rate: self.rate,
            severity: self.severity_max,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub split: Split,
    pub identity: u32,
    pub other_identity: u32,
    pub seed: u64,
    pub kind: CorruptionKind,
    pub rate: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: DatasetConfig,
    pub sequence: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub seed: u64,
    pub bank: IdentityBank,
    pub train_ids: Vec<u32>,
    pub eval_ids: Vec<u32>,
    pub train: Vec<SequenceBatch>,
    pub query: Vec<SequenceBatch>,
    pub gallery: Vec<SequenceBatch>,
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    /// Classifier index of a training identity.
    pub fn train_label(&self, identity: u32) -> Option<usize> {
        self.train_ids.binary_search(&identity).ok()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.seed,
            config: self.config.clone(),
            sequence: self.entries.clone(),
        }
    }
}

fn bank_for(config: &DatasetConfig, seed: u64) -> Result<IdentityBank> {
    let bank_config = BankConfig {
        cap: config.cap,
        ..BankConfig::default()
    };
    make_identity_bank_with(config.ids, config.channels, rng::derive_seed(seed, "bank", 0), &bank_config)
}

/// Generates the train, query and gallery splits. Train and eval identities
/// are disjoint; each eval identity contributes its first sequence as a query
/// and the rest to the gallery.
pub fn make_dataset(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let bank = bank_for(config, seed)?;
    let mut r = rng::stream(seed, "dataset");

    let mut order: Vec<u32> = (0..config.ids as u32).collect();
    order.shuffle(&mut r);
    let n_eval = config.eval_ids();
    let mut eval_ids = order[..n_eval].to_vec();
    let mut train_ids = order[n_eval..].to_vec();
    eval_ids.sort_unstable();
    train_ids.sort_unstable();

    let frame_config = config.frame_config();
    let mut dataset = Dataset {
        config: config.clone(),
        seed,
        bank,
        train_ids: train_ids.clone(),
        eval_ids: eval_ids.clone(),
        train: Vec::new(),
        query: Vec::new(),
        gallery: Vec::new(),
        entries: Vec::new(),
    };

    let mut index = 0u64;
    for (pool, is_eval) in [(&train_ids, false), (&eval_ids, true)] {
        for &id in pool.iter() {
            for k in 0..config.seqs_per_id {
                let split = match (is_eval, k) {
                    (false, _) => Split::Train,
                    (true, 0) => Split::Query,
                    (true, _) => Split::Gallery,
                };
                let kind = config.kinds[r.random_range(0..config.kinds.len())];
                let severity = if config.severity_max > config.severity_min {
                    r.random_range(config.severity_min..=config.severity_max)
                } else {
                    config.severity_min
                };
                let candidates: Vec<u32> = if pool.len() > 1 { pool.clone() } else { order.clone() };
                let other = loop {
                    let pick = candidates[r.random_range(0..candidates.len())];
                    if pick != id {
                        break pick;
                    }
                };
                let spec = CorruptionSpec {
                    kind,
                    rate: config.rate,
                    severity,
                };
                let seq_seed = rng::derive_seed(seed, "sequence", index);
                let seq = make_sequence(
                    &dataset.bank,
                    id as usize,
                    other as usize,
                    config.frames,
                    &spec,
                    &frame_config,
                    seq_seed,
                )?;
                dataset.entries.push(ManifestEntry {
                    file: format!("seq_{index:05}.csaf"),
                    split,
                    identity: id,
                    other_identity: other,
                    seed: seq_seed,
                    kind,
                    rate: config.rate,
                    severity,
                });
                match split {
                    Split::Train => dataset.train.push(seq),
                    Split::Query => dataset.query.push(seq),
                    Split::Gallery => dataset.gallery.push(seq),
                }
                index += 1;
            }
        }
    }
    Ok(dataset)
}

/// Writes every sequence as a CSAF file plus `manifest.toml` into `dir`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut train = dataset.train.iter();
    let mut query = dataset.query.iter();
    let mut gallery = dataset.gallery.iter();
    for entry in &dataset.entries {
        let seq = match entry.split {
            Split::Train => train.next(),
            Split::Query => query.next(),
            Split::Gallery => gallery.next(),
        }
        .ok_or_else(|| Error::Format(format!("manifest entry {} has no sequence", entry.file)))?;
        save_csaf(&dir.join(&entry.file), seq)?;
    }
    let text = toml::to_string(&dataset.manifest())
        .map_err(|e| Error::Format(format!("cannot serialize manifest: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("bad manifest: {e}")))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let bank = bank_for(&manifest.config, manifest.seed)?;
    let mut train_ids = Vec::new();
    let mut eval_ids = Vec::new();
    let (mut train, mut query, mut gallery) = (Vec::new(), Vec::new(), Vec::new());
    for entry in &manifest.sequence {
        let seq = load_csaf(&dir.join(&entry.file), entry.identity)?;
        match entry.split {
            Split::Train => {
                train_ids.push(entry.identity);
                train.push(seq);
            }
            Split::Query => {
                eval_ids.push(entry.identity);
                query.push(seq);
            }
            Split::Gallery => {
                eval_ids.push(entry.identity);
                gallery.push(seq);
            }
        }
    }
    train_ids.sort_unstable();
    train_ids.dedup();
    eval_ids.sort_unstable();
    eval_ids.dedup();
    Ok(Dataset {
        config: manifest.config,
        seed: manifest.seed,
        bank,
        train_ids,
        eval_ids,
        train,
        query,
        gallery,
        entries: manifest.sequence,
    })
}
