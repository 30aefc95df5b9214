use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_frames, train, video_feature, HeadParams, Hyper, Method, SampleMode, TrainSet};
use crate::numerics::Tensor;
use crate::rng;
use crate::synthdata::{make_dataset, Dataset, DatasetConfig, SequenceBatch};

use super::metrics::{rank_gallery, Metrics, Ranking};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CTXAGG_THREADS";

/// Worker pool sized by `CTXAGG_THREADS` when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Video feature of a sequence under test-time frame selection.
pub fn encode(seq: &SequenceBatch, head: &HeadParams) -> Result<Tensor> {
    // test-mode selection is deterministic; the stream is never drawn from
    let mut unused = rng::stream(0, "test-sampling");
    let picks = sample_frames(seq.len(), head.hyper.frames, SampleMode::Test, &mut unused)?;
    let frames: Vec<Tensor> = picks.into_iter().map(|i| seq.frames[i].clone()).collect();
    Ok(video_feature(&frames, head)?.0)
}

pub fn rankings(head: &HeadParams, query: &[SequenceBatch], gallery: &[SequenceBatch]) -> Result<Vec<Ranking>> {
    let gallery_h = gallery.iter().map(|s| encode(s, head)).collect::<Result<Vec<_>>>()?;
    let gallery_ids: Vec<u32> = gallery.iter().map(|s| s.identity).collect();
    query
        .iter()
        .map(|q| rank_gallery(&encode(q, head)?, q.identity, &gallery_h, &gallery_ids))
        .collect()
}

/// CMC and mAP of `head` on the query/gallery split of `dataset`.
pub fn evaluate(head: &HeadParams, dataset: &Dataset) -> Result<Metrics> {
    Metrics::from_rankings(&rankings(head, &dataset.query, &dataset.gallery)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub dataset: DatasetConfig,
    pub hyper: Hyper,
    pub methods: Vec<Method>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::benchmark(),
            hyper: Hyper::default(),
            methods: Method::ALL.to_vec(),
        }
    }
}

/// One (method, seed) training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    /// Metrics, or the error that stopped the run.
    pub outcome: std::result::Result<Metrics, String>,
    pub final_loss: Option<f64>,
    pub head: Option<HeadParams>,
}

/// Seed-averaged metrics of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: Method,
    pub rank1: f64,
    pub rank5: f64,
    pub rank20: f64,
    pub map: f64,
    /// Runs that completed.
    pub runs: usize,
    /// Runs that diverged or failed; excluded from the means.
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<RunRecord>,
    /// The dataset of every seed, in seed order.
    pub datasets: Vec<(u64, Dataset)>,
}

impl AblationReport {
    pub fn row(&self, method: Method) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn run(&self, method: Method, seed: u64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.method == method && r.seed == seed)
    }
}

fn run_one(dataset: &Dataset, set: &TrainSet, hyper: Hyper, method: Method, seed: u64, keep_head: bool) -> RunRecord {
    let attempt = || -> Result<(Metrics, f64, HeadParams)> {
        let head = HeadParams::init(hyper, method, dataset.train_ids.len(), seed)?;
        let outcome = train(set, head, seed)?;
        let metrics = evaluate(&outcome.head, dataset)?;
        let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
        Ok((metrics, last, outcome.head))
    };
    match attempt() {
        Ok((metrics, last, head)) => RunRecord {
            method,
            seed,
            outcome: Ok(metrics),
            final_loss: Some(last),
            head: keep_head.then_some(head),
        },
        Err(e) => RunRecord {
            method,
            seed,
            outcome: Err(e.to_string()),
            final_loss: None,
            head: None,
        },
    }
}

fn collate(methods: &[Method], runs: &[RunRecord]) -> Vec<AblationRow> {
    methods
        .iter()
        .map(|&method| {
            let ok: Vec<&Metrics> = runs
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let failed = runs.iter().filter(|r| r.method == method && r.outcome.is_err()).count();
            let mean = |f: fn(&Metrics) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                }
            };
            AblationRow {
                method,
                rank1: mean(|m| m.rank1),
                rank5: mean(|m| m.rank5),
                rank20: mean(|m| m.rank20),
                map: mean(|m| m.map),
                runs: ok.len(),
                failed,
            }
        })
        .collect()
}

fn run_grid(
    datasets: Vec<(u64, Dataset)>,
    hyper: Hyper,
    methods: &[Method],
    keep_heads: bool,
) -> Result<AblationReport> {
    hyper.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("ablation needs at least one method".into()));
    }
    let sets = datasets
        .iter()
        .map(|(_, d)| TrainSet::from_dataset(d))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Method)> = (0..datasets.len())
        .flat_map(|k| methods.iter().map(move |&m| (k, m)))
        .collect();
    let pool = thread_pool()?;
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, m)| run_one(&datasets[k].1, &sets[k], hyper, m, datasets[k].0, keep_heads))
            .collect()
    });
    Ok(AblationReport {
        rows: collate(methods, &runs),
        runs,
        datasets,
    })
}

/// Trains and evaluates every method once per seed. Each seed generates its
/// own benchmark from `config.dataset` and drives initialization and
/// sampling, so all methods of one seed see the same data, the same shared
/// initial weights and the same batches. Failed runs are flagged in their
/// row and do not stop the others.
pub fn ablate(config: &AblationConfig, seeds: &[u64]) -> Result<AblationReport> {
    ablate_with(config, seeds, false)
}

/// [`ablate`], optionally keeping every trained head in the run records.
pub fn ablate_with(config: &AblationConfig, seeds: &[u64], keep_heads: bool) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let datasets = seeds
        .iter()
        .map(|&s| make_dataset(&config.dataset, s).map(|d| (s, d)))
        .collect::<Result<Vec<_>>>()?;
    run_grid(datasets, config.hyper, &config.methods, keep_heads)
}

/// Ablation on one fixed dataset; seeds vary only initialization and sampling.
pub fn ablate_on(dataset: &Dataset, hyper: Hyper, methods: &[Method], seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let datasets = seeds.iter().map(|&s| (s, dataset.clone())).collect();
    run_grid(datasets, hyper, methods, false)
}
