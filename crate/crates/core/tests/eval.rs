mod common;

use ctxagg::eval::{
    ablate, ablate_on, average_precision, cmc, dump_weights, evaluate, retrieve, AblationConfig, Ranking,
};
use ctxagg::model::{train, HeadParams, Hyper, Method, TrainSet};
use ctxagg::numerics::{cosine, Tensor};
use ctxagg::rng;
use ctxagg::synthdata::{make_dataset, make_sequence, CorruptionSpec, Dataset, DatasetConfig, SequenceBatch};
use rand::Rng;

#[test]
fn orthogonal_gallery_puts_the_aligned_entry_first() {
    let e = |k: usize| Tensor::vector((0..5).map(|i| if i == k { 1.0 } else { 0.0 }).collect());
    let gallery = vec![e(1), e(2), e(0).scale(3.0), e(3), e(4)];
    assert_eq!(retrieve(&e(0), &gallery).unwrap()[0], 2);
}

#[test]
fn retrieval_matches_a_full_sort() {
    let mut r = rng::stream(0, "retrieval");
    for _ in 0..50 {
        let q = common::random_vector(&mut r, 6, -1.0, 1.0);
        let gallery: Vec<Tensor> = (0..20).map(|_| common::random_vector(&mut r, 6, -1.0, 1.0)).collect();
        let mut scored: Vec<(f64, usize)> = gallery.iter().enumerate().map(|(i, g)| (cosine(&q, g).unwrap(), i)).collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = scored.into_iter().map(|(_, i)| i).collect();
        assert_eq!(retrieve(&q, &gallery).unwrap(), expected);
    }
}

fn ranking(matches: &[bool]) -> Ranking {
    Ranking {
        query_id: 0,
        order: (0..matches.len()).collect(),
        matches: matches.to_vec(),
    }
}

#[test]
fn cmc_and_ap_hand_cases() {
    let third = ranking(&[false, false, true, false, false]);
    assert_eq!(cmc(std::slice::from_ref(&third), 1).unwrap(), 0.0);
    assert_eq!(cmc(std::slice::from_ref(&third), 5).unwrap(), 1.0);
    assert_eq!(cmc(&[ranking(&[true, false]), ranking(&[true])], 1).unwrap(), 1.0);
    assert_eq!(average_precision(&ranking(&[true])).unwrap(), 1.0);
    assert_eq!(average_precision(&ranking(&[true, true, false, false, false])).unwrap(), 1.0);
    assert_eq!(average_precision(&ranking(&[false, true, false, true, false])).unwrap(), 0.5);
}

#[test]
fn cmc_matches_counting_oracle_over_many_queries() {
    let mut r = rng::stream(1, "cmc");
    let rankings: Vec<Ranking> = (0..100)
        .map(|_| {
            let n = r.random_range(1..=20);
            let first = r.random_range(0..n);
            ranking(&(0..n).map(|i| i >= first && r.random_bool(if i == first { 1.0 } else { 0.3 })).collect::<Vec<_>>())
        })
        .collect();
    for k in 1..=20 {
        let hits = rankings.iter().filter(|rk| rk.matches.iter().take(k).any(|&m| m)).count();
        assert_eq!(cmc(&rankings, k).unwrap(), hits as f64 / 100.0);
    }
}

fn tiny_config() -> AblationConfig {
    AblationConfig {
        dataset: DatasetConfig {
            ids: 10,
            seqs_per_id: 3,
            channels: 16,
            frames: 8,
            ..DatasetConfig::default()
        },
        hyper: Hyper {
            channels: 16,
            d: 8,
            frames: 4,
            epochs: 3,
            batch_ids: 2,
            batch_seqs: 2,
            ..Hyper::default()
        },
        methods: Method::ALL.to_vec(),
    }
}

#[test]
fn ablation_covers_every_method_and_repeats_exactly() {
    let config = tiny_config();
    let a = ablate(&config, &[7]).unwrap();
    let b = ablate(&config, &[7]).unwrap();
    assert_eq!(a.rows.len(), 9);
    for (m, row) in Method::ALL.iter().zip(&a.rows) {
        assert_eq!(row.method, *m);
        assert_eq!(row.failed, 0);
        for v in [row.rank1, row.rank5, row.rank20, row.map] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert_eq!(format!("{:?}", a.rows), format!("{:?}", b.rows));
}

#[test]
fn repeated_variant_gives_identical_rows() {
    let config = tiny_config();
    let dataset = make_dataset(&config.dataset, 3).unwrap();
    let report = ablate_on(&dataset, config.hyper, &[Method::Cfa, Method::Cfa], &[0, 1]).unwrap();
    assert_eq!(format!("{:?}", report.rows[0]), format!("{:?}", report.rows[1]));
}

fn trained(method: Method, seed: u64) -> (Dataset, HeadParams) {
    let dataset = make_dataset(&DatasetConfig::benchmark(), seed).unwrap();
    let set = TrainSet::from_dataset(&dataset).unwrap();
    let head = HeadParams::init(Hyper::default(), method, dataset.train_ids.len(), seed).unwrap();
    let head = train(&set, head, seed).unwrap().head;
    (dataset, head)
}

fn clean_sequence(dataset: &Dataset, id: u32, seed: u64) -> SequenceBatch {
    let mut frame = dataset.config.frame_config();
    frame.jitter = 0.1;
    let other = dataset.eval_ids.iter().copied().find(|&o| o != id).unwrap();
    make_sequence(&dataset.bank, id as usize, other as usize, 16, &CorruptionSpec::clean(), &frame, seed).unwrap()
}

#[test]
fn trained_weights_are_flat_on_clean_sequences() {
    let (dataset, head) = trained(Method::CsaNet, 0);
    assert!(evaluate(&head, &dataset).unwrap().map > 0.0);
    for (k, &id) in dataset.eval_ids.iter().enumerate() {
        let dump = dump_weights(&clean_sequence(&dataset, id, k as u64), &head).unwrap();
        let w: Vec<f64> = dump.rows.iter().map(|r| r.w).collect();
        let spread = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 0.05, "identity {id}: spread {spread}");
        assert_eq!(dump.spearman, None);
    }
}

#[test]
fn identical_frames_get_equal_weights() {
    let (dataset, head) = trained(Method::Cfa, 1);
    let seq = clean_sequence(&dataset, dataset.eval_ids[0], 0);
    let same = SequenceBatch {
        identity: seq.identity,
        frames: vec![seq.frames[0].clone(); 6],
        quality: vec![1.0; 6],
    };
    for method in [Method::Cfa, Method::CfaV, Method::Qan, Method::Baseline] {
        let h = HeadParams::init(Hyper::default(), method, 30, 0).unwrap();
        for head in [&head, &h] {
            let dump = dump_weights(&same, head).unwrap();
            assert!(dump.rows.iter().all(|r| r.w == dump.rows[0].w), "{method}");
        }
    }
}
