mod common;

use common::{propagation_coefficients, random_gallery, random_maps, random_vector};
use ctxagg::cfa::{aggregate, cfa_forward, contrastive_weights, propagate, similarity_matrix, CfaParams};
use ctxagg::csca::{csca_forward, csca_v_weights, se_frame_weights, se_video_weights, CscaParams, SeParams};
use ctxagg::eval::{cmc, mean_ap, rank_gallery, Ranking};
use ctxagg::model::{random_batch, total_loss, video_feature, HeadParams, Hyper, Method};
use ctxagg::numerics::{cosine, sigmoid_map, temporal_mean, Tensor};
use ctxagg::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn permutation(r: &mut rng::StreamRng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

fn small_hyper(c: usize, t: usize) -> Hyper {
    Hyper {
        channels: c,
        d: 8,
        frames: t,
        ..Hyper::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn temporal_mean_is_bit_identical_under_permutation(seed: u64, t in 1usize..12, n in 1usize..9) {
        let mut r = rng::stream(seed, "prop");
        let xs: Vec<Tensor> = (0..t).map(|_| random_vector(&mut r, n, -1e3, 1e3)).collect();
        let perm = permutation(&mut r, t);
        let shuffled: Vec<Tensor> = perm.iter().map(|&i| xs[i].clone()).collect();
        prop_assert_eq!(temporal_mean(&xs).unwrap(), temporal_mean(&shuffled).unwrap());
    }

    #[test]
    fn cosine_ignores_positive_scaling(seed: u64, n in 1usize..16, a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let mut r = rng::stream(seed, "prop");
        let x = random_vector(&mut r, n, -1.0, 1.0);
        let y = random_vector(&mut r, n, -1.0, 1.0);
        let base = cosine(&x, &y).unwrap();
        prop_assert!((cosine(&x.scale(a), &y.scale(b)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_stays_in_open_unit_interval(xs in prop::collection::vec(-1e300f64..1e300, 1..20)) {
        let y = sigmoid_map(&Tensor::vector(xs));
        prop_assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn channel_weights_lie_in_open_unit_interval(seed: u64, t in 1usize..6) {
        let mut r = rng::stream(seed, "prop");
        let maps = random_maps(&mut r, t, 8, 2, 2);
        let csca = CscaParams::init(8, 4, &mut r).unwrap();
        let se = SeParams::init(8, 4, &mut r).unwrap();
        let video = SeParams::init(8, 4, &mut r).unwrap();
        let mut all = csca_forward(&maps, &csca).unwrap().1;
        all.extend(se_frame_weights(&maps, &se).unwrap());
        all.push(se_video_weights(&maps, &video).unwrap());
        all.extend(csca_v_weights(&maps, &se, &video).unwrap());
        for c in &all {
            prop_assert!(c.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn csca_is_permutation_equivariant(seed: u64, t in 1usize..8) {
        let mut r = rng::stream(seed, "prop");
        let maps = random_maps(&mut r, t, 8, 2, 3);
        let params = CscaParams::init(8, 2, &mut r).unwrap();
        let perm = permutation(&mut r, t);
        let shuffled: Vec<Tensor> = perm.iter().map(|&i| maps[i].clone()).collect();
        let (refined, weights) = csca_forward(&maps, &params).unwrap();
        let (refined_p, weights_p) = csca_forward(&shuffled, &params).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&refined_p[k], &refined[i]);
            prop_assert_eq!(&weights_p[k], &weights[i]);
        }
    }

    #[test]
    fn identical_frames_get_identical_channel_weights(seed: u64, t in 2usize..6) {
        let mut r = rng::stream(seed, "prop");
        let frame = random_maps(&mut r, 1, 8, 2, 2).remove(0);
        let maps = vec![frame; t];
        let csca = CscaParams::init(8, 4, &mut r).unwrap();
        let se = SeParams::init(8, 4, &mut r).unwrap();
        let video = SeParams::init(8, 4, &mut r).unwrap();
        let variants = [
            csca_forward(&maps, &csca).unwrap().1,
            se_frame_weights(&maps, &se).unwrap(),
            csca_v_weights(&maps, &se, &video).unwrap(),
        ];
        for v in &variants {
            prop_assert!(v.iter().all(|c| c == &v[0]));
        }
    }

    #[test]
    fn propagation_then_mean_equals_contrastive_aggregation(seed: u64, t in 2usize..=16, d in 2usize..=32) {
        let mut r = rng::stream(seed, "prop");
        let frames: Vec<Tensor> = (0..t).map(|_| random_vector(&mut r, d, -1.0, 1.0)).collect();
        let s = random_vector(&mut r, t, -1.0, 1.0);
        let lhs = temporal_mean(&propagate(&frames, &s).unwrap()).unwrap();
        let w = contrastive_weights(&s).unwrap();
        prop_assert!(lhs.max_abs_diff(&aggregate(&frames, &w).unwrap()) < 1e-12);
        // the weights themselves, read off the propagation by one-hot frames
        let coeff = propagation_coefficients(&s);
        for (k, c) in coeff.iter().enumerate() {
            prop_assert!((w.data()[k] / t as f64 - c).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_another_score_lowers_a_weight_by_the_closed_form(
        seed: u64, t in 2usize..=16, delta in 1e-3f64..0.5,
    ) {
        let mut r = rng::stream(seed, "prop");
        let s = random_vector(&mut r, t, 0.01, 1.0);
        let target = r.random_range(0..t);
        let other = (target + r.random_range(1..t)) % t;
        let mut raised = s.clone();
        raised.data_mut()[other] += delta;
        let before = contrastive_weights(&s).unwrap().data()[target];
        let after = contrastive_weights(&raised).unwrap().data()[target];
        prop_assert!(after < before);
        let expected = s.data()[target] * delta / (t - 1) as f64;
        prop_assert!(((before - after) - expected).abs() < 1e-12);
    }

    #[test]
    fn unit_interval_scores_give_weights_in_zero_two(seed: u64, t in 2usize..=16) {
        let mut r = rng::stream(seed, "prop");
        let s = random_vector(&mut r, t, 0.0, 1.0);
        let w = contrastive_weights(&s).unwrap();
        prop_assert!(w.data().iter().all(|&v| (0.0..=2.0).contains(&v)));
    }

    #[test]
    fn similarity_matrix_is_a_scale_free_cosine_matrix(seed: u64, t in 1usize..10, d in 2usize..12) {
        let mut r = rng::stream(seed, "prop");
        let frames: Vec<Tensor> = (0..t).map(|_| random_vector(&mut r, d, -1.0, 1.0)).collect();
        let params = CfaParams::init(d, if d % 2 == 0 { 2 } else { 1 }, &mut r).unwrap();
        let x = similarity_matrix(&frames, &params).unwrap();
        for i in 0..t {
            prop_assert_eq!(x.get2(i, i), 1.0);
            for j in 0..t {
                prop_assert_eq!(x.get2(i, j), x.get2(j, i));
                prop_assert!((-1.0..=1.0).contains(&x.get2(i, j)));
            }
        }
        let scaled: Vec<Tensor> = frames.iter().map(|f| f.scale(r.random_range(1e-3..1e3))).collect();
        prop_assert!(x.max_abs_diff(&similarity_matrix(&scaled, &params).unwrap()) < 1e-12);
    }

    #[test]
    fn cfa_permutes_scores_and_keeps_the_video_feature(seed: u64, t in 2usize..10) {
        let mut r = rng::stream(seed, "prop");
        let frames: Vec<Tensor> = (0..t).map(|_| random_vector(&mut r, 6, -1.0, 1.0)).collect();
        let params = CfaParams::init(6, 2, &mut r).unwrap();
        let perm = permutation(&mut r, t);
        let shuffled: Vec<Tensor> = perm.iter().map(|&i| frames[i].clone()).collect();
        let (h, q) = cfa_forward(&frames, &params).unwrap();
        let (h_p, q_p) = cfa_forward(&shuffled, &params).unwrap();
        prop_assert!(h.max_abs_diff(&h_p) < 1e-12);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((q_p.s.data()[k] - q.s.data()[i]).abs() < 1e-12);
            prop_assert!((q_p.w.data()[k] - q.w.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn video_feature_ignores_frame_order(seed: u64, t in 1usize..7, m in 0usize..9) {
        let method = Method::ALL[m];
        let mut r = rng::stream(seed, "prop");
        let head = HeadParams::init(small_hyper(8, 4), method, 3, seed).unwrap();
        let maps = random_maps(&mut r, t, 8, 2, 2);
        let perm = permutation(&mut r, t);
        let shuffled: Vec<Tensor> = perm.iter().map(|&i| maps[i].clone()).collect();
        let (h, _) = video_feature(&maps, &head).unwrap();
        let (again, _) = video_feature(&maps, &head).unwrap();
        prop_assert_eq!(&h, &again);
        prop_assert!(h.max_abs_diff(&video_feature(&shuffled, &head).unwrap().0) < 1e-12);
    }

    #[test]
    fn triplet_loss_is_never_negative(seed: u64, m in 0usize..9) {
        let hyper = Hyper { batch_ids: 3, batch_seqs: 2, ..small_hyper(8, 4) };
        let head = HeadParams::init(hyper, Method::ALL[m], 3, seed).unwrap();
        let batch = random_batch(&hyper, 3, 2, seed);
        let loss = total_loss(&batch, &head).unwrap();
        prop_assert!(loss.triplet >= 0.0);
        prop_assert!((loss.total - loss.cross_entropy - loss.triplet).abs() < 1e-12);
    }

    #[test]
    fn cmc_is_monotone_and_reaches_one(seed: u64) {
        let mut r = rng::stream(seed, "prop");
        let g = random_gallery(&mut r);
        let rankings = g.rankings();
        let mut previous = 0.0;
        for k in 1..=g.gallery.len() {
            let v = cmc(&rankings, k).unwrap();
            prop_assert!(v >= previous);
            previous = v;
        }
        prop_assert_eq!(previous, 1.0);
    }

    #[test]
    fn metrics_match_counting_oracles(seed: u64) {
        let mut r = rng::stream(seed, "prop");
        let g = random_gallery(&mut r);
        let rankings = g.rankings();
        for k in [1, 2, 5, 20] {
            prop_assert_eq!(cmc(&rankings, k).unwrap(), g.cmc_oracle(k));
        }
        prop_assert!((mean_ap(&rankings).unwrap() - g.map_oracle()).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_positive_rescaling(seed: u64, exponent in -20i32..20) {
        // powers of two rescale exactly, so tied scores stay tied
        let scale = 2f64.powi(exponent);
        let mut r = rng::stream(seed, "prop");
        let g = random_gallery(&mut r);
        let scaled_gallery: Vec<Tensor> = g.gallery.iter().map(|x| x.scale(scale)).collect();
        let rescaled: Vec<Ranking> = g
            .queries
            .iter()
            .zip(&g.query_ids)
            .map(|(q, &id)| rank_gallery(&q.scale(scale), id, &scaled_gallery, &g.gallery_ids).unwrap())
            .collect();
        let rankings = g.rankings();
        prop_assert_eq!(mean_ap(&rankings).unwrap(), mean_ap(&rescaled).unwrap());
        prop_assert_eq!(cmc(&rankings, 1).unwrap(), cmc(&rescaled, 1).unwrap());
    }
}
