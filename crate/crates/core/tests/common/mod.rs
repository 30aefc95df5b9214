#![allow(dead_code)]

use ctxagg::eval::{rank_gallery, Ranking};
use ctxagg::numerics::{cosine, Tensor};
use ctxagg::rng::StreamRng;
use rand::Rng;

pub fn random_vector(r: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::vector((0..n).map(|_| r.random_range(lo..hi)).collect())
}

pub fn random_maps(r: &mut StreamRng, t: usize, c: usize, h: usize, w: usize) -> Vec<Tensor> {
    (0..t)
        .map(|_| Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| r.random_range(0.0..2.0)).collect()).unwrap())
        .collect()
}

/// Aggregation coefficient of every frame in `mean_t propagate(f, s)_t`,
/// read off by propagating one-hot frames.
pub fn propagation_coefficients(s: &Tensor) -> Vec<f64> {
    let t = s.len();
    let basis: Vec<Tensor> = (0..t)
        .map(|i| Tensor::vector((0..t).map(|j| if i == j { 1.0 } else { 0.0 }).collect()))
        .collect();
    let propagated = ctxagg::cfa::propagate(&basis, s).unwrap();
    (0..t)
        .map(|i| propagated.iter().map(|p| p.data()[i]).sum::<f64>() / t as f64)
        .collect()
}

/// A small random retrieval problem: every query identity appears at least
/// once in the gallery.
pub struct Gallery {
    pub queries: Vec<Tensor>,
    pub query_ids: Vec<u32>,
    pub gallery: Vec<Tensor>,
    pub gallery_ids: Vec<u32>,
}

pub fn random_gallery(r: &mut StreamRng) -> Gallery {
    let n = r.random_range(2..=20);
    let ids = r.random_range(1..=n.min(5)) as u32;
    let dim = r.random_range(2..=6);
    // a coarse grid of values makes exact ties likely
    let grid = |r: &mut StreamRng| Tensor::vector((0..dim).map(|_| r.random_range(1..=3) as f64).collect());
    let mut gallery_ids: Vec<u32> = (0..ids).collect();
    gallery_ids.extend((ids as usize..n).map(|_| r.random_range(0..ids)));
    let gallery = (0..n).map(|_| grid(r)).collect();
    let q = r.random_range(1..=5);
    let query_ids = (0..q).map(|_| r.random_range(0..ids)).collect();
    let queries = (0..q).map(|_| grid(r)).collect();
    Gallery {
        queries,
        query_ids,
        gallery,
        gallery_ids,
    }
}

impl Gallery {
    pub fn rankings(&self) -> Vec<Ranking> {
        self.queries
            .iter()
            .zip(&self.query_ids)
            .map(|(q, &id)| rank_gallery(q, id, &self.gallery, &self.gallery_ids).unwrap())
            .collect()
    }

    /// 0-based position of gallery entry `g` for query `q`: entries scoring
    /// higher, or equal with a lower index, come first. Scores use the crate
    /// cosine so that exact ties are seen the same way.
    fn position(&self, q: usize, g: usize) -> usize {
        let score = |i: usize| cosine(&self.queries[q], &self.gallery[i]).unwrap();
        let mine = score(g);
        (0..self.gallery.len())
            .filter(|&i| i != g && (score(i) > mine || (score(i) == mine && i < g)))
            .count()
    }

    fn match_positions(&self, q: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.gallery.len())
            .filter(|&g| self.gallery_ids[g] == self.query_ids[q])
            .map(|g| self.position(q, g))
            .collect();
        p.sort_unstable();
        p
    }

    /// Fraction of queries with a correct match among the top `k`.
    pub fn cmc_oracle(&self, k: usize) -> f64 {
        let hits = (0..self.queries.len())
            .filter(|&q| self.match_positions(q)[0] < k)
            .count();
        hits as f64 / self.queries.len() as f64
    }

    /// Mean over queries of the precision at each correct match, counted by
    /// brute force over the top of the list.
    pub fn map_oracle(&self) -> f64 {
        let mut total = 0.0;
        for q in 0..self.queries.len() {
            let positions = self.match_positions(q);
            let mut ap = 0.0;
            for &p in &positions {
                let correct_in_top = positions.iter().filter(|&&o| o <= p).count();
                ap += correct_in_top as f64 / (p + 1) as f64;
            }
            total += ap / positions.len() as f64;
        }
        total / self.queries.len() as f64
    }
}
