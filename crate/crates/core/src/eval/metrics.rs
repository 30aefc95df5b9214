use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine, ops::COSINE_EPS, Tensor};

/// Gallery order for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub query_id: u32,
    /// Gallery indices by descending cosine similarity.
    pub order: Vec<usize>,
    /// `matches[r]`: whether the entry at rank `r` shares the query identity.
    pub matches: Vec<bool>,
}

impl Ranking {
    /// 0-based ranks of the correct matches.
    pub fn match_ranks(&self) -> Vec<usize> {
        self.matches.iter().enumerate().filter(|(_, &m)| m).map(|(r, _)| r).collect()
    }

    fn first_match(&self) -> Result<usize> {
        self.matches.iter().position(|&m| m).ok_or_else(|| {
            Error::Protocol(format!("query identity {} has no match in the gallery", self.query_id))
        })
    }
}

fn check_feature(v: &Tensor, what: &str) -> Result<()> {
    if v.norm() < COSINE_EPS {
        return Err(Error::Degenerate(format!("{what} has norm below {COSINE_EPS}")));
    }
    Ok(())
}

/// Gallery indices sorted by descending cosine similarity to `query`; equal
/// similarities keep ascending index order.
pub fn retrieve(query: &Tensor, gallery: &[Tensor]) -> Result<Vec<usize>> {
    if gallery.is_empty() {
        return Err(Error::Precondition("retrieval against an empty gallery".into()));
    }
    check_feature(query, "query feature")?;
    let mut scored = gallery
        .iter()
        .enumerate()
        .map(|(i, g)| {
            check_feature(g, &format!("gallery feature {i}"))?;
            Ok((i, cosine(query, g)?))
        })
        .collect::<Result<Vec<(usize, f64)>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

pub fn rank_gallery(query: &Tensor, query_id: u32, gallery: &[Tensor], gallery_ids: &[u32]) -> Result<Ranking> {
    if gallery.len() != gallery_ids.len() {
        return Err(Error::dim("rank_gallery", &[gallery.len()], &[gallery_ids.len()]));
    }
    let order = retrieve(query, gallery)?;
    let matches = order.iter().map(|&i| gallery_ids[i] == query_id).collect();
    Ok(Ranking {
        query_id,
        order,
        matches,
    })
}

/// Fraction of queries whose first correct match is within the top `k`.
pub fn cmc(rankings: &[Ranking], k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Precondition("CMC of zero queries".into()));
    }
    let mut hits = 0usize;
    for r in rankings {
        if r.first_match()? < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

/// Precision averaged over the ranks of the correct matches.
pub fn average_precision(ranking: &Ranking) -> Result<f64> {
    ranking.first_match()?;
    let ranks = ranking.match_ranks();
    let sum: f64 = ranks.iter().enumerate().map(|(i, &r)| (i + 1) as f64 / (r + 1) as f64).sum();
    Ok(sum / ranks.len() as f64)
}

pub fn mean_ap(rankings: &[Ranking]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Precondition("mAP of zero queries".into()));
    }
    let aps = rankings.iter().map(average_precision).collect::<Result<Vec<_>>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rank1: f64,
    pub rank5: f64,
    pub rank20: f64,
    pub map: f64,
}

impl Metrics {
    pub fn from_rankings(rankings: &[Ranking]) -> Result<Self> {
        Ok(Self {
            rank1: cmc(rankings, 1)?,
            rank5: cmc(rankings, 5)?,
            rank20: cmc(rankings, 20)?,
            map: mean_ap(rankings)?,
        })
    }
}
