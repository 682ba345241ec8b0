//! True-reward and NDCG evaluation of ranking policies.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::ranking::{QueryId, Ranking, RankWeight};

/// Per-(query, document) relevance values.
///
/// Holds either relevance probabilities in `[0, 1]` (click-model use) or raw
/// graded labels (NDCG evaluation); operations only assume non-negativity.
#[derive(Debug, Clone, Default)]
pub struct RelevanceTable {
    rows: HashMap<QueryId, Vec<f64>>,
}

impl RelevanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, q: QueryId, values: Vec<f64>) {
        self.rows.insert(q, values);
    }

    pub fn row(&self, q: QueryId) -> Result<&[f64]> {
        self.rows
            .get(&q)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no relevance values for query {q}")))
    }

    pub fn get(&self, q: QueryId, d: usize) -> Result<f64> {
        let row = self.row(q)?;
        row.get(d)
            .copied()
            .ok_or_else(|| Error::Data(format!("no relevance value for query {q} document {d}")))
    }
}

/// Quality of a single ranking: the relevance-weighted sum of rank weights.
pub fn ranking_quality<W: RankWeight>(
    y: &Ranking,
    q: QueryId,
    table: &RelevanceTable,
    weight: &W,
) -> Result<f64> {
    let rel = table.row(q)?;
    if rel.len() != y.len() {
        return Err(Error::Data(format!(
            "query {q}: ranking has {} docs but relevance table has {}",
            y.len(),
            rel.len()
        )));
    }
    Ok(y.iter()
        .enumerate()
        .map(|(pos, d)| weight.weight(pos + 1) * rel[d])
        .sum())
}

/// Expected ranking quality under a tie-group distribution.
///
/// Each tie group spanning ranks `a..=b` contributes the mean weight over
/// those ranks times the group's total relevance, which equals the
/// brute-force average over every valid ranking.
pub fn expected_quality<W: RankWeight>(
    dist: &crate::ranking::RankingDistribution,
    rel: &[f64],
    weight: &W,
) -> f64 {
    let mut first = 1;
    let mut total = 0.0;
    for g in dist.groups() {
        let last = first + g.len() - 1;
        let mean = weight.mean_weight(first, last);
        let rel_sum: f64 = g.iter().map(|&d| rel[d]).sum();
        total += mean * rel_sum;
        first = last + 1;
    }
    total
}

/// A query with its probability mass under the query distribution.
#[derive(Debug, Clone, Copy)]
pub struct WeightedQuery {
    pub id: QueryId,
    pub weight: f64,
    pub num_docs: usize,
}

/// True expected reward of a policy over a weighted set of queries.
pub fn true_reward<P: Policy, W: RankWeight>(
    policy: &P,
    queries: &[WeightedQuery],
    table: &RelevanceTable,
    weight: &W,
) -> Result<f64> {
    let mut total = 0.0;
    for wq in queries {
        let rel = table.row(wq.id)?;
        if rel.len() != wq.num_docs {
            return Err(Error::Data(format!(
                "query {}: {} docs but {} relevance values",
                wq.id,
                wq.num_docs,
                rel.len()
            )));
        }
        let dist = policy.distribution(wq.id, wq.num_docs);
        total += wq.weight * expected_quality(&dist, rel, weight);
    }
    Ok(total)
}

/// Mean normalized expected quality over queries, full ranking without a
/// cutoff. Queries whose ideal quality is zero are skipped; if every query
/// is degenerate this is an error.
pub fn ndcg<P: Policy, W: RankWeight>(
    policy: &P,
    queries: &[(QueryId, usize)],
    table: &RelevanceTable,
    weight: &W,
) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for &(q, num_docs) in queries {
        let rel = table.row(q)?;
        if rel.len() != num_docs {
            return Err(Error::Data(format!(
                "query {q}: {num_docs} docs but {} relevance values",
                rel.len()
            )));
        }
        let ideal = ideal_quality(rel, weight);
        if ideal == 0.0 {
            continue;
        }
        let dist = policy.distribution(q, num_docs);
        total += expected_quality(&dist, rel, weight) / ideal;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Data(
            "no query has a relevant document; NDCG undefined".into(),
        ));
    }
    Ok(total / counted as f64)
}

fn ideal_quality<W: RankWeight>(rel: &[f64], weight: &W) -> f64 {
    let mut sorted = rel.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("relevance must not be NaN"));
    sorted
        .iter()
        .enumerate()
        .map(|(pos, r)| weight.weight(pos + 1) * r)
        .sum()
}
