//! The two learned rankers: a linear feature-based model optimized with an
//! IPS-weighted pairwise surrogate, and a tabular model that memorizes a
//! counterfactual relevance estimate per (query, document).

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::ips_reward;
use crate::policy::SortPolicy;
use crate::ranking::{DcgWeight, QueryId, RankWeight};
use crate::simulate::LogSlice;

/// Linear scorer over query-document feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRanker {
    weights: Vec<f64>,
}

impl LinearRanker {
    pub fn new(weights: Vec<f64>) -> Self {
        assert!(weights.iter().all(|w| w.is_finite()), "weights must be finite");
        LinearRanker { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }

    /// Precomputes scores for every query in the dataset, wrapping the
    /// scorer as a score-sorting policy.
    pub fn to_policy(&self, dataset: &Dataset) -> SortPolicy {
        let scores = dataset
            .all_queries()
            .map(|q| {
                (
                    q.id,
                    q.docs.iter().map(|d| self.score(&d.features)).collect(),
                )
            })
            .collect();
        SortPolicy::new(scores)
    }

    /// One weight per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.weights {
            out.push_str(&w.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let weights: Vec<f64> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse()
                    .map_err(|_| Error::Parse { line: i + 1, msg: format!("invalid weight `{l}`") })
            })
            .collect::<Result<_>>()?;
        Ok(LinearRanker::new(weights))
    }
}

/// Memorized counterfactual relevance estimates; unseen pairs score zero,
/// so queries absent from the log get a uniform-random ranking.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TabularRanker {
    table: HashMap<QueryId, Vec<f64>>,
}

impl TabularRanker {
    pub fn new(table: HashMap<QueryId, Vec<f64>>) -> Self {
        Self { table }
    }

    pub fn estimate(&self, q: QueryId, d: usize) -> f64 {
        self.table.get(&q).map_or(0.0, |row| row[d])
    }

    pub fn queries(&self) -> impl Iterator<Item = QueryId> + '_ {
        self.table.keys().copied()
    }

    pub fn to_policy(&self) -> SortPolicy {
        SortPolicy::new(self.table.clone())
    }

    /// `qid \t docid \t estimate` triples, sorted for stable output.
    pub fn to_text(&self) -> String {
        let mut qids: Vec<_> = self.table.keys().copied().collect();
        qids.sort_unstable();
        let mut out = String::new();
        for q in qids {
            for (d, v) in self.table[&q].iter().enumerate() {
                out.push_str(&format!("{q}\t{d}\t{v}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut table: HashMap<QueryId, Vec<f64>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let parse_err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let q: QueryId = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("invalid query id"))?;
            let d: usize = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("invalid doc id"))?;
            let v: f64 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("invalid estimate"))?;
            let row = table.entry(q).or_default();
            if row.len() != d {
                return Err(parse_err("doc ids must be dense and in order"));
            }
            row.push(v);
        }
        Ok(TabularRanker { table })
    }
}

/// Infers the tabular model: the per-query mean of IPS-corrected clicks.
pub fn infer_tabular(slice: &LogSlice) -> TabularRanker {
    let mut sums: HashMap<QueryId, (Vec<f64>, usize)> = HashMap::new();
    for record in slice.records() {
        let entry = sums
            .entry(record.query)
            .or_insert_with(|| (vec![0.0; record.num_docs()], 0));
        entry.1 += 1;
        for d in record.clicked_docs() {
            entry.0[d] += 1.0 / record.propensities[d];
        }
    }
    let table = sums
        .into_iter()
        .map(|(q, (sum, count))| (q, sum.iter().map(|s| s / count as f64).collect()))
        .collect();
    TabularRanker { table }
}

/// Hyperparameters of the feature-based trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on minibatches per epoch; 0 means no cap. Keeps training cost
    /// bounded on large logs.
    pub max_batches_per_epoch: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rates: vec![0.1, 0.01],
            epochs: 50,
            batch_size: 32,
            max_batches_per_epoch: 0,
        }
    }
}

pub mod surrogate {
    //! The IPS-weighted pairwise logistic surrogate.
    //!
    //! Pair weights `|lambda(rank_i) - lambda(rank_j)|` are frozen at the
    //! ranks induced by the current parameters before each gradient step, so
    //! the per-step objective is smooth and its analytic gradient matches
    //! finite differences.

    use super::*;
    use crate::simulate::LoggedInteraction;

    /// A frozen scored pair: prefer candidate `hi` over `lo` with `weight`.
    #[derive(Debug, Clone)]
    pub struct FrozenPair {
        pub query: QueryId,
        pub hi: usize,
        pub lo: usize,
        pub weight: f64,
    }

    /// Builds the frozen pair set for a minibatch of interactions, using the
    /// IPS click mass `c/rho` as the per-document preference signal and the
    /// rank-weight gap under the current model as the pair weight.
    pub fn freeze_pairs<W: RankWeight>(
        ranker: &LinearRanker,
        batch: &[&LoggedInteraction],
        dataset: &Dataset,
        weight: &W,
    ) -> Vec<FrozenPair> {
        let mut pairs = Vec::new();
        for record in batch {
            let query = dataset
                .query(record.query)
                .expect("logged query must exist in the dataset");
            let scores: Vec<f64> = query.docs.iter().map(|d| ranker.score(&d.features)).collect();
            let ranks = current_ranks(&scores);
            let mass: Vec<f64> = (0..record.num_docs())
                .map(|d| {
                    if record.clicks[d] {
                        1.0 / record.propensities[d]
                    } else {
                        0.0
                    }
                })
                .collect();
            for hi in 0..mass.len() {
                for lo in 0..mass.len() {
                    if mass[hi] > mass[lo] {
                        let gap =
                            (weight.weight(ranks[hi]) - weight.weight(ranks[lo])).abs();
                        pairs.push(FrozenPair {
                            query: record.query,
                            hi,
                            lo,
                            weight: gap * (mass[hi] - mass[lo]),
                        });
                    }
                }
            }
        }
        pairs
    }

    fn current_ranks(scores: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
        });
        let mut ranks = vec![0; scores.len()];
        for (pos, &d) in order.iter().enumerate() {
            ranks[d] = pos + 1;
        }
        ranks
    }

    /// Surrogate loss for a frozen pair set, normalized by pair count.
    pub fn loss(ranker: &LinearRanker, pairs: &[FrozenPair], dataset: &Dataset) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for p in pairs {
            let query = dataset.query(p.query).unwrap();
            let s_hi = ranker.score(&query.docs[p.hi].features);
            let s_lo = ranker.score(&query.docs[p.lo].features);
            total += p.weight * softplus(-(s_hi - s_lo));
        }
        total / pairs.len() as f64
    }

    /// Analytic gradient of `loss` with respect to the weights.
    pub fn gradient(ranker: &LinearRanker, pairs: &[FrozenPair], dataset: &Dataset) -> Vec<f64> {
        let mut grad = vec![0.0; ranker.weights().len()];
        if pairs.is_empty() {
            return grad;
        }
        for p in pairs {
            let query = dataset.query(p.query).unwrap();
            let hi = &query.docs[p.hi].features;
            let lo = &query.docs[p.lo].features;
            let margin = ranker.score(hi) - ranker.score(lo);
            let coeff = -p.weight * sigmoid(-margin);
            for f in 0..grad.len() {
                grad[f] += coeff * (hi[f] - lo[f]);
            }
        }
        let n = pairs.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        grad
    }

    fn softplus(x: f64) -> f64 {
        if x > 30.0 {
            x
        } else {
            x.exp().ln_1p()
        }
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Trains the feature-based model on a click log.
///
/// Runs stochastic descent for each candidate learning rate and keeps the
/// checkpoint (including the untrained start) with the highest counterfactual
/// reward on the validation log. Falls back to the training log for
/// checkpoint selection when no validation clicks exist.
pub fn train_feature_based(
    train: &LogSlice,
    validation: &LogSlice,
    dataset: &Dataset,
    params: &TrainParams,
    seed: u64,
) -> Result<LinearRanker> {
    if train.total_clicks() == 0 {
        return Err(Error::Train("training log has no clicks; no gradient signal".into()));
    }
    let selection = if validation.total_clicks() > 0 { validation } else { train };
    let weight = DcgWeight;

    let score_of = |ranker: &LinearRanker| -> f64 {
        ips_reward(&ranker.to_policy(dataset), selection, &weight).unwrap_or(f64::NEG_INFINITY)
    };

    let initial = LinearRanker::new(vec![0.0; dataset.num_features]);
    let mut best = (score_of(&initial), initial);

    for &lr in &params.learning_rates {
        let mut ranker = LinearRanker::new(vec![0.0; dataset.num_features]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut batches = order.chunks(params.batch_size.max(1));
            let cap = if params.max_batches_per_epoch == 0 {
                usize::MAX
            } else {
                params.max_batches_per_epoch
            };
            for _ in 0..cap {
                let Some(batch_idx) = batches.next() else { break };
                let batch: Vec<_> = batch_idx.iter().map(|&i| &train.records()[i]).collect();
                let pairs = surrogate::freeze_pairs(&ranker, &batch, dataset, &weight);
                if pairs.is_empty() {
                    continue;
                }
                let grad = surrogate::gradient(&ranker, &pairs, dataset);
                let mut weights = ranker.weights().to_vec();
                for f in 0..weights.len() {
                    weights[f] -= lr * grad[f];
                }
                ranker = LinearRanker::new(weights);
            }
            let score = score_of(&ranker);
            if score > best.0 {
                best = (score, ranker.clone());
            }
        }
    }
    Ok(best.1)
}
