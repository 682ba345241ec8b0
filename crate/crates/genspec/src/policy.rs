//! Ranking policies: distributions over rankings per query.

use std::collections::HashMap;

use rand::RngCore;

use crate::ranking::{DocId, QueryId, Ranking, RankingDistribution};

/// A distribution over rankings per query.
///
/// Every policy here is score-sorting at heart, so the whole distribution for
/// a query is described by its tie groups; probability, sampling and the
/// valid-set size all derive from that.
pub trait Policy {
    /// Tie-group distribution for query `q` with `num_docs` candidates.
    fn distribution(&self, q: QueryId, num_docs: usize) -> RankingDistribution;

    /// Probability of displaying `y` for `q`.
    fn probability(&self, q: QueryId, y: &Ranking) -> f64 {
        self.distribution(q, y.len()).probability(y)
    }

    /// Draws a ranking for `q`.
    fn sample(&self, q: QueryId, num_docs: usize, rng: &mut dyn RngCore) -> Ranking {
        self.distribution(q, num_docs).sample(rng)
    }

    /// Number of rankings with non-zero probability.
    fn valid_set_size(&self, q: QueryId, num_docs: usize) -> u128 {
        self.distribution(q, num_docs).valid_count()
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn distribution(&self, q: QueryId, num_docs: usize) -> RankingDistribution {
        (**self).distribution(q, num_docs)
    }
}

/// Policy that sorts each query's candidates by a stored per-document score.
///
/// Queries without stored scores get an all-tied (uniform random)
/// distribution; this is exactly the behavior a tabular model needs on
/// queries it has never seen.
#[derive(Debug, Clone, Default)]
pub struct SortPolicy {
    scores: HashMap<QueryId, Vec<f64>>,
}

impl SortPolicy {
    pub fn new(scores: HashMap<QueryId, Vec<f64>>) -> Self {
        SortPolicy { scores }
    }

    pub fn scores(&self, q: QueryId) -> Option<&[f64]> {
        self.scores.get(&q).map(Vec::as_slice)
    }

    pub fn score(&self, q: QueryId, d: DocId) -> f64 {
        self.scores.get(&q).map_or(0.0, |s| s[d])
    }

    pub fn queries(&self) -> impl Iterator<Item = QueryId> + '_ {
        self.scores.keys().copied()
    }
}

impl Policy for SortPolicy {
    fn distribution(&self, q: QueryId, num_docs: usize) -> RankingDistribution {
        match self.scores.get(&q) {
            Some(s) => {
                assert_eq!(
                    s.len(),
                    num_docs,
                    "stored scores for query {q} disagree with candidate count"
                );
                RankingDistribution::from_scores(s)
            }
            None => RankingDistribution::new(vec![(0..num_docs).collect()]),
        }
    }
}

/// Uniform-random policy over all permutations of every query.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn distribution(&self, _q: QueryId, num_docs: usize) -> RankingDistribution {
        RankingDistribution::new(vec![(0..num_docs).collect()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy_with(q: QueryId, scores: &[f64]) -> SortPolicy {
        let mut m = HashMap::new();
        m.insert(q, scores.to_vec());
        SortPolicy::new(m)
    }

    #[test]
    fn distinct_scores_sample_deterministically() {
        let p = policy_with(1, &[0.1, 0.7, 0.3]);
        assert_eq!(p.valid_set_size(1, 3), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = p.sample(1, 3, &mut rng);
        assert_eq!(y.docs(), &[1, 2, 0]);
        assert_eq!(p.probability(1, &y), 1.0);
    }

    #[test]
    fn sampled_rankings_have_uniform_probability() {
        let p = policy_with(9, &[0.5, 0.5, 0.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let y = p.sample(9, 4, &mut rng);
            assert_eq!(p.probability(9, &y), 1.0 / 6.0);
        }
    }

    #[test]
    fn unknown_query_is_uniform_over_permutations() {
        let p = SortPolicy::default();
        assert_eq!(p.valid_set_size(42, 4), 24);
    }
}
