//! Rankings, rank-weight functions and distributions over valid rankings.
//!
//! A score-sorting model induces a distribution over rankings: documents with
//! strictly higher scores always precede lower-scored ones, while tied
//! documents are ordered uniformly at random. Such a distribution is fully
//! described by its ordered tie groups, which lets expectations over the
//! (possibly factorially large) set of valid rankings be computed per group
//! instead of by enumeration.

use rand::seq::SliceRandom;
use rand::RngCore;

/// Index of a document within its query's candidate list.
pub type DocId = usize;

/// Identifier of a query, unique across dataset partitions.
pub type QueryId = u32;

/// DCG weight for a 1-based rank: `1 / log2(1 + rank)`.
///
/// Panics if `rank` is zero; ranks are strictly positive.
pub fn dcg_weight(rank: usize) -> f64 {
    assert!(rank >= 1, "rank must be a positive integer");
    1.0 / ((1 + rank) as f64).log2()
}

/// A weight function over 1-based ranks, non-increasing for metric use.
pub trait RankWeight {
    fn weight(&self, rank: usize) -> f64;

    /// Mean weight over the inclusive rank span `[first, last]`.
    fn mean_weight(&self, first: usize, last: usize) -> f64 {
        debug_assert!(first >= 1 && last >= first);
        let sum: f64 = (first..=last).map(|r| self.weight(r)).sum();
        sum / (last - first + 1) as f64
    }
}

/// The DCG instance of the rank-weight function.
#[derive(Debug, Clone, Copy, Default)]
pub struct DcgWeight;

impl RankWeight for DcgWeight {
    fn weight(&self, rank: usize) -> f64 {
        dcg_weight(rank)
    }
}

/// An ordering of a query's candidate documents.
///
/// Invariant: a permutation of `0..len`: every candidate appears exactly
/// once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking(Vec<DocId>);

impl Ranking {
    /// Builds a ranking, checking the permutation invariant.
    pub fn new(docs: Vec<DocId>) -> Result<Self, String> {
        let mut seen = vec![false; docs.len()];
        for &d in &docs {
            if d >= docs.len() {
                return Err(format!("document id {d} out of range for {} docs", docs.len()));
            }
            if seen[d] {
                return Err(format!("duplicate document id {d} in ranking"));
            }
            seen[d] = true;
        }
        Ok(Ranking(docs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn docs(&self) -> &[DocId] {
        &self.0
    }

    /// 1-based rank of `d`, or `None` when `d` is not in the ranking.
    pub fn rank_of(&self, d: DocId) -> Option<usize> {
        self.0.iter().position(|&x| x == d).map(|p| p + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = DocId> + '_ {
        self.0.iter().copied()
    }
}

/// Uniform distribution over the rankings consistent with a strict score
/// order: ordered tie groups of document ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingDistribution {
    groups: Vec<Vec<DocId>>,
    num_docs: usize,
}

impl RankingDistribution {
    /// Builds a distribution from ordered tie groups. Groups must partition
    /// `0..num_docs`.
    pub fn new(groups: Vec<Vec<DocId>>) -> Self {
        let num_docs = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; num_docs];
        for g in &groups {
            assert!(!g.is_empty(), "empty tie group");
            for &d in g {
                assert!(d < num_docs && !seen[d], "groups must partition the candidate set");
                seen[d] = true;
            }
        }
        RankingDistribution { groups, num_docs }
    }

    /// Groups documents of equal score, higher scores first. Ties use exact
    /// equality of the score values: the tabular estimator produces
    /// exactly-equal scores (e.g. all-zero) and those must trigger the
    /// uniform-tie semantics.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<DocId> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores must not be NaN")
                .then(a.cmp(&b))
        });
        let mut groups: Vec<Vec<DocId>> = Vec::new();
        for d in order {
            match groups.last_mut() {
                Some(g) if scores[g[0]] == scores[d] => g.push(d),
                _ => groups.push(vec![d]),
            }
        }
        RankingDistribution {
            groups,
            num_docs: scores.len(),
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn groups(&self) -> &[Vec<DocId>] {
        &self.groups
    }

    /// The inclusive 1-based rank span `(first, last)` occupied by the group
    /// containing `d`.
    pub fn rank_span(&self, d: DocId) -> (usize, usize) {
        let mut first = 1;
        for g in &self.groups {
            if g.contains(&d) {
                return (first, first + g.len() - 1);
            }
            first += g.len();
        }
        panic!("document {d} not in distribution");
    }

    /// Expected rank weight of `d` under a uniform draw from the valid set.
    ///
    /// Within its tie group a document occupies each spanned rank with equal
    /// probability, so the expectation is the mean weight over the span.
    pub fn expected_weight<W: RankWeight>(&self, d: DocId, weight: &W) -> f64 {
        let (first, last) = self.rank_span(d);
        weight.mean_weight(first, last)
    }

    /// Expected value of `1 / rank(d)` under the distribution.
    pub fn expected_inverse_rank(&self, d: DocId) -> f64 {
        let (first, last) = self.rank_span(d);
        let sum: f64 = (first..=last).map(|r| 1.0 / r as f64).sum();
        sum / (last - first + 1) as f64
    }

    /// Number of valid rankings: the product of tie-group factorials.
    pub fn valid_count(&self) -> u128 {
        self.groups
            .iter()
            .map(|g| factorial(g.len()))
            .product()
    }

    /// Probability of `y`: `1 / valid_count` when `y` respects the strict
    /// order, zero otherwise.
    pub fn probability(&self, y: &Ranking) -> f64 {
        if y.len() != self.num_docs {
            return 0.0;
        }
        let mut pos = 0;
        for g in &self.groups {
            let span = &y.docs()[pos..pos + g.len()];
            if !g.iter().all(|d| span.contains(d)) {
                return 0.0;
            }
            pos += g.len();
        }
        1.0 / self.valid_count() as f64
    }

    /// Draws a ranking by shuffling each tie group in place.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Ranking {
        let mut docs = Vec::with_capacity(self.num_docs);
        for g in &self.groups {
            let mut g = g.clone();
            g.shuffle(rng);
            docs.extend(g);
        }
        Ranking(docs)
    }

    /// Enumerates every valid ranking. Intended for small candidate sets;
    /// expectations in production code go through the tie-group formulas.
    pub fn enumerate(&self) -> Vec<Ranking> {
        let mut result = vec![Vec::new()];
        for g in &self.groups {
            let perms: Vec<Vec<DocId>> = permutations(g);
            let mut next = Vec::with_capacity(result.len() * perms.len());
            for prefix in &result {
                for p in &perms {
                    let mut docs = prefix.clone();
                    docs.extend(p.iter().copied());
                    next.push(docs);
                }
            }
            result = next;
        }
        result.into_iter().map(Ranking).collect()
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn permutations(items: &[DocId]) -> Vec<Vec<DocId>> {
    use itertools::Itertools;
    items
        .iter()
        .copied()
        .permutations(items.len())
        .collect()
}
