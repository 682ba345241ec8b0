//! Online tabular bandit baselines: a greedy position-based-model ranker and
//! a top-n shuffle reranker driven by pairwise click preferences. Both are
//! simplified stand-ins for the published algorithms they approximate; they
//! choose their own displays and keep per-query state only.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::policy::SortPolicy;
use crate::ranking::{DocId, QueryId, Ranking};

/// Per-query click statistics for the position-based-model baseline.
///
/// For each document it keeps the cumulative click mass corrected by the
/// examination propensity of the displayed rank, plus a view count.
#[derive(Debug, Clone, Default)]
pub struct PbmState {
    queries: HashMap<QueryId, PbmQueryState>,
}

#[derive(Debug, Clone)]
struct PbmQueryState {
    mass: Vec<f64>,
    views: Vec<usize>,
    steps: usize,
}

impl PbmState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Greedy display: documents sorted by current relevance estimate, with
    /// one round-robin document per step boosted by an exploration bonus
    /// equal to the estimate at the last display position, so rarely-shown
    /// documents keep surfacing. With no data all scores tie and the display
    /// is uniform random.
    pub fn display(&mut self, q: QueryId, num_docs: usize, rng: &mut dyn RngCore) -> Ranking {
        let state = self
            .queries
            .entry(q)
            .or_insert_with(|| PbmQueryState {
                mass: vec![0.0; num_docs],
                views: vec![0; num_docs],
                steps: 0,
            });
        let explored = state.steps % num_docs;
        let estimates: Vec<f64> = (0..num_docs)
            .map(|d| {
                if state.views[d] == 0 {
                    0.0
                } else {
                    state.mass[d] / state.views[d] as f64
                }
            })
            .collect();
        let bottom = estimates.iter().copied().fold(f64::INFINITY, f64::min);
        let scores: Vec<f64> = (0..num_docs)
            .map(|d| estimates[d] + if d == explored { bottom } else { 0.0 })
            .collect();
        // Random tie-breaking keeps the no-data display uniform.
        let mut order: Vec<DocId> = (0..num_docs).collect();
        order.shuffle(rng);
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        Ranking::new(order).expect("permutation by construction")
    }

    /// Folds one displayed interaction's clicks into the estimates, using
    /// the displayed rank's examination probability as the propensity.
    pub fn update(&mut self, q: QueryId, displayed: &Ranking, clicks: &[bool]) {
        let state = self.queries.get_mut(&q).expect("display precedes update");
        assert_eq!(clicks.len(), displayed.len());
        state.steps += 1;
        for d in 0..clicks.len() {
            state.views[d] += 1;
            if clicks[d] {
                let rank = displayed.rank_of(d).expect("displayed ranking covers d");
                state.mass[d] += rank as f64;
            }
        }
    }

    /// The ranking the baseline expects to perform best, as a policy for
    /// evaluation. Queries without state fall back to uniform random.
    pub fn reported(&self) -> SortPolicy {
        let scores = self
            .queries
            .iter()
            .map(|(&q, s)| {
                let est: Vec<f64> = (0..s.mass.len())
                    .map(|d| {
                        if s.views[d] == 0 {
                            0.0
                        } else {
                            s.mass[d] / s.views[d] as f64
                        }
                    })
                    .collect();
                (q, est)
            })
            .collect();
        SortPolicy::new(scores)
    }
}

/// Per-query state for the top-n shuffle baseline.
#[derive(Debug, Clone)]
pub struct HotfixState {
    shuffle_depth: usize,
    queries: HashMap<QueryId, HotfixQueryState>,
}

#[derive(Debug, Clone)]
struct HotfixQueryState {
    base: Ranking,
    /// wins[d][e]: times d was clicked while e (also in the top-n) was not.
    wins: Vec<Vec<u32>>,
}

impl HotfixState {
    /// `base_of` supplies the production ranking to hotfix per query; the
    /// top `shuffle_depth` positions of that ranking are explored.
    pub fn new(shuffle_depth: usize) -> Result<Self> {
        if shuffle_depth == 0 {
            return Err(Error::Config("shuffle depth must be at least 1".into()));
        }
        Ok(HotfixState { shuffle_depth, queries: HashMap::new() })
    }

    fn query_state(&mut self, q: QueryId, base: &Ranking) -> Result<&mut HotfixQueryState> {
        if self.shuffle_depth > base.len() {
            return Err(Error::Config(format!(
                "shuffle depth {} exceeds {} candidates",
                self.shuffle_depth,
                base.len()
            )));
        }
        Ok(self.queries.entry(q).or_insert_with(|| HotfixQueryState {
            base: base.clone(),
            wins: vec![vec![0; base.len()]; base.len()],
        }))
    }

    /// The base ranking with its top-n uniformly shuffled.
    pub fn display(
        &mut self,
        q: QueryId,
        base: &Ranking,
        rng: &mut dyn RngCore,
    ) -> Result<Ranking> {
        let n = self.shuffle_depth;
        let state = self.query_state(q, base)?;
        let mut docs: Vec<DocId> = state.base.docs().to_vec();
        docs[..n].shuffle(rng);
        Ok(Ranking::new(docs).expect("permutation by construction"))
    }

    /// Counts a win for every clicked top-n document over every unclicked
    /// top-n document of the same display.
    pub fn update(&mut self, q: QueryId, displayed: &Ranking, clicks: &[bool]) -> Result<()> {
        let n = self.shuffle_depth;
        let state = self
            .queries
            .get_mut(&q)
            .ok_or_else(|| Error::Data(format!("no display recorded for query {q}")))?;
        assert_eq!(clicks.len(), displayed.len());
        let top: Vec<DocId> = displayed.docs()[..n].to_vec();
        for &d in &top {
            if !clicks[d] {
                continue;
            }
            for &e in &top {
                if e != d && !clicks[e] {
                    state.wins[d][e] += 1;
                }
            }
        }
        Ok(())
    }

    /// The reported ranking for evaluation: top-n reordered by Copeland
    /// score (pairwise wins minus losses), ties broken by base order. The
    /// tail keeps the base order. Displays are never reported.
    pub fn reported(&self, q: QueryId) -> Option<Ranking> {
        let state = self.queries.get(&q)?;
        let n = self.shuffle_depth;
        let mut top: Vec<DocId> = state.base.docs()[..n].to_vec();
        let score = |d: DocId| -> i64 {
            let mut s = 0i64;
            for &e in &state.base.docs()[..n] {
                if e == d {
                    continue;
                }
                if state.wins[d][e] > state.wins[e][d] {
                    s += 1;
                } else if state.wins[d][e] < state.wins[e][d] {
                    s -= 1;
                }
            }
            s
        };
        let base_pos: HashMap<DocId, usize> = state
            .base
            .docs()
            .iter()
            .enumerate()
            .map(|(pos, &d)| (d, pos))
            .collect();
        top.sort_by_key(|&d| (-score(d), base_pos[&d]));
        let mut docs = top;
        docs.extend_from_slice(&state.base.docs()[n..]);
        Some(Ranking::new(docs).expect("permutation by construction"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pbm_no_data_display_is_uniform() {
        let trials = 3000usize;
        let mut counts = vec![0usize; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..trials {
            let mut state = PbmState::new();
            let y = state.display(5, 3, &mut rng);
            counts[y.docs()[0]] += 1;
        }
        let expect = trials as f64 / 3.0;
        let sigma = (trials as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn pbm_converges_on_the_unique_relevant_doc() {
        let mut state = PbmState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let y = state.display(0, 4, &mut rng);
            // Deterministic user: clicks doc 2 whenever it is examined,
            // examination decays with rank.
            let rank = y.rank_of(2).unwrap();
            let mut clicks = vec![false; 4];
            clicks[2] = rng.gen_bool(1.0 / rank as f64);
            state.update(0, &y, &clicks);
        }
        let reported = state.reported();
        let dist = reported.distribution(0, 4);
        assert_eq!(dist.groups()[0], vec![2]);
    }

    #[test]
    fn pbm_state_is_per_query() {
        let mut a = PbmState::new();
        let mut b = PbmState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = a.display(1, 3, &mut rng);
        a.update(1, &y, &[true, false, false]);
        let mut rng2 = ChaCha8Rng::seed_from_u64(4);
        let y2 = b.display(1, 3, &mut rng2);
        b.update(1, &y2, &[true, false, false]);
        // Interactions on query 2 leave query 1's estimates untouched.
        let y3 = a.display(2, 3, &mut rng);
        a.update(2, &y3, &[false, true, false]);
        assert_eq!(
            a.reported().distribution(1, 3).groups(),
            b.reported().distribution(1, 3).groups()
        );
    }

    #[test]
    fn pbm_same_seed_same_display_sequence() {
        let mut a = PbmState::new();
        let mut b = PbmState::new();
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ya = a.display(0, 5, &mut rng_a);
            let yb = b.display(0, 5, &mut rng_b);
            assert_eq!(ya, yb);
            a.update(0, &ya, &[false; 5]);
            b.update(0, &yb, &[false; 5]);
        }
    }

    #[test]
    fn hotfix_depth_one_reports_the_base() {
        let base = Ranking::new(vec![2, 0, 1]).unwrap();
        let mut state = HotfixState::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shown = state.display(0, &base, &mut rng).unwrap();
        assert_eq!(shown, base);
        state.update(0, &shown, &[true, false, false]).unwrap();
        assert_eq!(state.reported(0).unwrap(), base);
    }

    #[test]
    fn hotfix_depth_beyond_candidates_is_an_error() {
        let base = Ranking::new(vec![0, 1]).unwrap();
        let mut state = HotfixState::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(state.display(0, &base, &mut rng).is_err());
        assert!(HotfixState::new(0).is_err());
    }

    #[test]
    fn hotfix_learns_a_consistent_preference() {
        let base = Ranking::new(vec![0, 1, 2, 3]).unwrap();
        let mut state = HotfixState::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let shown = state.display(0, &base, &mut rng).unwrap();
            // Doc 2 is always clicked, nothing else ever is.
            let mut clicks = vec![false; 4];
            clicks[2] = true;
            state.update(0, &shown, &clicks).unwrap();
        }
        let reported = state.reported(0).unwrap();
        assert_eq!(reported.docs()[0], 2);
        // The tail beyond the shuffle depth keeps base order.
        assert_eq!(reported.docs()[3], 3);
        // Unclicked top-n docs tie at equal Copeland scores; base order wins.
        assert_eq!(&reported.docs()[1..3], &[0, 1]);
    }

    #[test]
    fn hotfix_display_marginals_are_uniform_over_the_top_n() {
        let base = Ranking::new(vec![0, 1, 2, 3, 4]).unwrap();
        let mut state = HotfixState::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 6000usize;
        let mut at_rank1 = vec![0usize; 3];
        for _ in 0..trials {
            let shown = state.display(0, &base, &mut rng).unwrap();
            at_rank1[shown.docs()[0]] += 1;
            // Ranks beyond the shuffle depth never move.
            assert_eq!(&shown.docs()[3..], &[3, 4]);
        }
        let expect = trials as f64 / 3.0;
        let sigma = (trials as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &at_rank1 {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "{at_rank1:?}");
        }
    }

    #[test]
    fn hotfix_evaluation_ignores_the_shuffled_display() {
        let base = Ranking::new(vec![0, 1, 2]).unwrap();
        let mut state = HotfixState::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shown = state.display(0, &base, &mut rng).unwrap();
        state.update(0, &shown, &[false; 3]).unwrap();
        // No clicks: the reported ranking is the base, whatever was shown.
        assert_eq!(state.reported(0).unwrap(), base);
    }
}
