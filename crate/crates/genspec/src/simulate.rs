//! Click simulation: logging policy, position-biased user model, and the
//! logged dataset with policy-aware propensities.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Query, MAX_LABEL};
use crate::error::{Error, Result};
use crate::models::LinearRanker;
use crate::policy::{Policy, SortPolicy};
use crate::ranking::{DocId, QueryId, Ranking};

/// Position-biased click model: examination probability `1 / rank`, click
/// probability given examination `0.2 + alpha * label`.
#[derive(Debug, Clone, Copy)]
pub struct ClickModel {
    alpha: f64,
}

pub const CLICK_OFFSET: f64 = 0.2;

impl ClickModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha < 0.0 || CLICK_OFFSET + alpha * MAX_LABEL as f64 > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "alpha {alpha} puts click probabilities outside [0, 1]"
            )));
        }
        Ok(ClickModel { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn examination(&self, rank: usize) -> f64 {
        assert!(rank >= 1);
        1.0 / rank as f64
    }

    pub fn click_given_examined(&self, label: u8) -> f64 {
        CLICK_OFFSET + self.alpha * label as f64
    }
}

/// One logged interaction: the unit of the click log.
///
/// `clicks` and `propensities` are in candidate order; the stored propensity
/// is the analytic policy-aware examination probability, not the realized
/// `1 / rank` of the displayed ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedInteraction {
    pub query: QueryId,
    pub ranking: Ranking,
    pub clicks: Vec<bool>,
    pub propensities: Vec<f64>,
}

impl LoggedInteraction {
    pub fn num_docs(&self) -> usize {
        self.ranking.len()
    }

    pub fn num_clicks(&self) -> usize {
        self.clicks.iter().filter(|&&c| c).count()
    }

    pub fn clicked_docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.clicks
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(d, _)| d)
    }
}

/// A sequence of logged interactions with a per-query index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogSlice {
    records: Vec<LoggedInteraction>,
}

impl LogSlice {
    pub fn new(records: Vec<LoggedInteraction>) -> Self {
        for r in &records {
            assert_eq!(r.clicks.len(), r.num_docs());
            assert_eq!(r.propensities.len(), r.num_docs());
            assert!(
                r.propensities.iter().all(|&p| p > 0.0),
                "logged propensities must be positive"
            );
        }
        LogSlice { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LoggedInteraction] {
        &self.records
    }

    pub fn total_clicks(&self) -> usize {
        self.records.iter().map(|r| r.num_clicks()).sum()
    }

    /// Unique query ids in first-appearance order.
    pub fn unique_queries(&self) -> Vec<QueryId> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.query) {
                out.push(r.query);
            }
        }
        out
    }

    /// The interactions issued for query `q`, in log order.
    pub fn for_query(&self, q: QueryId) -> LogSlice {
        LogSlice {
            records: self
                .records
                .iter()
                .filter(|r| r.query == q)
                .cloned()
                .collect(),
        }
    }

    pub fn max_docs(&self) -> usize {
        self.records.iter().map(|r| r.num_docs()).max().unwrap_or(0)
    }

    pub fn min_propensity(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.propensities.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Line-delimited text form:
    /// `qid \t ranking(comma doc ids) \t clicked doc ids \t propensities`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let ranking = join(r.ranking.iter().map(|d| d.to_string()));
            let clicks = join(r.clicked_docs().map(|d| d.to_string()));
            let props = join(r.propensities.iter().map(|p| p.to_string()));
            writeln!(out, "{}\t{}\t{}\t{}", r.query, ranking, clicks, props).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let query: QueryId = fields[0]
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: "invalid query id".into() })?;
            let docs: Vec<DocId> = split_parse(fields[1], lineno, "ranking")?;
            let ranking = Ranking::new(docs)
                .map_err(|msg| Error::Parse { line: lineno, msg })?;
            let clicked: Vec<DocId> = split_parse(fields[2], lineno, "clicks")?;
            let propensities: Vec<f64> = split_parse(fields[3], lineno, "propensities")?;
            if propensities.len() != ranking.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "propensity count disagrees with ranking length".into(),
                });
            }
            let mut clicks = vec![false; ranking.len()];
            for d in clicked {
                if d >= clicks.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("clicked doc {d} outside candidate set"),
                    });
                }
                clicks[d] = true;
            }
            records.push(LoggedInteraction { query, ranking, clicks, propensities });
        }
        Ok(LogSlice::new(records))
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

fn split_parse<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse { line, msg: format!("invalid {what} entry `{t}`") })
        })
        .collect()
}

/// Trains the logging policy: a linear scorer fit with a supervised pairwise
/// hinge loss on a seeded subsample of the training queries.
pub fn train_logging_policy(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SortPolicy> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.train.len();
    if n == 0 {
        return Err(Error::Train("empty training partition".into()));
    }
    let m = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(&mut rng);
    idx.truncate(m);
    let sample: Vec<&Query> = idx.iter().map(|&i| &dataset.train[i]).collect();
    if !sample
        .iter()
        .any(|q| q.docs.iter().any(|d| d.label != q.docs[0].label))
    {
        return Err(Error::Train(
            "logging subsample has no query with two distinct labels".into(),
        ));
    }

    let epochs = 20;
    let lr = 0.01;
    let mut weights = vec![0.0f64; dataset.num_features];
    let mut order: Vec<usize> = (0..sample.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &qi in &order {
            let q = sample[qi];
            for i in 0..q.docs.len() {
                for j in 0..q.docs.len() {
                    if q.docs[i].label > q.docs[j].label {
                        let si: f64 = dot(&weights, &q.docs[i].features);
                        let sj: f64 = dot(&weights, &q.docs[j].features);
                        if 1.0 - (si - sj) > 0.0 {
                            for f in 0..weights.len() {
                                weights[f] += lr * (q.docs[i].features[f] - q.docs[j].features[f]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LinearRanker::new(weights).to_policy(dataset))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Policy-aware examination propensity of document `d` under `policy`:
/// the expectation of `1 / rank(d)` over the policy's rankings, computed
/// analytically per tie group.
pub fn propensity<P: Policy>(policy: &P, q: QueryId, d: DocId, num_docs: usize) -> Result<f64> {
    if d >= num_docs {
        return Err(Error::Data(format!("document {d} outside candidate set of size {num_docs}")));
    }
    let p = policy.distribution(q, num_docs).expected_inverse_rank(d);
    if p <= 0.0 {
        return Err(Error::Estimate(format!(
            "zero examination propensity for query {q} document {d}"
        )));
    }
    Ok(p)
}

/// All candidate propensities of a query, candidate order.
pub fn propensities<P: Policy>(policy: &P, q: QueryId, num_docs: usize) -> Result<Vec<f64>> {
    (0..num_docs).map(|d| propensity(policy, q, d, num_docs)).collect()
}

/// Simulates `n` logged interactions of `logging` on the given partition.
pub fn simulate_clicks<P: Policy>(
    logging: &P,
    partition: &[Query],
    model: &ClickModel,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<LogSlice> {
    if partition.is_empty() {
        return Err(Error::Data("cannot simulate on an empty partition".into()));
    }
    let mut records = Vec::with_capacity(n);
    let mut cache: HashMap<QueryId, Vec<f64>> = HashMap::new();
    for _ in 0..n {
        records.push(simulate_one(logging, partition, model, rng, &mut cache)?);
    }
    Ok(LogSlice::new(records))
}

/// Appends interactions until the total click count reaches `target_clicks`.
/// Logs are nested across budgets: callers keep extending the same record
/// vector as the budget grows.
pub fn extend_until_clicks<P: Policy>(
    records: &mut Vec<LoggedInteraction>,
    clicks_so_far: &mut usize,
    logging: &P,
    partition: &[Query],
    model: &ClickModel,
    target_clicks: usize,
    rng: &mut dyn RngCore,
) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::Data("cannot simulate on an empty partition".into()));
    }
    let mut cache: HashMap<QueryId, Vec<f64>> = HashMap::new();
    while *clicks_so_far < target_clicks {
        let record = simulate_one(logging, partition, model, rng, &mut cache)?;
        *clicks_so_far += record.num_clicks();
        records.push(record);
    }
    Ok(())
}

fn simulate_one<P: Policy>(
    logging: &P,
    partition: &[Query],
    model: &ClickModel,
    rng: &mut dyn RngCore,
    cache: &mut HashMap<QueryId, Vec<f64>>,
) -> Result<LoggedInteraction> {
    let q = &partition[rng.gen_range(0..partition.len())];
    let ranking = logging.sample(q.id, q.num_docs(), rng);
    let props = match cache.get(&q.id) {
        Some(p) => p.clone(),
        None => {
            let p = propensities(logging, q.id, q.num_docs())?;
            cache.insert(q.id, p.clone());
            p
        }
    };
    let mut clicks = vec![false; q.num_docs()];
    for d in 0..q.num_docs() {
        let rank = ranking.rank_of(d).expect("ranking covers all candidates");
        let examined = rng.gen_bool(model.examination(rank));
        if examined {
            clicks[d] = rng.gen_bool(model.click_given_examined(q.docs[d].label));
        }
    }
    Ok(LoggedInteraction { query: q.id, ranking, clicks, propensities: props })
}

/// Interaction-level random split: `round(beta * n)` records go to the
/// selection slice, the rest to the training slice. Both keep log order.
pub fn split_log(log: &LogSlice, beta: f64, rng: &mut dyn RngCore) -> (LogSlice, LogSlice) {
    assert!((0.0..=1.0).contains(&beta), "beta must be in [0, 1]");
    let n = log.len();
    let n_sel = (beta * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(rng);
    let mut sel_idx: Vec<usize> = idx[..n_sel].to_vec();
    let mut train_idx: Vec<usize> = idx[n_sel..].to_vec();
    sel_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |ids: &[usize]| {
        LogSlice::new(ids.iter().map(|&i| log.records[i].clone()).collect())
    };
    (pick(&train_idx), pick(&sel_idx))
}
