//! Dataset ingestion (LETOR/SVMLight text format) and synthetic generation.
//!
//! Grammar of a LETOR line, one document per line:
//!
//! ```text
//! <label> qid:<id> <idx>:<val> <idx>:<val> ... [# comment]
//! ```
//!
//! Labels are integers in `0..=4`, feature indices are 1-based and may be
//! sparse; absent indices read as `0.0`. Documents are grouped by `qid` in
//! file order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::RelevanceTable;
use crate::ranking::QueryId;

pub const MAX_LABEL: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: QueryId,
    pub docs: Vec<Document>,
}

impl Query {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }
}

/// Queries split into train/validation/test partitions with a constant
/// feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Query>,
    pub validation: Vec<Query>,
    pub test: Vec<Query>,
    pub num_features: usize,
}

impl Dataset {
    pub fn from_partitions(
        train: Vec<Query>,
        validation: Vec<Query>,
        test: Vec<Query>,
    ) -> Result<Self> {
        let num_features = train
            .iter()
            .chain(&validation)
            .chain(&test)
            .flat_map(|q| q.docs.iter())
            .map(|d| d.features.len())
            .max()
            .unwrap_or(0);
        let mut ds = Dataset { train, validation, test, num_features };
        let mut seen = std::collections::HashSet::new();
        for q in ds.all_queries() {
            if q.docs.is_empty() {
                return Err(Error::Data(format!("query {} has no documents", q.id)));
            }
            if !seen.insert(q.id) {
                return Err(Error::Data(format!("duplicate query id {} across partitions", q.id)));
            }
        }
        // Sparse LETOR files may truncate trailing zero features.
        for part in [&mut ds.train, &mut ds.validation, &mut ds.test] {
            for q in part.iter_mut() {
                for d in q.docs.iter_mut() {
                    d.features.resize(num_features, 0.0);
                }
            }
        }
        Ok(ds)
    }

    pub fn all_queries(&self) -> impl Iterator<Item = &Query> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn query(&self, id: QueryId) -> Option<&Query> {
        self.all_queries().find(|q| q.id == id)
    }
}

/// Parses one LETOR partition from a text stream.
pub fn parse_letor<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let mut order: Vec<QueryId> = Vec::new();
    let mut grouped: HashMap<QueryId, Vec<Document>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| parse_err(lineno, "empty line"))?;
        let label: i64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, &format!("expected integer label, got `{label_tok}`")))?;
        if !(0..=MAX_LABEL as i64).contains(&label) {
            return Err(parse_err(lineno, &format!("label {label} outside 0..={MAX_LABEL}")));
        }
        let qid_tok = tokens.next().ok_or_else(|| parse_err(lineno, "missing qid field"))?;
        let qid: QueryId = qid_tok
            .strip_prefix("qid:")
            .ok_or_else(|| parse_err(lineno, &format!("expected qid:<id>, got `{qid_tok}`")))?
            .parse()
            .map_err(|_| parse_err(lineno, &format!("invalid qid in `{qid_tok}`")))?;
        let mut features = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, &format!("expected <idx>:<val>, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, &format!("invalid feature index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, &format!("invalid feature value in `{tok}`")))?;
            if idx > features.len() {
                features.resize(idx, 0.0);
            }
            features[idx - 1] = val;
        }
        if !grouped.contains_key(&qid) {
            order.push(qid);
        }
        grouped
            .entry(qid)
            .or_default()
            .push(Document { features, label: label as u8 });
    }
    Ok(order
        .into_iter()
        .map(|id| Query { docs: grouped.remove(&id).unwrap(), id })
        .collect())
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse { line, msg: msg.to_string() }
}

/// Writes queries in the same LETOR grammar `parse_letor` accepts.
pub fn write_letor<W: Write>(queries: &[Query], writer: &mut W) -> Result<()> {
    for q in queries {
        for d in &q.docs {
            write!(writer, "{} qid:{}", d.label, q.id)?;
            for (i, v) in d.features.iter().enumerate() {
                write!(writer, " {}:{}", i + 1, v)?;
            }
            writeln!(writer)?;
        }
    }
    Ok(())
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub train_queries: usize,
    pub validation_queries: usize,
    pub test_queries: usize,
    pub docs_per_query: usize,
    pub num_features: usize,
    pub signal_dims: usize,
    /// Signal strength `s` in `[0, 1]`: 1 makes features fully determine the
    /// label ordering, 0 makes them pure noise.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            train_queries: 200,
            validation_queries: 50,
            test_queries: 100,
            docs_per_query: 10,
            num_features: 8,
            signal_dims: 3,
            signal_strength: 0.7,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_queries == 0
            || self.validation_queries == 0
            || self.test_queries == 0
            || self.docs_per_query == 0
        {
            return Err(Error::Config("all query/document counts must be positive".into()));
        }
        if self.num_features < 2 {
            return Err(Error::Config(
                "need at least 2 feature dimensions (one signal, one distractor)".into(),
            ));
        }
        if self.signal_dims == 0 || self.signal_dims >= self.num_features {
            return Err(Error::Config(
                "signal dimensions must be at least 1 and leave room for a distractor".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Config("signal strength must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Generates a desk-scale dataset with controllable feature informativeness.
///
/// Labels are uniform over `0..=4`. Signal dimensions mix the scaled label
/// with noise; part of that noise is a per-document component shared across
/// all signal dimensions, so a linear model cannot average it away and its
/// ranking quality plateaus strictly below perfect whenever `s < 1`.
/// Remaining dimensions are pure distractors. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Uniform::new(0.0f64, 1.0);
    let mut next_id: QueryId = 0;
    let mut make_partition = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Query> {
        (0..count)
            .map(|_| {
                let id = next_id;
                next_id += 1;
                let docs = (0..spec.docs_per_query)
                    .map(|_| {
                        let label = rng.gen_range(0..=MAX_LABEL);
                        let shared_noise = unit.sample(rng);
                        let s = spec.signal_strength;
                        let mut features = Vec::with_capacity(spec.num_features);
                        for dim in 0..spec.num_features {
                            if dim < spec.signal_dims {
                                let own_noise = unit.sample(rng);
                                let noise = 2.0 * shared_noise + 2.5 * own_noise;
                                features.push(s * (label as f64 / MAX_LABEL as f64) + (1.0 - s) * noise);
                            } else if dim == spec.signal_dims {
                                // The shared noise is observable on its own,
                                // so a well-fit linear model can cancel it
                                // out of the signal dimensions; the
                                // independent noise stays irreducible.
                                features.push(shared_noise);
                            } else {
                                features.push(unit.sample(rng));
                            }
                        }
                        Document { features, label }
                    })
                    .collect();
                Query { id, docs }
            })
            .collect()
    };
    let train = make_partition(spec.train_queries, &mut rng);
    let validation = make_partition(spec.validation_queries, &mut rng);
    let test = make_partition(spec.test_queries, &mut rng);
    Dataset::from_partitions(train, validation, test)
}

/// Click-probability table `0.2 + alpha * label` over every candidate pair.
pub fn relevance_from_labels(dataset: &Dataset, alpha: f64) -> Result<RelevanceTable> {
    if alpha < 0.0 {
        return Err(Error::Config("alpha must be non-negative".into()));
    }
    if 0.2 + alpha * MAX_LABEL as f64 > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "0.2 + {alpha} * {MAX_LABEL} exceeds 1; not a probability"
        )));
    }
    let mut table = RelevanceTable::new();
    for q in dataset.all_queries() {
        table.insert(
            q.id,
            q.docs.iter().map(|d| 0.2 + alpha * d.label as f64).collect(),
        );
    }
    Ok(table)
}

/// `(query id, candidate count)` pairs for NDCG evaluation.
pub fn eval_queries(queries: &[Query]) -> Vec<(QueryId, usize)> {
    queries.iter().map(|q| (q.id, q.num_docs())).collect()
}

/// Ground-truth labels as gains, for NDCG evaluation.
pub fn labels_table(dataset: &Dataset) -> RelevanceTable {
    let mut table = RelevanceTable::new();
    for q in dataset.all_queries() {
        table.insert(q.id, q.docs.iter().map(|d| d.label as f64).collect());
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parse_basic_line() {
        let queries = parse_letor(Cursor::new("2 qid:7 1:0.5 3:1.0\n")).unwrap();
        assert_eq!(queries.len(), 1);
        assert_eq!(queries[0].id, 7);
        assert_eq!(queries[0].docs[0].label, 2);
        assert_eq!(queries[0].docs[0].features, vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn parse_ignores_comments() {
        let queries = parse_letor(Cursor::new("0 qid:7 1:0 # docid=abc\n")).unwrap();
        assert_eq!(queries[0].docs[0].label, 0);
        assert_eq!(queries[0].docs[0].features, vec![0.0]);
    }

    #[test]
    fn parse_rejects_missing_label() {
        let err = parse_letor(Cursor::new("qid:7 1:0.5\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn parse_rejects_label_out_of_range() {
        assert!(parse_letor(Cursor::new("5 qid:7 1:0.5\n")).is_err());
        assert!(parse_letor(Cursor::new("-1 qid:7 1:0.5\n")).is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let input = "1 qid:1 1:0.5\n\nbogus line\n";
        match parse_letor(Cursor::new(input)).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parse_groups_by_qid_in_file_order() {
        let input = "1 qid:2 1:1\n0 qid:1 1:2\n2 qid:2 1:3\n";
        let queries = parse_letor(Cursor::new(input)).unwrap();
        assert_eq!(queries.len(), 2);
        assert_eq!(queries[0].id, 2);
        assert_eq!(queries[0].docs.len(), 2);
        assert_eq!(queries[1].id, 1);
    }

    #[test]
    fn letor_round_trip() {
        let spec = SyntheticSpec { train_queries: 3, validation_queries: 1, test_queries: 1, ..Default::default() };
        let ds = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_letor(&ds.train, &mut buf).unwrap();
        let reparsed = parse_letor(Cursor::new(&buf)).unwrap();
        assert_eq!(reparsed, ds.train);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec { seed: 99, ..Default::default() };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn synthetic_rejects_tiny_feature_dim() {
        let spec = SyntheticSpec { num_features: 1, signal_dims: 1, ..Default::default() };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn full_signal_features_encode_labels_exactly() {
        let spec = SyntheticSpec { signal_strength: 1.0, ..Default::default() };
        let ds = generate_synthetic(&spec).unwrap();
        for q in ds.all_queries() {
            for d in &q.docs {
                assert_eq!(d.features[0], d.label as f64 / 4.0);
            }
        }
    }

    #[test]
    fn relevance_table_values() {
        let spec = SyntheticSpec { train_queries: 5, validation_queries: 1, test_queries: 1, ..Default::default() };
        let ds = generate_synthetic(&spec).unwrap();
        let t = relevance_from_labels(&ds, 0.2).unwrap();
        for q in ds.all_queries() {
            for (d, doc) in q.docs.iter().enumerate() {
                let v = t.get(q.id, d).unwrap();
                assert_eq!(v, 0.2 + 0.2 * doc.label as f64);
                assert!((0.2..=1.0).contains(&v));
            }
        }
        let t = relevance_from_labels(&ds, 0.025).unwrap();
        for q in ds.all_queries() {
            for (d, doc) in q.docs.iter().enumerate() {
                if doc.label == 0 {
                    assert_eq!(t.get(q.id, d).unwrap(), 0.2);
                }
            }
        }
    }

    #[test]
    fn relevance_table_rejects_probability_overflow() {
        let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert!(relevance_from_labels(&ds, 0.21).is_err());
    }
}
