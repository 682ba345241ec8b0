//! Safe deployment of specialized rankers: train generalized and specialized
//! models on one part of the log, certify them against the fallback on the
//! held-out part, and serve per query whichever model the certificate allows.

use std::collections::BTreeSet;

use rand::RngCore;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{relative_bound, sea_decision, BoundConfig};
use crate::models::{infer_tabular, train_feature_based, TrainParams};
use crate::policy::{Policy, SortPolicy};
use crate::ranking::{QueryId, RankWeight, RankingDistribution};
use crate::simulate::{split_log, LogSlice};

/// How deployment decisions are certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRule {
    /// Deploy when the lower confidence bound on the relative gain is
    /// positive.
    RelativeBound,
    /// Deploy on the sign of the point estimate alone, no confidence term.
    SignOnly,
    /// Deploy when two per-policy confidence intervals separate.
    Sea,
}

/// The outcome of the deployment decision: whether the feature-based model
/// replaces the logging policy globally, and which queries the specialized
/// model overrides.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeploymentDecision {
    pub feature_activated: bool,
    pub overrides: BTreeSet<QueryId>,
}

impl DeploymentDecision {
    /// First line is the activation flag, then one overridden query per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.feature_activated { "activated\n" } else { "inactive\n" });
        for q in &self.overrides {
            out.push_str(&q.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let feature_activated = match lines.next() {
            Some((_, "activated")) => true,
            Some((_, "inactive")) => false,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected `activated` or `inactive`".into(),
                })
            }
        };
        let mut overrides = BTreeSet::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let q = line.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("invalid query id `{line}`"),
            })?;
            overrides.insert(q);
        }
        Ok(DeploymentDecision { feature_activated, overrides })
    }
}

/// Which model serves a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Serve {
    Tabular,
    Feature,
    Logging,
}

/// The deployed meta-policy: per query, the specialized model where it is
/// certified, otherwise the feature-based model if activated, otherwise the
/// logging policy.
#[derive(Debug, Clone)]
pub struct GenSpecPolicy {
    pub logging: SortPolicy,
    pub feature: Option<SortPolicy>,
    pub tabular: Option<SortPolicy>,
    pub decision: DeploymentDecision,
}

impl GenSpecPolicy {
    pub fn model_to_serve(&self, q: QueryId) -> Serve {
        if self.tabular.is_some() && self.decision.overrides.contains(&q) {
            Serve::Tabular
        } else if self.feature.is_some() && self.decision.feature_activated {
            Serve::Feature
        } else {
            Serve::Logging
        }
    }
}

impl Policy for GenSpecPolicy {
    fn distribution(&self, q: QueryId, num_docs: usize) -> RankingDistribution {
        match self.model_to_serve(q) {
            Serve::Tabular => self.tabular.as_ref().unwrap().distribution(q, num_docs),
            Serve::Feature => self.feature.as_ref().unwrap().distribution(q, num_docs),
            Serve::Logging => self.logging.distribution(q, num_docs),
        }
    }
}

/// Models trained from the log split, ready for certification at any
/// confidence level.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Feature-based model trained on the full log, for serving.
    pub feature: Option<SortPolicy>,
    /// Specialized model trained on the full log, for serving.
    pub tabular: SortPolicy,
    /// Feature-based model trained on the training slice, for certification.
    feature_train: Option<SortPolicy>,
    /// Specialized model trained on the training slice, for certification.
    tabular_train: SortPolicy,
    selection: LogSlice,
}

/// Splits the log, trains both model classes on the training slice for
/// certification and on the full log for serving.
///
/// `validation` is a held-out log used only for checkpoint selection inside
/// the feature trainer; it must be disjoint from `log` so that the selection
/// slice never influences the models it later certifies. A training slice
/// without clicks leaves the feature-based model out; the decision step then
/// falls back to the logging policy.
pub fn prepare(
    log: &LogSlice,
    validation: &LogSlice,
    dataset: &Dataset,
    beta: f64,
    params: &TrainParams,
    seed: u64,
    rng: &mut dyn RngCore,
) -> Result<Prepared> {
    let (train, selection) = split_log(log, beta, rng);
    let feature_train = match train_feature_based(&train, validation, dataset, params, seed) {
        Ok(r) => Some(r.to_policy(dataset)),
        Err(Error::Train(_)) => None,
        Err(e) => return Err(e),
    };
    let feature = match train_feature_based(log, validation, dataset, params, seed) {
        Ok(r) => Some(r.to_policy(dataset)),
        Err(Error::Train(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Prepared {
        feature,
        tabular: infer_tabular(log).to_policy(),
        feature_train,
        tabular_train: infer_tabular(&train).to_policy(),
        selection,
    })
}

/// Certifies the prepared models at confidence `epsilon` and assembles the
/// deployed policy.
pub fn decide<W: RankWeight>(
    prepared: &Prepared,
    logging: &SortPolicy,
    epsilon: f64,
    rule: DecisionRule,
    weight: &W,
) -> Result<GenSpecPolicy> {
    let selection = &prepared.selection;
    let mut decision = DeploymentDecision::default();

    let feature_certified = match (&prepared.feature_train, selection.is_empty()) {
        (Some(candidate), false) => {
            certified_better(candidate, logging, selection, epsilon, rule, weight)?
        }
        _ => false,
    };
    decision.feature_activated = feature_certified && prepared.feature.is_some();

    if !selection.is_empty() {
        for q in selection.unique_queries() {
            let slice = selection.for_query(q);
            let incumbent: &dyn Policy = if decision.feature_activated {
                prepared.feature_train.as_ref().unwrap()
            } else {
                logging
            };
            if certified_better(&prepared.tabular_train, &incumbent, &slice, epsilon, rule, weight)? {
                decision.overrides.insert(q);
            }
        }
    }

    Ok(GenSpecPolicy {
        logging: logging.clone(),
        feature: prepared.feature.clone(),
        tabular: Some(prepared.tabular.clone()),
        decision,
    })
}

/// Whether `candidate` is certified better than `incumbent` on the slice
/// under the given rule. Slices too small to bound are never certified.
fn certified_better<P1: Policy, P2: Policy, W: RankWeight>(
    candidate: &P1,
    incumbent: &P2,
    slice: &LogSlice,
    epsilon: f64,
    rule: DecisionRule,
    weight: &W,
) -> Result<bool> {
    if slice.is_empty() {
        return Ok(false);
    }
    let cfg = BoundConfig::from_slice(slice, epsilon, weight)?;
    if slice.len() * cfg.k <= 1 {
        return Ok(false);
    }
    match rule {
        DecisionRule::RelativeBound => {
            Ok(relative_bound(candidate, incumbent, slice, &cfg, weight)?.lcb > 0.0)
        }
        DecisionRule::SignOnly => {
            Ok(relative_bound(candidate, incumbent, slice, &cfg, weight)?.delta_hat > 0.0)
        }
        DecisionRule::Sea => sea_decision(candidate, incumbent, slice, &cfg, weight),
    }
}

/// Runs the full pipeline: split, train, certify, assemble.
#[allow(clippy::too_many_arguments)]
pub fn initialize<W: RankWeight>(
    log: &LogSlice,
    validation: &LogSlice,
    dataset: &Dataset,
    logging: &SortPolicy,
    beta: f64,
    epsilon: f64,
    rule: DecisionRule,
    params: &TrainParams,
    weight: &W,
    seed: u64,
    rng: &mut dyn RngCore,
) -> Result<GenSpecPolicy> {
    if log.is_empty() {
        return Ok(GenSpecPolicy {
            logging: logging.clone(),
            feature: None,
            tabular: None,
            decision: DeploymentDecision::default(),
        });
    }
    let prepared = prepare(log, validation, dataset, beta, params, seed, rng)?;
    decide(&prepared, logging, epsilon, rule, weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::ranking::DcgWeight;
    use crate::simulate::{simulate_clicks, train_logging_policy, ClickModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture(interactions: usize, seed: u64) -> (crate::data::Dataset, SortPolicy, LogSlice) {
        let ds = generate_synthetic(&SyntheticSpec {
            train_queries: 20,
            validation_queries: 5,
            test_queries: 5,
            docs_per_query: 5,
            seed,
            ..Default::default()
        })
        .unwrap();
        let logging = train_logging_policy(&ds, 0.05, seed).unwrap();
        let model = ClickModel::new(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = simulate_clicks(&logging, &ds.train, &model, interactions, &mut rng).unwrap();
        (ds, logging, log)
    }

    fn run(
        interactions: usize,
        epsilon: f64,
        rule: DecisionRule,
        seed: u64,
    ) -> (SortPolicy, GenSpecPolicy) {
        let (ds, logging, log) = fixture(interactions, seed);
        let params = TrainParams { epochs: 5, max_batches_per_epoch: 20, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let deployed = initialize(
            &log,
            &LogSlice::default(),
            &ds,
            &logging,
            0.5,
            epsilon,
            rule,
            &params,
            &DcgWeight,
            seed,
            &mut rng,
        )
        .unwrap();
        (logging, deployed)
    }

    #[test]
    fn empty_log_serves_logging_everywhere() {
        let (ds, logging, _) = fixture(10, 3);
        let params = TrainParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let deployed = initialize(
            &LogSlice::default(),
            &LogSlice::default(),
            &ds,
            &logging,
            0.5,
            0.95,
            DecisionRule::RelativeBound,
            &params,
            &DcgWeight,
            3,
            &mut rng,
        )
        .unwrap();
        assert!(!deployed.decision.feature_activated);
        assert!(deployed.decision.overrides.is_empty());
        assert_eq!(deployed.model_to_serve(0), Serve::Logging);
        assert_eq!(
            deployed.distribution(0, 5).groups(),
            logging.distribution(0, 5).groups()
        );
    }

    #[test]
    fn serving_dispatch_matches_decision() {
        let (_, deployed) = run(3000, 0.5, DecisionRule::RelativeBound, 7);
        for q in 0..20u32 {
            let expected = if deployed.decision.overrides.contains(&q) {
                Serve::Tabular
            } else if deployed.decision.feature_activated {
                Serve::Feature
            } else {
                Serve::Logging
            };
            assert_eq!(deployed.model_to_serve(q), expected);
        }
    }

    #[test]
    fn higher_confidence_certifies_no_more_overrides() {
        let (_, loose) = run(2000, 0.5, DecisionRule::RelativeBound, 5);
        let (_, strict) = run(2000, 0.99, DecisionRule::RelativeBound, 5);
        assert!(strict.decision.overrides.is_subset(&loose.decision.overrides));
        assert!(loose.decision.feature_activated || !strict.decision.feature_activated);
    }

    #[test]
    fn sign_only_certifies_at_least_relative_bound() {
        let (_, bound) = run(2000, 0.95, DecisionRule::RelativeBound, 9);
        let (_, sign) = run(2000, 0.95, DecisionRule::SignOnly, 9);
        assert!(bound.decision.overrides.is_subset(&sign.decision.overrides));
    }

    #[test]
    fn tiny_log_never_overrides() {
        let (_, deployed) = run(2, 0.95, DecisionRule::RelativeBound, 13);
        assert!(deployed.decision.overrides.is_empty());
    }

    #[test]
    fn decision_serialization_round_trips() {
        let (_, deployed) = run(1000, 0.5, DecisionRule::RelativeBound, 15);
        let text = deployed.decision.to_text();
        assert_eq!(DeploymentDecision::from_text(&text).unwrap(), deployed.decision);
        assert!(DeploymentDecision::from_text("bogus\n").is_err());
    }

    #[test]
    fn decision_ignores_full_data_models() {
        let (ds, logging, log) = fixture(1500, 25);
        let params = TrainParams { epochs: 5, max_batches_per_epoch: 20, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let prepared =
            prepare(&log, &LogSlice::default(), &ds, 0.5, &params, 25, &mut rng).unwrap();
        let mut perturbed = prepared.clone();
        let garbage: std::collections::HashMap<QueryId, Vec<f64>> =
            (0..20u32).map(|q| (q, (0..5).map(|d| -(d as f64)).collect())).collect();
        perturbed.feature = Some(SortPolicy::new(garbage.clone()));
        perturbed.tabular = SortPolicy::new(garbage);
        let a = decide(&prepared, &logging, 0.9, DecisionRule::RelativeBound, &DcgWeight).unwrap();
        let b = decide(&perturbed, &logging, 0.9, DecisionRule::RelativeBound, &DcgWeight).unwrap();
        assert_eq!(a.decision, b.decision);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let (_, a) = run(800, 0.9, DecisionRule::RelativeBound, 21);
        let (_, b) = run(800, 0.9, DecisionRule::RelativeBound, 21);
        assert_eq!(a.decision, b.decision);
    }
}
