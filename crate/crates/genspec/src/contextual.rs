//! Generalization of the safe-deployment scheme to contextual bandits: one
//! action per record instead of a ranking, contexts in place of queries.

use std::collections::{BTreeSet, HashMap};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::estimate::{bound_from_terms, BoundConfig, RelativeEstimate};

pub type ContextId = u32;
pub type ActionId = usize;

/// One bandit interaction: context shown, action taken under the logging
/// policy, observed reward, and the logging propensity of that action.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualRecord {
    pub context: ContextId,
    pub action: ActionId,
    pub reward: f64,
    pub propensity: f64,
}

/// A contextual bandit log over a fixed action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualLog {
    records: Vec<ContextualRecord>,
    num_actions: usize,
}

impl ContextualLog {
    pub fn new(records: Vec<ContextualRecord>, num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::Data("need at least one action".into()));
        }
        for r in &records {
            if r.action >= num_actions {
                return Err(Error::Data(format!(
                    "action {} out of range for {} actions",
                    r.action, num_actions
                )));
            }
            if r.propensity <= 0.0 {
                return Err(Error::Data(format!(
                    "propensity {} must be positive",
                    r.propensity
                )));
            }
            if r.reward < 0.0 {
                return Err(Error::Data(format!("reward {} must be non-negative", r.reward)));
            }
        }
        Ok(ContextualLog { records, num_actions })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn records(&self) -> &[ContextualRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Unique contexts in first-appearance order.
    pub fn unique_contexts(&self) -> Vec<ContextId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.context) {
                out.push(r.context);
            }
        }
        out
    }

    pub fn for_context(&self, z: ContextId) -> ContextualLog {
        ContextualLog {
            records: self.records.iter().filter(|r| r.context == z).cloned().collect(),
            num_actions: self.num_actions,
        }
    }

    /// Random record-level split: `round(beta * n)` records to the selection
    /// log, the rest to the training log. Both keep log order.
    pub fn split(&self, beta: f64, rng: &mut dyn RngCore) -> (ContextualLog, ContextualLog) {
        assert!((0.0..=1.0).contains(&beta), "beta must be in [0, 1]");
        let n = self.len();
        let n_sel = (beta * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(rng);
        let mut sel: Vec<usize> = idx[..n_sel].to_vec();
        let mut train: Vec<usize> = idx[n_sel..].to_vec();
        sel.sort_unstable();
        train.sort_unstable();
        let pick = |ids: &[usize]| ContextualLog {
            records: ids.iter().map(|&i| self.records[i].clone()).collect(),
            num_actions: self.num_actions,
        };
        (pick(&train), pick(&sel))
    }
}

/// A stochastic action policy: a probability vector per context. Contexts
/// absent from the table act uniformly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionPolicy {
    table: HashMap<ContextId, Vec<f64>>,
}

impl ActionPolicy {
    pub fn new(table: HashMap<ContextId, Vec<f64>>) -> Result<Self> {
        for (z, probs) in &table {
            if probs.iter().any(|&p| p < 0.0) {
                return Err(Error::Data(format!("context {z}: negative probability")));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "context {z}: probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(ActionPolicy { table })
    }

    /// Deterministic policy from one chosen action per context.
    pub fn deterministic(choices: &HashMap<ContextId, ActionId>, num_actions: usize) -> Self {
        let table = choices
            .iter()
            .map(|(&z, &a)| {
                let mut probs = vec![0.0; num_actions];
                probs[a] = 1.0;
                (z, probs)
            })
            .collect();
        ActionPolicy { table }
    }

    pub fn probability(&self, z: ContextId, a: ActionId, num_actions: usize) -> f64 {
        match self.table.get(&z) {
            Some(probs) => probs[a],
            None => 1.0 / num_actions as f64,
        }
    }
}

/// IPS estimate of a policy's expected reward on a contextual log.
pub fn contextual_reward(policy: &ActionPolicy, log: &ContextualLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Estimate("cannot estimate reward on an empty log".into()));
    }
    let total: f64 = log
        .records()
        .iter()
        .map(|r| r.reward / r.propensity * policy.probability(r.context, r.action, log.num_actions))
        .sum();
    Ok(total / log.len() as f64)
}

/// High-confidence bound on the reward difference between two action
/// policies. The single-action setting uses the rank-weight bound formula
/// with one term per record.
pub fn contextual_relative_bound(
    policy1: &ActionPolicy,
    policy2: &ActionPolicy,
    log: &ContextualLog,
    epsilon: f64,
) -> Result<RelativeEstimate> {
    if log.len() <= 1 {
        return Err(Error::Estimate(format!(
            "need more than one record, got {}",
            log.len()
        )));
    }
    let b = log
        .records()
        .iter()
        .map(|r| r.reward / r.propensity)
        .fold(0.0f64, f64::max);
    if b <= 0.0 {
        return Err(Error::Estimate(
            "all rewards are zero; the term bound degenerates".into(),
        ));
    }
    let cfg = BoundConfig::new(epsilon, b, 1)?;
    let k = log.num_actions;
    let terms: Vec<f64> = log
        .records()
        .iter()
        .map(|r| {
            r.reward / r.propensity
                * (policy1.probability(r.context, r.action, k)
                    - policy2.probability(r.context, r.action, k))
        })
        .collect();
    Ok(bound_from_terms(&terms, &cfg))
}

/// The per-context specialized policy: for each context, play the action
/// with the highest IPS value estimate, uniformly over exact ties.
pub fn infer_contextual_tabular(log: &ContextualLog) -> ActionPolicy {
    let mut sums: HashMap<ContextId, (Vec<f64>, usize)> = HashMap::new();
    for r in log.records() {
        let entry = sums
            .entry(r.context)
            .or_insert_with(|| (vec![0.0; log.num_actions], 0));
        entry.0[r.action] += r.reward / r.propensity;
        entry.1 += 1;
    }
    let table = sums
        .into_iter()
        .map(|(z, (sum, count))| {
            let values: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            let best = values.iter().copied().fold(f64::MIN, f64::max);
            let winners: Vec<usize> = (0..values.len()).filter(|&a| values[a] == best).collect();
            let share = 1.0 / winners.len() as f64;
            let mut probs = vec![0.0; values.len()];
            for a in winners {
                probs[a] = share;
            }
            (z, probs)
        })
        .collect();
    ActionPolicy { table }
}

/// The deployed contextual meta-policy.
#[derive(Debug, Clone)]
pub struct ContextualMetaPolicy {
    pub logging: ActionPolicy,
    pub generalized: Option<ActionPolicy>,
    pub specialized: ActionPolicy,
    pub generalized_activated: bool,
    pub overrides: BTreeSet<ContextId>,
}

impl ContextualMetaPolicy {
    pub fn probability(&self, z: ContextId, a: ActionId, num_actions: usize) -> f64 {
        if self.overrides.contains(&z) {
            self.specialized.probability(z, a, num_actions)
        } else if self.generalized_activated {
            self.generalized
                .as_ref()
                .expect("activation requires a generalized policy")
                .probability(z, a, num_actions)
        } else {
            self.logging.probability(z, a, num_actions)
        }
    }
}

/// Safe deployment for contextual bandits: splits the log, trains the
/// generalized policy with the supplied trainer and the specialized policy
/// per context, certifies both on the selection log, and trains final
/// versions on the full log.
pub fn contextual_initialize(
    logging: &ActionPolicy,
    log: &ContextualLog,
    epsilon: f64,
    beta: f64,
    train_generalized: &dyn Fn(&ContextualLog) -> Result<ActionPolicy>,
    rng: &mut dyn RngCore,
) -> Result<ContextualMetaPolicy> {
    if log.is_empty() {
        return Ok(ContextualMetaPolicy {
            logging: logging.clone(),
            generalized: None,
            specialized: ActionPolicy::default(),
            generalized_activated: false,
            overrides: BTreeSet::new(),
        });
    }
    let (train, selection) = log.split(beta, rng);
    let generalized_train = if train.is_empty() { None } else { Some(train_generalized(&train)?) };
    let specialized_train = infer_contextual_tabular(&train);

    let certified = |p1: &ActionPolicy, p2: &ActionPolicy, slice: &ContextualLog| -> bool {
        if slice.len() <= 1 {
            return false;
        }
        matches!(
            contextual_relative_bound(p1, p2, slice, epsilon),
            Ok(est) if est.lcb > 0.0
        )
    };

    let activated = match &generalized_train {
        Some(g) if !selection.is_empty() => certified(g, logging, &selection),
        _ => false,
    };

    let mut overrides = BTreeSet::new();
    for z in selection.unique_contexts() {
        let slice = selection.for_context(z);
        let incumbent = if activated {
            generalized_train.as_ref().unwrap()
        } else {
            logging
        };
        if certified(&specialized_train, incumbent, &slice) {
            overrides.insert(z);
        }
    }

    Ok(ContextualMetaPolicy {
        logging: logging.clone(),
        generalized: Some(train_generalized(log)?),
        specialized: infer_contextual_tabular(log),
        generalized_activated: activated,
        overrides,
    })
}
