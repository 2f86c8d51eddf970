//! Exact outcome distributions.
//!
//! For a partition `o`, every step in `o` applies its merged isometry and
//! records no outcome; every other step branches. The probability of an
//! outcome sequence is the squared norm of the unnormalized chain
//! `M_n ... M_1 |initial>`.
//!
//! The partition mixture fills each blank uniformly over the merged step's
//! outcomes: `P(t) = sum_o p_o / n_o * P_o(visible_o(t))` with `n_o` the
//! product of branch counts of the merged steps.

use std::cmp::Ordering;
use std::fmt::Write;

use thiserror::Error;

use crate::exec::{map_slice, Execution};
use crate::expr::format_decimal;
use crate::linalg::{apply, LinalgError, StateVector};
use crate::scenario::{Partition, PartitionError, PartitionPrior, Scenario, Violation};

/// Text used for a blank (merged, unrecorded) outcome.
pub const BLANK: &str = "-";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("scenario is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<Violation>),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("outcome tuple does not fit: {0}")]
    Tuple(String),
    #[error("step {step}: {source}")]
    Shape { step: String, source: LinalgError },
    #[error("scenario has no halting condition")]
    NoHaltTarget,
}

/// One outcome per step, as a branch index; `None` is a blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeTuple(pub Vec<Option<usize>>);

impl OutcomeTuple {
    pub fn labels<'a>(&self, s: &'a Scenario) -> Vec<&'a str> {
        self.0
            .iter()
            .zip(&s.steps)
            .map(|(o, step)| o.map_or(BLANK, |k| step.branches[k].label.as_str()))
            .collect()
    }

    pub fn display(&self, s: &Scenario) -> String {
        self.labels(s).join(",")
    }

    /// Builds a tuple from per-step labels (`-` for blank).
    pub fn from_labels(s: &Scenario, labels: &[&str]) -> Result<Self, EngineError> {
        if labels.len() != s.steps.len() {
            return Err(EngineError::Tuple(format!(
                "{} outcomes for {} steps",
                labels.len(),
                s.steps.len()
            )));
        }
        labels
            .iter()
            .zip(&s.steps)
            .map(|(&l, step)| {
                if l == BLANK {
                    Ok(None)
                } else {
                    step.branch_index(l).map(Some).ok_or_else(|| {
                        EngineError::Tuple(format!("step {} has no outcome `{l}`", step.id))
                    })
                }
            })
            .collect::<Result<_, _>>()
            .map(OutcomeTuple)
    }

    pub fn has_blank(&self) -> bool {
        self.0.iter().any(Option::is_none)
    }

    /// Copy with the masked steps blanked out.
    pub fn visible(&self, merged: &[bool]) -> OutcomeTuple {
        OutcomeTuple(
            self.0
                .iter()
                .zip(merged)
                .map(|(&o, &m)| if m { None } else { o })
                .collect(),
        )
    }

    /// Whether every halt target is met. A blank never matches.
    pub fn meets(&self, targets: &[(usize, usize)]) -> bool {
        !targets.is_empty() && targets.iter().all(|&(step, k)| self.0[step] == Some(k))
    }
}

/// Halt targets as `(step index, branch index)` pairs.
pub fn halt_indices(s: &Scenario) -> Vec<(usize, usize)> {
    s.halt
        .iter()
        .filter_map(|(id, label)| {
            let i = s.step_index(id)?;
            let k = s.steps[i].branch_index(label)?;
            Some((i, k))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSource {
    Partition(Partition),
    Mixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub source: DistributionSource,
    /// Entries in enumeration order (first step slowest, branch order).
    pub entries: Vec<(OutcomeTuple, f64)>,
}

impl OutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn prob(&self, t: &OutcomeTuple) -> Option<f64> {
        self.entries.iter().find(|(u, _)| u == t).map(|&(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total probability of tuples satisfying `pred`.
    pub fn marginal(&self, pred: impl Fn(&OutcomeTuple) -> bool) -> f64 {
        self.entries.iter().filter(|(t, _)| pred(t)).map(|(_, p)| p).sum()
    }

    /// Tab-separated table: one column per step id plus `prob`, rows sorted
    /// by outcome labels, blanks as `-`.
    pub fn to_tsv(&self, s: &Scenario) -> String {
        let mut out = String::new();
        for step in &s.steps {
            write!(out, "{}\t", step.id).unwrap();
        }
        out.push_str("prob\n");
        let mut rows: Vec<(Vec<&str>, f64)> = self.entries.iter().map(|(t, p)| (t.labels(s), *p)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(Ordering::Equal));
        for (labels, p) in rows {
            for l in labels {
                write!(out, "{l}\t").unwrap();
            }
            writeln!(out, "{}", format_probability(p)).unwrap();
        }
        out
    }
}

/// Shortest decimal that reads back as the same `f64` (at most 17
/// significant digits).
pub fn format_probability(p: f64) -> String {
    format_decimal(p)
}

fn check(s: &Scenario) -> Result<(), EngineError> {
    let v = s.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(EngineError::InvalidScenario(v))
    }
}

/// `n_o`: number of equally weighted fillings of the blanks of `o`.
pub fn fill_count(s: &Scenario, o: &Partition) -> usize {
    s.steps
        .iter()
        .filter(|st| o.contains(&st.id))
        .map(|st| st.branches.len())
        .product()
}

/// All tuples with blanks exactly on `merged`, in enumeration order.
pub fn tuples_for(s: &Scenario, merged: &[bool]) -> Vec<OutcomeTuple> {
    let mut out = vec![OutcomeTuple(Vec::with_capacity(s.steps.len()))];
    for (step, &m) in s.steps.iter().zip(merged) {
        if m {
            for t in &mut out {
                t.0.push(None);
            }
        } else {
            out = out
                .into_iter()
                .flat_map(|t| {
                    (0..step.branches.len()).map(move |k| {
                        let mut u = t.clone();
                        u.0.push(Some(k));
                        u
                    })
                })
                .collect();
        }
    }
    out
}

/// All fully labeled tuples, in enumeration order.
pub fn full_tuples(s: &Scenario) -> Vec<OutcomeTuple> {
    tuples_for(s, &vec![false; s.steps.len()])
}

/// Index of a fully labeled tuple within [`full_tuples`].
pub fn full_index(s: &Scenario, t: &OutcomeTuple) -> Option<usize> {
    let mut idx = 0usize;
    for (o, step) in t.0.iter().zip(&s.steps) {
        idx = idx * step.branches.len() + (*o)?;
    }
    Some(idx)
}

/// Unnormalized final state of the chain, without validation.
pub(crate) fn chain_state(s: &Scenario, merged: &[bool], t: &OutcomeTuple) -> Result<StateVector, EngineError> {
    let mut v = s.initial.clone();
    for ((step, &m), o) in s.steps.iter().zip(merged).zip(&t.0) {
        let map = match (m, o) {
            (true, None) => &step.merged.as_ref().expect("merged steps are mergeable").map,
            (false, Some(k)) => &step.branches[*k].op.map,
            _ => unreachable!("tuple pattern checked by caller"),
        };
        v = apply(map, &v).map_err(|source| EngineError::Shape {
            step: step.id.clone(),
            source,
        })?;
    }
    Ok(v)
}

fn check_tuple(s: &Scenario, merged: &[bool], t: &OutcomeTuple) -> Result<(), EngineError> {
    if t.0.len() != s.steps.len() {
        return Err(EngineError::Tuple(format!("{} outcomes for {} steps", t.0.len(), s.steps.len())));
    }
    for ((step, &m), o) in s.steps.iter().zip(merged).zip(&t.0) {
        match (m, o) {
            (true, Some(_)) => {
                return Err(EngineError::Tuple(format!("step {} is merged but has an outcome", step.id)))
            }
            (false, None) => {
                return Err(EngineError::Tuple(format!("step {} is measured but blank", step.id)))
            }
            (false, Some(k)) if *k >= step.branches.len() => {
                return Err(EngineError::Tuple(format!("step {} has no outcome {k}", step.id)))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Probability of outcome tuple `t` under partition `o`.
pub fn chain_probability(s: &Scenario, o: &Partition, t: &OutcomeTuple) -> Result<f64, EngineError> {
    check(s)?;
    s.check_partition(o)?;
    let merged = s.merged_mask(o);
    check_tuple(s, &merged, t)?;
    Ok(chain_state(s, &merged, t)?.norm_sqr())
}

/// `P_o` over its full support, zeros included.
pub fn exact_distribution(s: &Scenario, o: &Partition) -> Result<OutcomeDistribution, EngineError> {
    exact_distribution_with(s, o, Execution::default())
}

pub fn exact_distribution_with(
    s: &Scenario,
    o: &Partition,
    exec: Execution,
) -> Result<OutcomeDistribution, EngineError> {
    check(s)?;
    s.check_partition(o)?;
    partition_distribution(s, o, exec)
}

fn partition_distribution(s: &Scenario, o: &Partition, exec: Execution) -> Result<OutcomeDistribution, EngineError> {
    let merged = s.merged_mask(o);
    let tuples = tuples_for(s, &merged);
    let probs = map_slice(exec, &tuples, |t| chain_state(s, &merged, t).map(|v| v.norm_sqr()));
    let entries = tuples
        .into_iter()
        .zip(probs)
        .map(|(t, p)| p.map(|p| (t, p)))
        .collect::<Result<_, _>>()?;
    Ok(OutcomeDistribution {
        source: DistributionSource::Partition(o.clone()),
        entries,
    })
}

/// Spreads `P_o` uniformly over the blank fillings onto the full support.
pub(crate) fn uniformized(s: &Scenario, o: &Partition, dist: &OutcomeDistribution) -> Vec<f64> {
    let merged = s.merged_mask(o);
    let n = fill_count(s, o) as f64;
    let full = full_tuples(s);
    let mut out = vec![0.0; full.len()];
    // visible(t) is a pure function of t, so index the partition support once
    let support: std::collections::HashMap<&OutcomeTuple, f64> =
        dist.entries.iter().map(|(t, p)| (t, *p)).collect();
    for (i, t) in full.iter().enumerate() {
        if let Some(p) = support.get(&t.visible(&merged)) {
            out[i] = p / n;
        }
    }
    out
}

/// Partition mixture over fully labeled tuples.
pub fn mixture_distribution(s: &Scenario, prior: &PartitionPrior) -> Result<OutcomeDistribution, EngineError> {
    check(s)?;
    prior.check_against(s)?;
    let full = full_tuples(s);
    let mut probs = vec![0.0; full.len()];
    for (o, w) in prior.iter() {
        let dist = partition_distribution(s, o, Execution::default())?;
        for (acc, p) in probs.iter_mut().zip(uniformized(s, o, &dist)) {
            *acc += w * p;
        }
    }
    Ok(OutcomeDistribution {
        source: DistributionSource::Mixture,
        entries: full.into_iter().zip(probs).collect(),
    })
}

/// Probability that a single round meets every halt target.
pub fn halt_probability(s: &Scenario, prior: &PartitionPrior) -> Result<f64, EngineError> {
    if s.halt.is_empty() {
        return Err(EngineError::NoHaltTarget);
    }
    let targets = halt_indices(s);
    let mix = mixture_distribution(s, prior)?;
    Ok(mix.marginal(|t| t.meets(&targets)))
}
