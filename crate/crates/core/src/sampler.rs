//! Seeded Monte Carlo rounds.
//!
//! Each round redraws its partition from the prior and walks the steps:
//! merged steps apply their isometry, measured steps draw a branch with the
//! Born weight `|A_k v|^2 / |v|^2` and continue from the renormalized branch
//! state.
//!
//! # Random streams
//!
//! Every round owns a ChaCha20 stream. The 256-bit key is the little-endian
//! seed in bytes 0..8, a domain tag in bytes 8..16 (0 for sampling, 1 for
//! blank filling) and zeros elsewhere; the 64-bit stream id is
//! `stream_offset + round`. A uniform draw is `(next_u64 >> 11) * 2^-53`.
//! Rounds are therefore independent of how they are scheduled.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use thiserror::Error;

use crate::engine::{halt_indices, EngineError, OutcomeTuple};
use crate::exec::{map_indices, map_slice, Execution};
use crate::linalg::{apply, StateVector, C64};
use crate::scenario::{Partition, PartitionPrior, Scenario};

/// Squared norm below which a state cannot be renormalized.
const DEGENERATE_NORM_SQR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("round {round}: state norm vanished before step {step}")]
    Degenerate { round: u64, step: String },
    #[error("scenario has no halting condition")]
    NoHaltTarget,
    #[error("stream index overflow")]
    StreamOverflow,
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Domain {
    Sample = 0,
    Fill = 1,
}

/// Seed plus the stream index of round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededGenerator {
    pub seed: u64,
    pub stream_offset: u64,
}

impl SeededGenerator {
    pub const ALGORITHM: &'static str = "chacha20";

    pub fn new(seed: u64) -> Self {
        SeededGenerator { seed, stream_offset: 0 }
    }

    pub fn with_offset(self, stream_offset: u64) -> Self {
        SeededGenerator { stream_offset, ..self }
    }

    fn stream(&self, domain: Domain, round: u64) -> Stream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.stream_offset.wrapping_add(round));
        Stream(rng)
    }
}

struct Stream(ChaCha20Rng);

impl Stream {
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index in `0..n`, `floor(u * n)`.
    fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Draws an index with probability proportional to `weights`.
    fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let threshold = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if acc > threshold {
                    return i;
                }
            }
        }
        last_positive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    /// Present only when ground-truth recording is on.
    pub partition: Option<Partition>,
    pub outcomes: OutcomeTuple,
    pub halted: bool,
}

impl RoundRecord {
    /// One JSON object, keys in the order round, outcomes, halted, partition.
    pub fn to_json(&self, s: &Scenario) -> String {
        let q = |x: &str| serde_json::to_string(x).expect("strings serialize");
        let outcomes: Vec<String> = s
            .steps
            .iter()
            .zip(self.outcomes.labels(s))
            .map(|(step, l)| format!("{}:{}", q(&step.id), q(l)))
            .collect();
        let mut out = format!(
            "{{\"round\":{},\"outcomes\":{{{}}},\"halted\":{}",
            self.round,
            outcomes.join(","),
            self.halted
        );
        if let Some(p) = &self.partition {
            // step order, not id order
            let ids: Vec<String> = s.steps.iter().filter(|st| p.contains(&st.id)).map(|st| q(&st.id)).collect();
            out.push_str(&format!(",\"partition\":[{}]", ids.join(",")));
        }
        out.push('}');
        out
    }

    /// Reads one JSON-lines record against scenario `s`.
    pub fn from_json(s: &Scenario, text: &str) -> Result<RoundRecord, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let round = v
            .get("round")
            .and_then(Value::as_u64)
            .ok_or("missing or invalid `round`")?;
        let outcomes = v
            .get("outcomes")
            .and_then(Value::as_object)
            .ok_or("missing or invalid `outcomes`")?;
        if outcomes.len() != s.steps.len() {
            return Err(format!("{} outcomes for {} steps", outcomes.len(), s.steps.len()));
        }
        let labels = s
            .steps
            .iter()
            .map(|step| {
                outcomes
                    .get(&step.id)
                    .and_then(Value::as_str)
                    .ok_or_else(|| format!("missing outcome for step {}", step.id))
            })
            .collect::<Result<Vec<&str>, String>>()?;
        let outcomes = OutcomeTuple::from_labels(s, &labels).map_err(|e| e.to_string())?;
        let halted = v
            .get("halted")
            .and_then(Value::as_bool)
            .ok_or("missing or invalid `halted`")?;
        let partition = match v.get("partition") {
            None | Some(Value::Null) => None,
            Some(Value::Array(ids)) => Some(Partition::new(
                ids.iter()
                    .map(|x| x.as_str().ok_or("partition ids must be strings"))
                    .collect::<Result<Vec<_>, _>>()?,
            )),
            Some(_) => return Err("invalid `partition`".into()),
        };
        Ok(RoundRecord {
            round,
            partition,
            outcomes,
            halted,
        })
    }
}

/// Serializes records as JSON lines.
pub fn to_jsonl(s: &Scenario, records: &[RoundRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json(s));
        out.push('\n');
    }
    out
}

/// Parses JSON lines; blank lines are skipped.
pub fn parse_jsonl(s: &Scenario, text: &str) -> Result<Vec<RoundRecord>, SampleError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RoundRecord::from_json(s, l).map_err(|message| SampleError::Record { line: i + 1, message }))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleOptions {
    pub record_partition: bool,
    pub execution: Option<Execution>,
}

/// Scenario and prior prepared for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    scenario: &'a Scenario,
    partitions: Vec<Partition>,
    weights: Vec<f64>,
    masks: Vec<Vec<bool>>,
    targets: Vec<(usize, usize)>,
    record_partition: bool,
}

impl<'a> Sampler<'a> {
    pub fn new(s: &'a Scenario, prior: &PartitionPrior) -> Result<Self, SampleError> {
        let v = s.validate();
        if !v.is_empty() {
            return Err(EngineError::InvalidScenario(v).into());
        }
        prior.check_against(s).map_err(EngineError::from)?;
        let (partitions, weights): (Vec<Partition>, Vec<f64>) = prior.iter().map(|(p, w)| (p.clone(), w)).unzip();
        let masks = partitions.iter().map(|p| s.merged_mask(p)).collect();
        Ok(Sampler {
            scenario: s,
            partitions,
            weights,
            masks,
            targets: halt_indices(s),
            record_partition: false,
        })
    }

    pub fn record_partition(mut self, on: bool) -> Self {
        self.record_partition = on;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    /// One round using stream `g.stream_offset + round`.
    pub fn sample_round(&self, g: &SeededGenerator, round: u64) -> Result<RoundRecord, SampleError> {
        let s = self.scenario;
        let mut rng = g.stream(Domain::Sample, round);
        let component = rng.weighted(&self.weights);
        let mask = &self.masks[component];

        let mut v: StateVector = s.initial.clone();
        let mut outcomes = Vec::with_capacity(s.steps.len());
        let mut probs = Vec::new();
        for (step, &merged) in s.steps.iter().zip(mask) {
            if merged {
                let u = &step.merged.as_ref().expect("validated").map;
                v = apply(u, &v).map_err(|source| EngineError::Shape {
                    step: step.id.clone(),
                    source,
                })?;
                outcomes.push(None);
                continue;
            }
            if v.norm_sqr() < DEGENERATE_NORM_SQR {
                return Err(SampleError::Degenerate {
                    round,
                    step: step.id.clone(),
                });
            }
            let branches: Vec<StateVector> = step
                .branches
                .iter()
                .map(|b| apply(&b.op.map, &v))
                .collect::<Result<_, _>>()
                .map_err(|source| EngineError::Shape {
                    step: step.id.clone(),
                    source,
                })?;
            probs.clear();
            probs.extend(branches.iter().map(StateVector::norm_sqr));
            let k = rng.weighted(&probs);
            if probs[k] < DEGENERATE_NORM_SQR {
                return Err(SampleError::Degenerate {
                    round,
                    step: step.id.clone(),
                });
            }
            v = branches[k].scale(C64::new(1.0 / probs[k].sqrt(), 0.0));
            outcomes.push(Some(k));
        }
        let outcomes = OutcomeTuple(outcomes);
        Ok(RoundRecord {
            round,
            partition: self.record_partition.then(|| self.partitions[component].clone()),
            halted: outcomes.meets(&self.targets),
            outcomes,
        })
    }

    /// Rounds `0..n`; output is identical for every execution strategy.
    pub fn sample_many(&self, g: &SeededGenerator, n: u64, exec: Execution) -> Result<Vec<RoundRecord>, SampleError> {
        map_indices(exec, n, |r| self.sample_round(g, r)).into_iter().collect()
    }

    /// Samples rounds until one halts. `rounds` is the 1-based index of the
    /// halting round, `None` when `max_rounds` were exhausted.
    pub fn run_until_halt(&self, g: &SeededGenerator, max_rounds: u64) -> Result<HaltRun, SampleError> {
        if self.targets.is_empty() {
            return Err(SampleError::NoHaltTarget);
        }
        let mut records = Vec::new();
        for r in 0..max_rounds {
            let rec = self.sample_round(g, r)?;
            let halted = rec.halted;
            records.push(rec);
            if halted {
                return Ok(HaltRun {
                    rounds: Some(r + 1),
                    records,
                });
            }
        }
        Ok(HaltRun { rounds: None, records })
    }

    /// Independent halting trials; trial `j` starts at stream
    /// `g.stream_offset + j * max_rounds`.
    pub fn halt_trials(
        &self,
        g: &SeededGenerator,
        max_rounds: u64,
        trials: u64,
        exec: Execution,
    ) -> Result<Vec<Option<u64>>, SampleError> {
        if self.targets.is_empty() {
            return Err(SampleError::NoHaltTarget);
        }
        trials
            .checked_mul(max_rounds)
            .and_then(|span| g.stream_offset.checked_add(span))
            .ok_or(SampleError::StreamOverflow)?;
        map_indices(exec, trials, |j| {
            let gj = g.with_offset(g.stream_offset + j * max_rounds);
            self.run_until_halt(&gj, max_rounds).map(|run| run.rounds)
        })
        .into_iter()
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaltRun {
    pub rounds: Option<u64>,
    pub records: Vec<RoundRecord>,
}

pub fn sample_round(
    s: &Scenario,
    prior: &PartitionPrior,
    g: &SeededGenerator,
    round: u64,
) -> Result<RoundRecord, SampleError> {
    Sampler::new(s, prior)?.sample_round(g, round)
}

pub fn sample_many(
    s: &Scenario,
    prior: &PartitionPrior,
    g: &SeededGenerator,
    n: u64,
    opts: SampleOptions,
) -> Result<Vec<RoundRecord>, SampleError> {
    Sampler::new(s, prior)?
        .record_partition(opts.record_partition)
        .sample_many(g, n, opts.execution.unwrap_or_default())
}

pub fn run_until_halt(
    s: &Scenario,
    prior: &PartitionPrior,
    g: &SeededGenerator,
    max_rounds: u64,
) -> Result<HaltRun, SampleError> {
    Sampler::new(s, prior)?.run_until_halt(g, max_rounds)
}

/// Replaces each blank with an outcome drawn uniformly over the step's
/// branches, from the fill stream of the record's round.
pub fn uniformize_blanks(s: &Scenario, records: &[RoundRecord], g: &SeededGenerator) -> Vec<RoundRecord> {
    uniformize_blanks_with(s, records, g, Execution::default())
}

pub fn uniformize_blanks_with(
    s: &Scenario,
    records: &[RoundRecord],
    g: &SeededGenerator,
    exec: Execution,
) -> Vec<RoundRecord> {
    map_slice(exec, records, |r| {
        if !r.outcomes.has_blank() {
            return r.clone();
        }
        let mut rng = g.stream(Domain::Fill, r.round);
        let outcomes = r
            .outcomes
            .0
            .iter()
            .zip(&s.steps)
            .map(|(o, step)| o.or_else(|| Some(rng.below(step.branches.len()))))
            .collect();
        RoundRecord {
            outcomes: OutcomeTuple(outcomes),
            ..r.clone()
        }
    })
}

/// True when any record still carries a blank outcome.
pub fn has_blanks(records: &[RoundRecord]) -> bool {
    records.iter().any(|r| r.outcomes.has_blank())
}
