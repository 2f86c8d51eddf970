//! Estimating the partition prior from outcome counts.
//!
//! The model matrix has one row per fully labeled tuple and one column per
//! candidate partition; column `o` is `P_o` spread uniformly over its blank
//! fillings, so the observed distribution is `m * p`. Two estimators are
//! provided: EM on the mixture weights, and simplex-constrained least squares
//! as a cross-check.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::engine::{exact_distribution, full_index, full_tuples, uniformized, EngineError, OutcomeTuple};
use crate::sampler::RoundRecord;
use crate::scenario::{Partition, PartitionPrior, Scenario};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Least-squares stopping threshold on the change of the objective.
pub const LS_OBJECTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no partitions given")]
    NoPartitions,
    #[error("no observations")]
    NoData,
    #[error("round {0} has a blank outcome; fill blanks before inference")]
    Blank(u64),
    #[error("tuple {0} is observed but impossible under every partition")]
    Mismatch(String),
    #[error("{found} counts for {expected} tuples")]
    Shape { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    pub tuples: Vec<OutcomeTuple>,
    /// Display form of each row tuple.
    pub labels: Vec<String>,
    pub partitions: Vec<Partition>,
    /// Row-major, `tuples.len() x partitions.len()`.
    pub entries: Vec<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl ModelMatrix {
    pub fn build(s: &Scenario, partitions: &[Partition]) -> Result<ModelMatrix, InferenceError> {
        if partitions.is_empty() {
            return Err(InferenceError::NoPartitions);
        }
        let tuples = full_tuples(s);
        let columns = partitions
            .iter()
            .map(|o| Ok(uniformized(s, o, &exact_distribution(s, o)?)))
            .collect::<Result<Vec<Vec<f64>>, EngineError>>()?;
        let (rows, cols) = (tuples.len(), partitions.len());
        let entries: Vec<f64> = (0..rows * cols).map(|i| columns[i % cols][i / cols]).collect();
        let mut singular_values: Vec<f64> = DMatrix::from_row_slice(rows, cols, &entries)
            .singular_values()
            .iter()
            .copied()
            .collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let top = singular_values.first().copied().unwrap_or(0.0);
        let rank = singular_values.iter().filter(|&&x| x > RANK_TOL * top).count();
        Ok(ModelMatrix {
            labels: tuples.iter().map(|t| t.display(s)).collect(),
            tuples,
            partitions: partitions.to_vec(),
            entries,
            singular_values,
            rank,
        })
    }

    pub fn rows(&self) -> usize {
        self.tuples.len()
    }

    pub fn cols(&self) -> usize {
        self.partitions.len()
    }

    pub fn get(&self, t: usize, o: usize) -> f64 {
        self.entries[t * self.cols() + o]
    }

    pub fn column(&self, o: usize) -> Vec<f64> {
        (0..self.rows()).map(|t| self.get(t, o)).collect()
    }

    pub fn is_identifiable(&self) -> bool {
        self.rank == self.cols()
    }

    /// `m * p`.
    pub fn predict(&self, p: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|t| (0..self.cols()).map(|o| self.get(t, o) * p[o]).sum())
            .collect()
    }

    /// Tally of records per row. Records must be blank-free.
    pub fn counts(&self, s: &Scenario, records: &[RoundRecord]) -> Result<Vec<u64>, InferenceError> {
        let mut counts = vec![0u64; self.rows()];
        for r in records {
            let i = full_index(s, &r.outcomes).ok_or(InferenceError::Blank(r.round))?;
            counts[i] += 1;
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub partitions: Vec<Partition>,
    /// Estimated weight per column of the model matrix.
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub identifiable: bool,
    /// Log-likelihood of the starting point and after every iteration (EM
    /// only).
    pub trace: Vec<f64>,
}

impl EstimationResult {
    /// Weights as a prior; repeated partitions are summed.
    pub fn prior(&self) -> PartitionPrior {
        let mut merged: Vec<(Partition, f64)> = Vec::new();
        for (p, &w) in self.partitions.iter().zip(&self.weights) {
            match merged.iter_mut().find(|(q, _)| q == p) {
                Some(e) => e.1 += w,
                None => merged.push((p.clone(), w)),
            }
        }
        PartitionPrior::new(merged).expect("estimates lie on the simplex")
    }

    pub fn weight(&self, p: &Partition) -> f64 {
        self.partitions.iter().zip(&self.weights).filter(|(q, _)| *q == p).map(|(_, w)| w).sum()
    }

    /// L1 distance to `target` over the estimated partitions.
    pub fn l1_distance(&self, target: &PartitionPrior) -> f64 {
        let est = self.prior();
        let mut keys: Vec<&Partition> = est.iter().chain(target.iter()).map(|(p, _)| p).collect();
        keys.sort();
        keys.dedup();
        keys.iter().map(|p| (est.weight(p) - target.weight(p)).abs()).sum()
    }

    pub fn to_json(&self) -> String {
        let q = |x: &str| serde_json::to_string(x).expect("strings serialize");
        let num = |x: f64| serde_json::to_string(&x).expect("finite numbers serialize");
        let p = self.prior();
        let mut seen: Vec<&Partition> = Vec::new();
        let mut entries = Vec::new();
        for part in &self.partitions {
            if !seen.contains(&part) {
                seen.push(part);
                entries.push(format!("{}:{}", q(&part.to_string()), num(p.weight(part))));
            }
        }
        let ll = if self.log_likelihood.is_finite() {
            num(self.log_likelihood)
        } else {
            "null".to_string()
        };
        format!(
            "{{\"pHat\":{{{}}},\"logLikelihood\":{},\"iterations\":{},\"converged\":{},\"identifiable\":{}}}",
            entries.join(","),
            ll,
            self.iterations,
            self.converged,
            self.identifiable
        )
    }
}

fn check_counts(m: &ModelMatrix, counts: &[u64]) -> Result<f64, InferenceError> {
    if counts.len() != m.rows() {
        return Err(InferenceError::Shape {
            expected: m.rows(),
            found: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(InferenceError::NoData);
    }
    Ok(total as f64)
}

fn log_likelihood(m: &ModelMatrix, counts: &[u64], p: &[f64]) -> f64 {
    m.predict(p)
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(q, &c)| c as f64 * q.ln())
        .sum()
}

/// Mixture-weight EM from the uniform start. Stops when no weight moves by
/// more than `tol` in one iteration.
pub fn estimate_em(m: &ModelMatrix, counts: &[u64], tol: f64, max_iter: usize) -> Result<EstimationResult, InferenceError> {
    let k = m.cols();
    estimate_em_from(m, counts, &vec![1.0 / k as f64; k], tol, max_iter)
}

/// EM from an explicit starting point on the simplex.
pub fn estimate_em_from(
    m: &ModelMatrix,
    counts: &[u64],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EstimationResult, InferenceError> {
    check_counts(m, counts)?;
    let k = m.cols();
    if start.len() != k {
        return Err(InferenceError::Shape {
            expected: k,
            found: start.len(),
        });
    }
    for (t, &c) in counts.iter().enumerate() {
        if c > 0 && (0..k).all(|o| m.get(t, o) <= 0.0) {
            return Err(InferenceError::Mismatch(m.labels[t].clone()));
        }
    }
    let mut p = start.to_vec();
    let mut trace = vec![log_likelihood(m, counts, &p)];
    let mut converged = false;
    let mut iterations = 0;
    let mut next = vec![0.0; k];
    while iterations < max_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (t, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mix: f64 = (0..k).map(|o| p[o] * m.get(t, o)).sum();
            for o in 0..k {
                next[o] += c as f64 * p[o] * m.get(t, o) / mix;
            }
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= sum);
        let delta = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut p, &mut next);
        iterations += 1;
        trace.push(log_likelihood(m, counts, &p));
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(EstimationResult {
        partitions: m.partitions.clone(),
        log_likelihood: *trace.last().expect("trace starts non-empty"),
        weights: p,
        iterations,
        converged,
        identifiable: m.is_identifiable(),
        trace,
    })
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// Least squares `min |m p - f|` over the simplex by projected gradient
/// with step `1 / sigma_max^2`, from the uniform start.
pub fn estimate_ls(m: &ModelMatrix, counts: &[u64], max_iter: usize) -> Result<EstimationResult, InferenceError> {
    let total = check_counts(m, counts)?;
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let k = m.cols();
    let lipschitz = m.singular_values[0].powi(2);
    // the stopping rule watches the residual norm itself, not its square
    let objective = |p: &[f64]| -> f64 { m.predict(p).iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() };
    let mut p = vec![1.0 / k as f64; k];
    let mut obj = objective(&p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let residual: Vec<f64> = m.predict(&p).iter().zip(&f).map(|(a, b)| a - b).collect();
        let step: Vec<f64> = (0..k)
            .map(|o| p[o] - (0..m.rows()).map(|t| m.get(t, o) * residual[t]).sum::<f64>() / lipschitz)
            .collect();
        p = project_simplex(&step);
        iterations += 1;
        let next = objective(&p);
        let change = (obj - next).abs();
        obj = next;
        if change < LS_OBJECTIVE_TOL {
            converged = true;
            break;
        }
    }
    Ok(EstimationResult {
        partitions: m.partitions.clone(),
        log_likelihood: log_likelihood(m, counts, &p),
        weights: p,
        iterations,
        converged,
        identifiable: m.is_identifiable(),
        trace: Vec::new(),
    })
}
