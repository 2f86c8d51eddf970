//! Domain model of an observer-partition experiment.
//!
//! A [`Scenario`] is an initial state plus an ordered list of measurement
//! steps. Each step carries one linear map per outcome ("branch") and, when
//! it is mergeable, an isometry used in place of a measurement whenever the
//! step belongs to a single merged observer.
//!
//! The active state space at any point is a prefix of the declared factors in
//! declaration order; steps may raise it (the coin-to-coin⊗spin branches of
//! the FRW protocol) by mapping between prefixes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{KetExpr, OpExpr, OpTerm};
use crate::linalg::{compose, LinearMap, StateVector, C64, MAX_DIM, STRUCTURAL_TOL};

/// Upper bound on the number of steps; the outcome support grows
/// exponentially in it.
pub const MAX_STEPS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSpace {
    pub name: String,
    pub labels: Vec<String>,
}

impl FactorSpace {
    pub fn new(name: &str, labels: &[&str]) -> Self {
        FactorSpace {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A dense map together with the expression it was built from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub map: LinearMap,
    pub source: Option<OpExpr>,
}

impl Operator {
    pub fn numeric(map: LinearMap) -> Self {
        Operator { map, source: None }
    }
}

impl From<LinearMap> for Operator {
    fn from(map: LinearMap) -> Self {
        Operator::numeric(map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub op: Operator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStep {
    pub id: String,
    pub observer: String,
    pub branches: Vec<Branch>,
    pub merged: Option<Operator>,
}

impl MeasurementStep {
    pub fn is_mergeable(&self) -> bool {
        self.merged.is_some()
    }

    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.label == label)
    }

    pub fn input_dim(&self) -> usize {
        self.branches.first().map_or(0, |b| b.op.map.cols())
    }

    pub fn output_dim(&self) -> usize {
        self.branches.first().map_or(0, |b| b.op.map.rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub factors: Vec<FactorSpace>,
    pub initial: StateVector,
    pub initial_source: Option<KetExpr>,
    pub steps: Vec<MeasurementStep>,
    /// Ordered `(step id, outcome label)` pairs that together stop the loop.
    pub halt: Vec<(String, String)>,
}

impl Scenario {
    pub fn step_index(&self, id: &str) -> Option<usize> {
        self.steps.iter().position(|s| s.id == id)
    }

    pub fn step(&self, id: &str) -> Option<&MeasurementStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    /// Dimension of the first `k` factors.
    pub fn prefix_dim(&self, k: usize) -> usize {
        prefix_dim(&self.factors, k)
    }

    /// Number of leading factors whose product equals `dim`.
    pub fn prefix_for_dim(&self, dim: usize) -> Option<usize> {
        (1..=self.factors.len()).find(|&k| self.prefix_dim(k) == dim)
    }

    /// Basis labels of the first `k` factors, comma-joined per basis vector.
    pub fn prefix_labels(&self, k: usize) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = vec![Vec::new()];
        for f in &self.factors[..k] {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    f.labels.iter().map(move |l| {
                        let mut v = prefix.clone();
                        v.push(l.clone());
                        v
                    })
                })
                .collect();
        }
        out
    }

    pub fn mergeable_ids(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter(|s| s.is_mergeable())
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Every subset of the mergeable steps, ordered by size then step order.
    pub fn all_partitions(&self) -> Vec<Partition> {
        let ids = self.mergeable_ids();
        let mut subsets: Vec<Vec<usize>> = (0u64..(1u64 << ids.len()))
            .map(|mask| (0..ids.len()).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        subsets.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
        subsets
            .into_iter()
            .map(|idx| Partition::new(idx.into_iter().map(|i| ids[i])))
            .collect()
    }

    /// Checks that `p` names only existing mergeable steps.
    pub fn check_partition(&self, p: &Partition) -> Result<(), PartitionError> {
        for id in &p.0 {
            match self.step(id) {
                None => return Err(PartitionError::UnknownStep(id.clone())),
                Some(s) if !s.is_mergeable() => {
                    return Err(PartitionError::NotMergeable(id.clone()))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Boolean mask over steps: `true` where the step is merged under `p`.
    pub fn merged_mask(&self, p: &Partition) -> Vec<bool> {
        self.steps.iter().map(|s| p.contains(&s.id)).collect()
    }

    /// Structural validation. Violations are data; an empty list means the
    /// scenario can be handed to the engine and sampler.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

pub(crate) fn prefix_dim(factors: &[FactorSpace], k: usize) -> usize {
    factors[..k]
        .iter()
        .map(FactorSpace::dim)
        .fold(1usize, |acc, d| acc.saturating_mul(d))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("unknown step id `{0}`")]
    UnknownStep(String),
    #[error("step `{0}` is not mergeable")]
    NotMergeable(String),
}

/// The set of steps performed by a single merged observer.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Partition(pub BTreeSet<String>);

impl Partition {
    pub fn empty() -> Self {
        Partition(BTreeSet::new())
    }

    pub fn new<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        Partition(ids.into_iter().map(str::to_string).collect())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Parses `none`, `{}`, an empty string, or a comma-separated id list.
    pub fn parse(text: &str) -> Partition {
        let t = text.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if t.is_empty() || t == "none" {
            return Partition::empty();
        }
        Partition::new(t.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().cloned().collect::<Vec<_>>().join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("negative weight {weight} on partition {partition}")]
    Negative { partition: Partition, weight: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("prior has no partitions")]
    Empty,
    #[error("partition {0} listed twice")]
    Duplicate(Partition),
}

/// Probability vector over partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPrior {
    weights: BTreeMap<Partition, f64>,
}

impl PartitionPrior {
    /// Accepts weights summing to one within the structural tolerance and
    /// rescales them so the sum is one to machine precision.
    pub fn new(entries: impl IntoIterator<Item = (Partition, f64)>) -> Result<Self, PriorError> {
        let mut weights = BTreeMap::new();
        for (p, w) in entries {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(PriorError::Negative {
                    partition: p,
                    weight: w,
                });
            }
            if weights.insert(p.clone(), w).is_some() {
                return Err(PriorError::Duplicate(p));
            }
        }
        if weights.is_empty() {
            return Err(PriorError::Empty);
        }
        let sum: f64 = weights.values().sum();
        if (sum - 1.0).abs() > STRUCTURAL_TOL {
            return Err(PriorError::NotNormalized { sum });
        }
        for w in weights.values_mut() {
            *w /= sum;
        }
        Ok(PartitionPrior { weights })
    }

    pub fn point_mass(p: Partition) -> Self {
        PartitionPrior {
            weights: BTreeMap::from([(p, 1.0)]),
        }
    }

    pub fn uniform(partitions: &[Partition]) -> Self {
        let w = 1.0 / partitions.len() as f64;
        PartitionPrior::new(partitions.iter().map(|p| (p.clone(), w)))
            .expect("uniform weights are normalized")
    }

    pub fn weight(&self, p: &Partition) -> f64 {
        self.weights.get(p).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Partition, f64)> {
        self.weights.iter().map(|(p, &w)| (p, w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &PartitionPrior, alpha: f64) -> PartitionPrior {
        let mut weights: BTreeMap<Partition, f64> = BTreeMap::new();
        for (p, w) in self.iter() {
            *weights.entry(p.clone()).or_default() += alpha * w;
        }
        for (p, w) in other.iter() {
            *weights.entry(p.clone()).or_default() += (1.0 - alpha) * w;
        }
        PartitionPrior { weights }
    }

    pub fn check_against(&self, s: &Scenario) -> Result<(), PartitionError> {
        self.weights.keys().try_for_each(|p| s.check_partition(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NoFactors,
    DuplicateFactor,
    TooFewLabels,
    DuplicateLabel,
    NonFinite,
    InitialDimension,
    InitialNorm,
    NoSteps,
    TooManySteps,
    DuplicateStep,
    TooFewBranches,
    DuplicateBranch,
    BranchShape,
    DimensionChain,
    Completeness,
    IsometryShape,
    Isometry,
    HaltTarget,
}

/// One failed invariant. `magnitude` is the size of the defect (a norm or a
/// dimension difference); `leakage`, where computed, is the probability lost
/// or gained on the state that actually reaches the step.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub kind: ViolationKind,
    pub magnitude: f64,
    pub leakage: Option<f64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {} (magnitude {:e}", self.subject, self.kind, self.detail, self.magnitude)?;
        if let Some(l) = self.leakage {
            write!(f, ", leakage {l:e}")?;
        }
        write!(f, ")")
    }
}

fn violation(subject: impl Into<String>, kind: ViolationKind, magnitude: f64, detail: impl Into<String>) -> Violation {
    Violation {
        subject: subject.into(),
        kind,
        magnitude,
        leakage: None,
        detail: detail.into(),
    }
}

/// `Tr(A ρ)` for square `A`, `ρ` of matching size.
fn trace_product(a: &LinearMap, rho: &LinearMap) -> C64 {
    let n = a.rows();
    let mut t = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            t += a.get(i, k) * rho.get(k, i);
        }
    }
    t
}

fn validate(s: &Scenario) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();

    if s.factors.is_empty() {
        out.push(violation("factors", NoFactors, 1.0, "no factor spaces declared"));
    }
    let mut names = HashSet::new();
    for f in &s.factors {
        let subject = format!("factor {}", f.name);
        if !names.insert(&f.name) {
            out.push(violation(&subject, DuplicateFactor, 1.0, "factor name declared twice"));
        }
        if f.labels.len() < 2 {
            out.push(violation(
                &subject,
                TooFewLabels,
                (2 - f.labels.len()) as f64,
                format!("{} basis labels, need at least 2", f.labels.len()),
            ));
        }
        let mut seen = HashSet::new();
        for l in &f.labels {
            if !seen.insert(l) {
                out.push(violation(&subject, DuplicateLabel, 1.0, format!("label `{l}` repeated")));
            }
        }
    }
    let total_dim = prefix_dim(&s.factors, s.factors.len());
    if total_dim > MAX_DIM {
        out.push(violation(
            "factors",
            InitialDimension,
            total_dim as f64,
            format!("joint dimension exceeds capacity {MAX_DIM}"),
        ));
    }

    if !s.initial.is_finite() {
        out.push(violation("initial", NonFinite, f64::INFINITY, "non-finite amplitude"));
    }
    if s.prefix_for_dim(s.initial.dim()).is_none() {
        out.push(violation(
            "initial",
            InitialDimension,
            s.initial.dim() as f64,
            "dimension is not a product of leading factor dimensions",
        ));
    }
    let norm = s.initial.norm_sqr().sqrt();
    if (norm - 1.0).abs() > STRUCTURAL_TOL {
        out.push(violation(
            "initial",
            InitialNorm,
            (norm - 1.0).abs(),
            format!("norm {norm}, expected 1"),
        ));
    }

    if s.steps.is_empty() {
        out.push(violation("steps", NoSteps, 1.0, "scenario has no measurement steps"));
    }
    if s.steps.len() > MAX_STEPS {
        out.push(violation(
            "steps",
            TooManySteps,
            (s.steps.len() - MAX_STEPS) as f64,
            format!("{} steps, at most {MAX_STEPS} supported", s.steps.len()),
        ));
    }

    // Reachable (unnormalized) density matrix entering each step, assuming
    // every earlier step collapses. Dropped once the chain breaks.
    let mut rho = Some(LinearMap::outer(&s.initial, &s.initial));
    let mut expected_cols = s.initial.dim();
    let mut ids = HashSet::new();

    for step in &s.steps {
        let subject = format!("step {}", step.id);
        if !ids.insert(&step.id) {
            out.push(violation(&subject, DuplicateStep, 1.0, "step id declared twice"));
        }
        if step.branches.len() < 2 {
            out.push(violation(
                &subject,
                TooFewBranches,
                (2 - step.branches.len()) as f64,
                format!("{} branches, need at least 2", step.branches.len()),
            ));
        }
        let mut labels = HashSet::new();
        for b in &step.branches {
            if !labels.insert(&b.label) {
                out.push(violation(&subject, DuplicateBranch, 1.0, format!("outcome `{}` repeated", b.label)));
            }
            if !b.op.map.is_finite() {
                out.push(violation(&subject, NonFinite, f64::INFINITY, format!("branch `{}` has non-finite entries", b.label)));
            }
        }
        let Some(first) = step.branches.first() else {
            rho = None;
            continue;
        };
        let (rows, cols) = (first.op.map.rows(), first.op.map.cols());
        let mut shapes_ok = true;
        for b in &step.branches[1..] {
            if (b.op.map.rows(), b.op.map.cols()) != (rows, cols) {
                shapes_ok = false;
                out.push(violation(
                    &subject,
                    BranchShape,
                    ((b.op.map.rows() * b.op.map.cols()) as f64 - (rows * cols) as f64).abs(),
                    format!(
                        "branch `{}` is {}x{}, branch `{}` is {}x{}",
                        b.label,
                        b.op.map.rows(),
                        b.op.map.cols(),
                        first.label,
                        rows,
                        cols
                    ),
                ));
            }
        }
        if cols != expected_cols {
            out.push(violation(
                &subject,
                DimensionChain,
                (cols as f64 - expected_cols as f64).abs(),
                format!("input dimension {cols}, previous stage has dimension {expected_cols}"),
            ));
            rho = None;
        }
        if s.prefix_for_dim(rows).is_none() {
            out.push(violation(
                &subject,
                DimensionChain,
                rows as f64,
                "output dimension is not a product of leading factor dimensions",
            ));
        }
        expected_cols = rows;
        if !shapes_ok {
            rho = None;
            continue;
        }

        // completeness: sum_k A_k^† A_k = I
        let identity = LinearMap::identity(cols);
        let mut gram = LinearMap::zeros(cols, cols);
        for b in &step.branches {
            let g = compose(&b.op.map.adjoint(), &b.op.map).expect("shapes checked");
            gram = gram.add(&g).expect("shapes checked");
        }
        let deviation = gram.sub(&identity).expect("square");
        let dev_norm = deviation.spectral_norm();
        if dev_norm > STRUCTURAL_TOL {
            let mut v = violation(
                &subject,
                Completeness,
                dev_norm,
                "sum of branch A^dag A differs from identity",
            );
            v.leakage = rho.as_ref().map(|r| leakage(&deviation, r));
            out.push(v);
        }

        if let Some(merged) = &step.merged {
            let m = &merged.map;
            if (m.rows(), m.cols()) != (rows, cols) {
                out.push(violation(
                    &subject,
                    IsometryShape,
                    ((m.rows() * m.cols()) as f64 - (rows * cols) as f64).abs(),
                    format!("merged map is {}x{}, branches are {rows}x{cols}", m.rows(), m.cols()),
                ));
            } else if !m.is_finite() {
                out.push(violation(&subject, NonFinite, f64::INFINITY, "merged map has non-finite entries"));
            } else {
                let g = compose(&m.adjoint(), m).expect("shapes checked");
                let deviation = g.sub(&identity).expect("square");
                let dev_norm = deviation.spectral_norm();
                if dev_norm > STRUCTURAL_TOL {
                    let mut v = violation(&subject, Isometry, dev_norm, "merged map is not an isometry");
                    v.leakage = rho.as_ref().map(|r| leakage(&deviation, r));
                    out.push(v);
                }
            }
        }

        rho = rho.map(|r| {
            let mut next = LinearMap::zeros(rows, rows);
            for b in &step.branches {
                let a = &b.op.map;
                let t = compose(&compose(a, &r).expect("shape"), &a.adjoint()).expect("shape");
                next = next.add(&t).expect("shape");
            }
            next
        });
    }

    for (id, label) in &s.halt {
        let subject = format!("halt {id}");
        match s.step(id) {
            None => out.push(violation(&subject, HaltTarget, 1.0, format!("unknown step `{id}`"))),
            Some(step) if step.is_mergeable() => out.push(violation(
                &subject,
                HaltTarget,
                1.0,
                "halt target on a mergeable step can be blank",
            )),
            Some(step) if step.branch_index(label).is_none() => out.push(violation(
                &subject,
                HaltTarget,
                1.0,
                format!("step `{id}` has no outcome `{label}`"),
            )),
            Some(_) => {}
        }
    }
    let mut halt_ids = HashSet::new();
    for (id, _) in &s.halt {
        if !halt_ids.insert(id) {
            out.push(violation(format!("halt {id}"), HaltTarget, 1.0, "step listed twice"));
        }
    }
    out
}

/// `|Tr(D ρ)| / Tr(ρ)`: probability defect on the reachable state.
fn leakage(deviation: &LinearMap, rho: &LinearMap) -> f64 {
    let tr: f64 = (0..rho.rows()).map(|i| rho.get(i, i).re).sum();
    if tr <= 0.0 {
        return 0.0;
    }
    trace_product(deviation, rho).norm() / tr
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("bra arity {found}, expected {expected}")]
    BraArity { found: usize, expected: usize },
    #[error("ket arity {found}, expected {expected}")]
    KetArity { found: usize, expected: usize },
    #[error("label `{label}` is not a basis label of factor `{factor}`")]
    UnknownLabel { label: String, factor: String },
    #[error("labels ({labels}) do not match active factors in declaration order")]
    NoFactorMatch { labels: String },
    #[error("labels ({labels}) match more than one set of active factors")]
    Ambiguous { labels: String },
    #[error("dimension {0} exceeds capacity")]
    Capacity(usize),
}

/// Which side of an outer product an expansion error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSide {
    Ket,
    Bra,
}

fn full_index(factors: &[FactorSpace], labels: &[String]) -> Result<usize, ExpandError> {
    let mut idx = 0;
    for (f, l) in factors.iter().zip(labels) {
        let i = f.index_of(l).ok_or_else(|| ExpandError::UnknownLabel {
            label: l.clone(),
            factor: f.name.clone(),
        })?;
        idx = idx * f.dim() + i;
    }
    Ok(idx)
}

/// Expands a ket expression on the leading factors it names. Returns the
/// vector and the number of factors it spans.
pub fn expand_ket(factors: &[FactorSpace], expr: &KetExpr) -> Result<(StateVector, usize), (usize, ExpandError)> {
    let arity = expr.0.first().map_or(0, |t| t.labels.len());
    let mut amps = None;
    for (i, term) in expr.0.iter().enumerate() {
        if term.labels.len() != arity {
            return Err((
                i,
                ExpandError::KetArity {
                    found: term.labels.len(),
                    expected: arity,
                },
            ));
        }
        if arity > factors.len() {
            return Err((
                i,
                ExpandError::KetArity {
                    found: arity,
                    expected: factors.len(),
                },
            ));
        }
        let dim = prefix_dim(factors, arity);
        if dim > MAX_DIM {
            return Err((i, ExpandError::Capacity(dim)));
        }
        let amps = amps.get_or_insert_with(|| vec![C64::new(0.0, 0.0); dim]);
        let idx = full_index(&factors[..arity], &term.labels).map_err(|e| (i, e))?;
        amps[idx] += term.coefficient();
    }
    let amps = amps.unwrap_or_default();
    let labels = joint_labels(&factors[..arity]);
    Ok((StateVector::new(amps).with_labels(labels), arity))
}

fn joint_labels(factors: &[FactorSpace]) -> Vec<String> {
    let mut out = vec![String::new()];
    for f in factors {
        out = out
            .iter()
            .flat_map(|p| {
                f.labels.iter().map(move |l| {
                    if p.is_empty() {
                        l.clone()
                    } else {
                        format!("{p},{l}")
                    }
                })
            })
            .collect();
    }
    out
}

/// Resolves which active factors a factor-local term acts on: the unique
/// increasing run of factor indices whose label sets contain the term's
/// labels position by position.
fn match_factors(factors: &[FactorSpace], active: usize, ket: &[String], bra: &[String]) -> Result<Vec<usize>, ExpandError> {
    fn search(
        factors: &[FactorSpace],
        active: usize,
        ket: &[String],
        bra: &[String],
        start: usize,
        chosen: &mut Vec<usize>,
        found: &mut Vec<Vec<usize>>,
    ) {
        let pos = chosen.len();
        if pos == ket.len() {
            found.push(chosen.clone());
            return;
        }
        for f in start..active {
            if found.len() > 1 {
                return;
            }
            if factors[f].index_of(&ket[pos]).is_some() && factors[f].index_of(&bra[pos]).is_some() {
                chosen.push(f);
                search(factors, active, ket, bra, f + 1, chosen, found);
                chosen.pop();
            }
        }
    }
    let mut found = Vec::new();
    search(factors, active, ket, bra, 0, &mut Vec::new(), &mut found);
    let labels = || ket.iter().chain(bra).cloned().collect::<Vec<_>>().join(",");
    match found.len() {
        0 => Err(ExpandError::NoFactorMatch { labels: labels() }),
        1 => Ok(found.pop().unwrap()),
        _ => Err(ExpandError::Ambiguous { labels: labels() }),
    }
}

/// Expands one outer-product term acting on the first `active` factors.
///
/// A term whose bra names every active factor maps the active prefix to the
/// prefix named by its ket (which may be longer, raising the dimension). A
/// term with fewer labels is factor-local: it acts on the matching subset of
/// active factors and as the identity on the rest.
pub fn expand_op_term(
    factors: &[FactorSpace],
    active: usize,
    term: &OpTerm,
) -> Result<(LinearMap, usize), (TermSide, ExpandError)> {
    let (k, b) = (term.ket.len(), term.bra.len());
    if b > active || b == 0 {
        return Err((TermSide::Bra, ExpandError::BraArity { found: b, expected: active }));
    }
    let coef = term.coefficient();
    let in_dim = prefix_dim(factors, active);
    if b == active {
        if k == 0 || k > factors.len() {
            return Err((
                TermSide::Ket,
                ExpandError::KetArity {
                    found: k,
                    expected: factors.len(),
                },
            ));
        }
        let out_dim = prefix_dim(factors, k);
        if out_dim > MAX_DIM || in_dim > MAX_DIM {
            return Err((TermSide::Ket, ExpandError::Capacity(out_dim.max(in_dim))));
        }
        let r = full_index(&factors[..k], &term.ket).map_err(|e| (TermSide::Ket, e))?;
        let c = full_index(&factors[..b], &term.bra).map_err(|e| (TermSide::Bra, e))?;
        let mut m = LinearMap::zeros(out_dim, in_dim);
        m.set(r, c, coef);
        return Ok((m, k));
    }
    if k != b {
        return Err((TermSide::Ket, ExpandError::KetArity { found: k, expected: b }));
    }
    let subset = match_factors(factors, active, &term.ket, &term.bra).map_err(|e| (TermSide::Ket, e))?;
    let dims: Vec<usize> = factors[..active].iter().map(FactorSpace::dim).collect();
    let ket_digits: Vec<usize> = subset
        .iter()
        .zip(&term.ket)
        .map(|(&f, l)| factors[f].index_of(l).expect("matched"))
        .collect();
    let bra_digits: Vec<usize> = subset
        .iter()
        .zip(&term.bra)
        .map(|(&f, l)| factors[f].index_of(l).expect("matched"))
        .collect();
    let mut m = LinearMap::zeros(in_dim, in_dim);
    let mut digits = vec![0usize; active];
    for r in 0..in_dim {
        // decode r into mixed-radix digits, left factor slowest
        let mut rem = r;
        for f in (0..active).rev() {
            digits[f] = rem % dims[f];
            rem /= dims[f];
        }
        if subset.iter().zip(&ket_digits).any(|(&f, &d)| digits[f] != d) {
            continue;
        }
        let mut col_digits = digits.clone();
        for (&f, &d) in subset.iter().zip(&bra_digits) {
            col_digits[f] = d;
        }
        let c = col_digits.iter().zip(&dims).fold(0, |acc, (&d, &n)| acc * n + d);
        m.set(r, c, m.get(r, c) + coef);
    }
    Ok((m, active))
}

/// Expands a full operator expression acting on the first `active` factors.
/// All terms must agree on the output prefix.
pub fn expand_op(
    factors: &[FactorSpace],
    active: usize,
    expr: &OpExpr,
) -> Result<(LinearMap, usize), (usize, TermSide, ExpandError)> {
    let mut acc: Option<(LinearMap, usize)> = None;
    for (i, term) in expr.0.iter().enumerate() {
        let (m, out) = expand_op_term(factors, active, term).map_err(|(side, e)| (i, side, e))?;
        acc = Some(match acc {
            None => (m, out),
            Some((total, prev)) => {
                if prev != out {
                    return Err((
                        i,
                        TermSide::Ket,
                        ExpandError::KetArity {
                            found: term.ket.len(),
                            expected: if term.bra.len() == active { prev } else { term.bra.len() },
                        },
                    ));
                }
                (total.add(&m).expect("same shape"), prev)
            }
        });
    }
    acc.ok_or((0, TermSide::Ket, ExpandError::KetArity { found: 0, expected: active }))
}
