//! Independent reference implementations used as test oracles. Nothing here
//! goes through the library's linear algebra: states are plain `[f64; 4]`
//! arrays and every operator is written out by hand.

#![allow(dead_code)]

use std::collections::BTreeMap;

use obspart::engine::OutcomeTuple;
use obspart::scenario::{Partition, PartitionPrior};

pub const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Outcome per step; `None` is a blank.
pub type Tuple = Vec<Option<usize>>;

/// FRW state over `(coin, spin)`, index `coin * 2 + spin`, coin `(h, t)`,
/// spin `(down, up)`.
type V4 = [f64; 4];

fn frw_initial() -> V4 {
    // spin starts in `down`; step I only ever reads the coin
    [(1.0f64 / 3.0).sqrt(), 0.0, (2.0f64 / 3.0).sqrt(), 0.0]
}

/// Step I branches: `h` keeps the heads component, `t` keeps tails and
/// rotates the spin to `(down + up)/sqrt(2)`.
fn frw_step1(v: V4, k: Option<usize>) -> V4 {
    let heads = [v[0], 0.0, 0.0, 0.0];
    let tails = [0.0, 0.0, v[2] * R2, v[2] * R2];
    match k {
        Some(0) => heads,
        Some(1) => tails,
        None => [heads[0], 0.0, tails[2], tails[3]],
        _ => unreachable!(),
    }
}

fn frw_step2(v: V4, k: Option<usize>) -> V4 {
    match k {
        Some(0) => [v[0], 0.0, v[2], 0.0],
        Some(1) => [0.0, v[1], 0.0, v[3]],
        None => v,
        _ => unreachable!(),
    }
}

/// Step III: projector on the coin onto `okbar = (h - t)/sqrt(2)` (k = 0) or
/// `failbar = (h + t)/sqrt(2)` (k = 1).
fn frw_step3(v: V4, k: usize) -> V4 {
    let s = if k == 0 { -1.0 } else { 1.0 };
    let mut out = [0.0; 4];
    for spin in 0..2 {
        let c = 0.5 * (v[spin] + s * v[2 + spin]);
        out[spin] = c;
        out[2 + spin] = s * c;
    }
    out
}

/// Step IV: projector on the spin onto `ok = (down - up)/sqrt(2)` (k = 0) or
/// `fail = (down + up)/sqrt(2)` (k = 1).
fn frw_step4(v: V4, k: usize) -> V4 {
    let s = if k == 0 { -1.0 } else { 1.0 };
    let mut out = [0.0; 4];
    for coin in 0..2 {
        let c = 0.5 * (v[2 * coin] + s * v[2 * coin + 1]);
        out[2 * coin] = c;
        out[2 * coin + 1] = s * c;
    }
    out
}

fn norm_sqr(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Final unnormalized FRW state for one outcome sequence.
pub fn frw_final(t: &[Option<usize>]) -> V4 {
    let v = frw_step1(frw_initial(), t[0]);
    let v = frw_step2(v, t[1]);
    let v = frw_step3(v, t[2].unwrap());
    frw_step4(v, t[3].unwrap())
}

/// Nested-loop enumeration of one FRW partition.
pub fn frw_oracle(merged_1: bool, merged_2: bool) -> BTreeMap<Tuple, f64> {
    let opts = |m: bool| if m { vec![None] } else { vec![Some(0), Some(1)] };
    let mut out = BTreeMap::new();
    for x in opts(merged_1) {
        for y in opts(merged_2) {
            for z in 0..2 {
                for w in 0..2 {
                    let t = vec![x, y, Some(z), Some(w)];
                    out.insert(t.clone(), norm_sqr(&frw_final(&t)));
                }
            }
        }
    }
    out
}

/// Wigner's friend over spin `(up, down)`; W measures `s = (up + down)/sqrt(2)`
/// (k = 0) or `sperp` (k = 1).
pub fn wigner_oracle(merged: bool) -> BTreeMap<Tuple, f64> {
    let init = [R2, R2];
    let friend: Vec<Option<usize>> = if merged { vec![None] } else { vec![Some(0), Some(1)] };
    let mut out = BTreeMap::new();
    for f in friend {
        let v = match f {
            Some(0) => [init[0], 0.0],
            Some(1) => [0.0, init[1]],
            None => init,
            _ => unreachable!(),
        };
        for w in 0..2 {
            let s = if w == 0 { 1.0 } else { -1.0 };
            let amp = R2 * (v[0] + s * v[1]);
            out.insert(vec![f, Some(w)], amp * amp);
        }
    }
    out
}

/// Merged flags of an FRW partition.
pub fn frw_flags(p: &Partition) -> (bool, bool) {
    (p.contains("I"), p.contains("II"))
}

/// Mixture by the hand formula `sum_o p_o / n_o * P_o(visible(t))` over
/// full FRW tuples.
pub fn frw_mixture_oracle(prior: &PartitionPrior) -> BTreeMap<Tuple, f64> {
    let mut out = BTreeMap::new();
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                for w in 0..2 {
                    let mut p = 0.0;
                    for (part, weight) in prior.iter() {
                        let (m1, m2) = frw_flags(part);
                        let n = (if m1 { 2.0 } else { 1.0 }) * (if m2 { 2.0 } else { 1.0 });
                        let vis = vec![(!m1).then_some(x), (!m2).then_some(y), Some(z), Some(w)];
                        p += weight / n * frw_oracle(m1, m2)[&vis];
                    }
                    out.insert(vec![Some(x), Some(y), Some(z), Some(w)], p);
                }
            }
        }
    }
    out
}

pub fn tuple(t: &OutcomeTuple) -> Tuple {
    t.0.clone()
}

/// Uniform prior over the four FRW partitions.
pub fn frw_uniform() -> PartitionPrior {
    PartitionPrior::uniform(&[
        Partition::empty(),
        Partition::new(["I"]),
        Partition::new(["II"]),
        Partition::new(["I", "II"]),
    ])
}

pub fn both_merged() -> PartitionPrior {
    PartitionPrior::point_mass(Partition::new(["I", "II"]))
}

/// Three-sigma half width of a binomial frequency.
pub fn binomial_band(p: f64, n: u64, sigmas: f64) -> f64 {
    sigmas * (p * (1.0 - p) / n as f64).sqrt()
}

pub mod gen {
    //! Seeded generators for randomized scenarios and token streams.

    use obspart::linalg::{LinearMap, StateVector, C64};
    use obspart::scenario::{Branch, FactorSpace, MeasurementStep, Operator, Scenario};
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const VOCAB: [&str; 40] = [
        "scenario", "factor", "init", "step", "observer", "mergeable", "branch", "halt", "sqrt", "i", "p",
        "coin", "h", "t", "up", "down", "I", "II", "\"x\"", "\"unterminated", "{", "}", "|", ">", "<", ",",
        "=", ":", "*", "+", "-", "/", "(", ")", "0", "1", "0.5", "2/3", "1e308", "# note\n",
    ];

    pub struct Gen(ChaCha8Rng);

    impl Gen {
        pub fn new(seed: u64) -> Self {
            Gen(ChaCha8Rng::seed_from_u64(seed))
        }

        pub fn below(&mut self, n: usize) -> usize {
            (self.0.next_u64() % n as u64) as usize
        }

        pub fn unit(&mut self) -> f64 {
            (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
        }

        pub fn coin(&mut self) -> bool {
            self.0.next_u32() & 1 == 1
        }

        fn complex(&mut self) -> C64 {
            C64::new(2.0 * self.unit() - 1.0, 2.0 * self.unit() - 1.0)
        }

        /// Columns of a random unitary by Gram-Schmidt.
        pub fn unitary_columns(&mut self, d: usize) -> Vec<Vec<C64>> {
            loop {
                let mut basis: Vec<Vec<C64>> = Vec::new();
                for _ in 0..d {
                    let mut u: Vec<C64> = (0..d).map(|_| self.complex()).collect();
                    for b in &basis {
                        let proj: C64 = b.iter().zip(&u).map(|(x, y)| x.conj() * y).sum();
                        for (ui, bi) in u.iter_mut().zip(b) {
                            *ui -= proj * bi;
                        }
                    }
                    let n = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if n < 1e-3 {
                        break;
                    }
                    basis.push(u.into_iter().map(|z| z / n).collect());
                }
                if basis.len() == d {
                    return basis;
                }
            }
        }

        fn unitary(&mut self, d: usize) -> LinearMap {
            let cols = self.unitary_columns(d);
            let mut m = LinearMap::zeros(d, d);
            for (c, col) in cols.iter().enumerate() {
                for (r, z) in col.iter().enumerate() {
                    m.set(r, c, *z);
                }
            }
            m
        }

        /// Projectors onto groups of an orthonormal basis; they sum to the
        /// identity.
        fn projective_measurement(&mut self, d: usize) -> Vec<LinearMap> {
            let cols = self.unitary_columns(d);
            let groups = 2 + self.below(d.min(3) - 1);
            let mut ops = vec![LinearMap::zeros(d, d); groups];
            for (i, col) in cols.iter().enumerate() {
                // every group gets at least one vector
                let g = if i < groups { i } else { self.below(groups) };
                let sv = StateVector::new(col.clone());
                ops[g] = ops[g].add(&LinearMap::outer(&sv, &sv)).unwrap();
            }
            ops
        }

        fn observer_name(&mut self) -> String {
            const PIECES: [&str; 6] = ["F", "W\u{0304}", "lab \"A\"", "x\\y", "tab\there", "Obs"];
            PIECES[self.below(PIECES.len())].to_string()
        }

        /// A valid scenario without recorded sources: 1 or 2 factors, full
        /// active space from the start, 1 to 3 projective steps.
        pub fn scenario(&mut self, index: usize) -> Scenario {
            let nf = 1 + self.below(2);
            let factors: Vec<FactorSpace> = (0..nf)
                .map(|f| {
                    let n = 2 + self.below(2);
                    let labels: Vec<String> = (0..n).map(|j| format!("f{f}l{j}")).collect();
                    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                    FactorSpace::new(&format!("q{f}"), &refs)
                })
                .collect();
            let d: usize = factors.iter().map(FactorSpace::dim).product();
            let initial = StateVector::new(self.unitary_columns(d).swap_remove(0));
            let nsteps = 1 + self.below(3);
            let steps: Vec<MeasurementStep> = (0..nsteps)
                .map(|k| MeasurementStep {
                    id: format!("S{k}"),
                    observer: self.observer_name(),
                    branches: self
                        .projective_measurement(d)
                        .into_iter()
                        .enumerate()
                        .map(|(b, op)| Branch {
                            label: format!("o{b}"),
                            op: Operator::numeric(op),
                        })
                        .collect(),
                    merged: self.coin().then(|| Operator::numeric(self.unitary(d))),
                })
                .collect();
            // halt targets must sit on steps that always record an outcome
            let halt = if steps[nsteps - 1].merged.is_none() && self.coin() {
                vec![(steps[nsteps - 1].id.clone(), "o0".to_string())]
            } else {
                Vec::new()
            };
            Scenario {
                name: format!("random {index}"),
                factors,
                initial,
                initial_source: None,
                steps,
                halt,
            }
        }

        /// Random text: half the time a lightly mutated built-in scenario,
        /// otherwise DSL-like tokens, stray characters and whitespace.
        pub fn token_stream(&mut self) -> String {
            if self.coin() {
                self.mutated_builtin()
            } else {
                self.token_soup()
            }
        }

        fn mutated_builtin(&mut self) -> String {
            let base = if self.coin() { obspart::builtin::frw() } else { obspart::builtin::wigner() };
            let text = obspart::dsl::emit_scenario(&base);
            let mut lines: Vec<Vec<String>> = text
                .lines()
                .map(|l| l.split(' ').map(str::to_string).collect())
                .collect();
            for _ in 0..self.below(4) {
                let li = self.below(lines.len());
                if lines[li].is_empty() {
                    lines.remove(li);
                    if lines.is_empty() {
                        break;
                    }
                    continue;
                }
                let line = &mut lines[li];
                let ti = self.below(line.len());
                match self.below(4) {
                    0 => {
                        line.remove(ti);
                    }
                    1 => {
                        let t = line[ti].clone();
                        line.insert(ti, t);
                    }
                    2 => line[ti] = VOCAB[self.below(VOCAB.len())].to_string(),
                    _ => {
                        // whole lines come and go too
                        lines.remove(li);
                        if lines.is_empty() {
                            break;
                        }
                    }
                }
            }
            lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>().join("\n")
        }

        fn token_soup(&mut self) -> String {

            let n = self.below(40);
            let mut out = String::new();
            for _ in 0..n {
                match self.below(20) {
                    0 => out.push(char::from_u32(self.below(0x3000) as u32).unwrap_or('?')),
                    1 => out.push('\n'),
                    _ => out.push_str(VOCAB[self.below(VOCAB.len())]),
                }
                if self.below(3) > 0 {
                    out.push(' ');
                }
            }
            out
        }
    }

    /// Structural equality, maps and amplitudes within `tol`.
    pub fn same_scenario(a: &Scenario, b: &Scenario, tol: f64) -> Result<(), String> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
        check(a.name == b.name, "name")?;
        check(a.factors == b.factors, "factors")?;
        check(a.halt == b.halt, "halt")?;
        check(a.initial.dim() == b.initial.dim(), "initial dim")?;
        check(a.initial.max_abs_diff(&b.initial) <= tol, "initial amplitudes")?;
        check(a.steps.len() == b.steps.len(), "step count")?;
        for (x, y) in a.steps.iter().zip(&b.steps) {
            check(x.id == y.id && x.observer == y.observer, "step header")?;
            check(x.branches.len() == y.branches.len(), "branch count")?;
            for (p, q) in x.branches.iter().zip(&y.branches) {
                check(p.label == q.label, "branch label")?;
                check(
                    p.op.map.rows() == q.op.map.rows() && p.op.map.cols() == q.op.map.cols(),
                    "branch shape",
                )?;
                check(p.op.map.max_abs_diff(&q.op.map) <= tol, &format!("branch {} of {}", p.label, x.id))?;
            }
            match (&x.merged, &y.merged) {
                (None, None) => {}
                (Some(p), Some(q)) => check(
                    p.map.rows() == q.map.rows() && p.map.max_abs_diff(&q.map) <= tol,
                    &format!("merged map of {}", x.id),
                )?,
                _ => return Err(format!("mergeability of {}", x.id)),
            }
        }
        Ok(())
    }
}
