use std::fmt::Write;

use crate::expr::{format_decimal, Amp, KetExpr, KetTerm, OpExpr, OpTerm, Sign};
use crate::linalg::{LinearMap, StateVector, C64};
use crate::scenario::{Operator, PartitionPrior, Scenario};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Splits a complex coefficient into real and imaginary decimal terms.
fn coefficient_parts(z: C64) -> Vec<(Sign, Amp)> {
    let mut parts = Vec::new();
    let sign = |x: f64| if x.is_sign_negative() { Sign::Minus } else { Sign::Plus };
    if z.re != 0.0 {
        parts.push((sign(z.re), Amp::Number(z.re.abs())));
    }
    if z.im != 0.0 {
        parts.push((sign(z.im), Amp::Imag(Box::new(Amp::Number(z.im.abs())))));
    }
    parts
}

fn numeric_ket(s: &Scenario, v: &StateVector) -> KetExpr {
    let k = s.prefix_for_dim(v.dim()).unwrap_or(0);
    let labels = s.prefix_labels(k);
    let mut terms = Vec::new();
    for (i, &z) in v.amps().iter().enumerate() {
        for (sign, amp) in coefficient_parts(z) {
            terms.push(KetTerm {
                sign,
                amp: Some(amp),
                labels: labels[i].clone(),
            });
        }
    }
    if terms.is_empty() {
        terms.push(KetTerm {
            sign: Sign::Plus,
            amp: Some(Amp::Number(0.0)),
            labels: labels.first().cloned().unwrap_or_default(),
        });
    }
    KetExpr(terms)
}

fn numeric_op(s: &Scenario, m: &LinearMap) -> OpExpr {
    let rows = s.prefix_labels(s.prefix_for_dim(m.rows()).unwrap_or(0));
    let cols = s.prefix_labels(s.prefix_for_dim(m.cols()).unwrap_or(0));
    let mut terms = Vec::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            for (sign, amp) in coefficient_parts(m.get(r, c)) {
                terms.push(OpTerm {
                    sign,
                    amp: Some(amp),
                    ket: rows[r].clone(),
                    bra: cols[c].clone(),
                });
            }
        }
    }
    if terms.is_empty() {
        terms.push(OpTerm {
            sign: Sign::Plus,
            amp: Some(Amp::Number(0.0)),
            ket: rows.first().cloned().unwrap_or_default(),
            bra: cols.first().cloned().unwrap_or_default(),
        });
    }
    OpExpr(terms)
}

fn op_text(s: &Scenario, op: &Operator) -> String {
    match &op.source {
        Some(expr) => expr.to_string(),
        None => numeric_op(s, &op.map).to_string(),
    }
}

/// Canonical text form. Operators and the initial state print from their
/// recorded expressions when present, otherwise as shortest round-trip
/// decimals over the full basis.
pub fn emit_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    writeln!(out, "scenario {}", quote(&s.name)).unwrap();
    for f in &s.factors {
        writeln!(out, "factor {} {{ {} }}", f.name, f.labels.join(", ")).unwrap();
    }
    let init = match &s.initial_source {
        Some(expr) => expr.to_string(),
        None => numeric_ket(s, &s.initial).to_string(),
    };
    writeln!(out, "init = {init}").unwrap();
    for step in &s.steps {
        write!(out, "step {} observer {}", step.id, quote(&step.observer)).unwrap();
        if let Some(m) = &step.merged {
            write!(out, " mergeable = {}", op_text(s, m)).unwrap();
        }
        writeln!(out, " {{").unwrap();
        for b in &step.branches {
            writeln!(out, "  branch {} : {}", b.label, op_text(s, &b.op)).unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    if !s.halt.is_empty() {
        let pairs: Vec<String> = s.halt.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        writeln!(out, "halt {{ {} }}", pairs.join(", ")).unwrap();
    }
    out
}

/// One `p{ids} = weight` line per partition.
pub fn emit_prior(prior: &PartitionPrior) -> String {
    let mut out = String::new();
    for (p, w) in prior.iter() {
        let ids: Vec<&str> = p.ids().collect();
        writeln!(out, "p{{{}}} = {}", ids.join(","), format_decimal(w)).unwrap();
    }
    out
}
