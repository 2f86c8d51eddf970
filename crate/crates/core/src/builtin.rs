//! Built-in scenarios: Wigner's friend and the Frauchiger-Renner extension.
//!
//! Matrices are assembled directly from basis vectors; the recorded source
//! expressions exist for canonical text emission and are checked against the
//! matrices in tests.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::expr::{Amp, KetExpr, KetTerm, OpExpr, OpTerm, Sign};
use crate::linalg::{tensor, LinearMap, StateVector};
use crate::scenario::{Branch, FactorSpace, MeasurementStep, Operator, Scenario};

fn op(map: LinearMap, terms: Vec<OpTerm>) -> Operator {
    Operator {
        map,
        source: Some(OpExpr(terms)),
    }
}

fn half() -> Option<Amp> {
    Some(Amp::Number(0.5))
}

fn r2() -> Option<Amp> {
    Some(Amp::inv_sqrt(2, 1))
}

/// `0.5*(|a><a| ± |a><b| ± |b><a| + |b><b|)`, the projector onto
/// `(|a> ± |b>)/sqrt(2)`.
fn balanced_projector_terms(a: &str, b: &str, plus: bool) -> Vec<OpTerm> {
    let cross = |t: OpTerm| if plus { t } else { t.negated() };
    vec![
        OpTerm::new(half(), &[a], &[a]),
        cross(OpTerm::new(half(), &[a], &[b])),
        cross(OpTerm::new(half(), &[b], &[a])),
        OpTerm::new(half(), &[b], &[b]),
    ]
}

fn branch(label: &str, op: Operator) -> Branch {
    Branch {
        label: label.to_string(),
        op,
    }
}

fn ket_term(amp: Amp, label: &str) -> KetTerm {
    KetTerm {
        sign: Sign::Plus,
        amp: Some(amp),
        labels: vec![label.to_string()],
    }
}

/// The four-step FRW protocol. Coin basis `(h, t)`, spin basis `(down, up)`,
/// joint index `coin * 2 + spin`.
pub fn frw() -> Scenario {
    let factors = vec![FactorSpace::new("coin", &["h", "t"]), FactorSpace::new("spin", &["down", "up"])];

    let h = StateVector::basis(2, 0);
    let t = StateVector::basis(2, 1);
    let down = StateVector::basis(2, 0);
    let up = StateVector::basis(2, 1);
    let right = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let ok_bar = StateVector::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
    let fail_bar = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let ok = StateVector::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
    let fail = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let id2 = LinearMap::identity(2);

    let initial = StateVector::from_real(&[1.0 / 3f64.sqrt(), (2.0f64 / 3.0).sqrt()])
        .with_labels(vec!["h".into(), "t".into()]);
    let initial_source = KetExpr(vec![ket_term(Amp::inv_sqrt(3, 1), "h"), ket_term(Amp::sqrt(2, 3), "t")]);

    // step I: F-bar reads the coin and prepares the spin
    let a_h = LinearMap::outer(&tensor(&h, &down).unwrap(), &h);
    let a_t = LinearMap::outer(&tensor(&t, &right).unwrap(), &t);
    let u1 = a_h.add(&a_t).unwrap();
    let a_h_terms = vec![OpTerm::new(None, &["h", "down"], &["h"])];
    let a_t_terms = vec![
        OpTerm::new(r2(), &["t", "down"], &["t"]),
        OpTerm::new(r2(), &["t", "up"], &["t"]),
    ];
    let step1 = MeasurementStep {
        id: "I".into(),
        observer: "F\u{0304}".into(),
        branches: vec![branch("h", op(a_h, a_h_terms.clone())), branch("t", op(a_t, a_t_terms.clone()))],
        merged: Some(op(u1, [a_h_terms, a_t_terms].concat())),
    };

    // step II: F reads the spin
    let a_down = id2.tensor(&LinearMap::outer(&down, &down)).unwrap();
    let a_up = id2.tensor(&LinearMap::outer(&up, &up)).unwrap();
    let step2 = MeasurementStep {
        id: "II".into(),
        observer: "F".into(),
        branches: vec![
            branch("down", op(a_down, vec![OpTerm::new(None, &["down"], &["down"])])),
            branch("up", op(a_up, vec![OpTerm::new(None, &["up"], &["up"])])),
        ],
        merged: Some(op(
            LinearMap::identity(4),
            vec![OpTerm::new(None, &["down"], &["down"]), OpTerm::new(None, &["up"], &["up"])],
        )),
    };

    // step III: W-bar measures lab L-bar (the coin)
    let step3 = MeasurementStep {
        id: "III".into(),
        observer: "W\u{0304}".into(),
        branches: vec![
            branch(
                "okbar",
                op(
                    LinearMap::outer(&ok_bar, &ok_bar).tensor(&id2).unwrap(),
                    balanced_projector_terms("h", "t", false),
                ),
            ),
            branch(
                "failbar",
                op(
                    LinearMap::outer(&fail_bar, &fail_bar).tensor(&id2).unwrap(),
                    balanced_projector_terms("h", "t", true),
                ),
            ),
        ],
        merged: None,
    };

    // step IV: W measures lab L (the spin)
    let step4 = MeasurementStep {
        id: "IV".into(),
        observer: "W".into(),
        branches: vec![
            branch(
                "ok",
                op(
                    id2.tensor(&LinearMap::outer(&ok, &ok)).unwrap(),
                    balanced_projector_terms("down", "up", false),
                ),
            ),
            branch(
                "fail",
                op(
                    id2.tensor(&LinearMap::outer(&fail, &fail)).unwrap(),
                    balanced_projector_terms("down", "up", true),
                ),
            ),
        ],
        merged: None,
    };

    Scenario {
        name: "frw".into(),
        factors,
        initial,
        initial_source: Some(initial_source),
        steps: vec![step1, step2, step3, step4],
        halt: vec![("III".into(), "okbar".into()), ("IV".into(), "ok".into())],
    }
}

/// Wigner's friend: F measures a spin in `(up, down)` inside the lab, then W
/// measures the lab in the `{|s>, |s_perp>}` basis.
pub fn wigner() -> Scenario {
    let factors = vec![FactorSpace::new("spin", &["up", "down"])];
    let up = StateVector::basis(2, 0);
    let down = StateVector::basis(2, 1);
    let s = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let s_perp = StateVector::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);

    let initial = s.clone().with_labels(vec!["up".into(), "down".into()]);
    let initial_source = KetExpr(vec![ket_term(Amp::inv_sqrt(2, 1), "up"), ket_term(Amp::inv_sqrt(2, 1), "down")]);

    let measure = MeasurementStep {
        id: "M".into(),
        observer: "F".into(),
        branches: vec![
            branch("up", op(LinearMap::outer(&up, &up), vec![OpTerm::new(None, &["up"], &["up"])])),
            branch("down", op(LinearMap::outer(&down, &down), vec![OpTerm::new(None, &["down"], &["down"])])),
        ],
        merged: Some(op(
            LinearMap::identity(2),
            vec![OpTerm::new(None, &["up"], &["up"]), OpTerm::new(None, &["down"], &["down"])],
        )),
    };
    let wigner = MeasurementStep {
        id: "W".into(),
        observer: "W".into(),
        branches: vec![
            branch("s", op(LinearMap::outer(&s, &s), balanced_projector_terms("up", "down", true))),
            branch(
                "sperp",
                op(LinearMap::outer(&s_perp, &s_perp), balanced_projector_terms("up", "down", false)),
            ),
        ],
        merged: None,
    };

    Scenario {
        name: "wigner".into(),
        factors,
        initial,
        initial_source: Some(initial_source),
        steps: vec![measure, wigner],
        halt: Vec::new(),
    }
}

/// Looks up a built-in by CLI name.
pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "frw" => Some(frw()),
        "wigner" => Some(wigner()),
        _ => None,
    }
}
