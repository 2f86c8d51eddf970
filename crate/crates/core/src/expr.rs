//! Symbolic amplitude and ket/operator expressions.
//!
//! Scenarios keep the expression they were built from next to the dense
//! numeric form, so that canonical text emission can print `1/sqrt(3)`
//! instead of a truncated decimal.

use std::fmt;

use crate::linalg::C64;

/// Non-negative rational `num/den` appearing under a square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Self {
        Rational { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Amp {
    /// Non-negative decimal literal.
    Number(f64),
    Sqrt(Rational),
    InvSqrt(Rational),
    Mul(Box<Amp>, Box<Amp>),
    Neg(Box<Amp>),
    Imag(Box<Amp>),
}

impl Amp {
    pub fn sqrt(num: u64, den: u64) -> Amp {
        Amp::Sqrt(Rational::new(num, den))
    }

    pub fn inv_sqrt(num: u64, den: u64) -> Amp {
        Amp::InvSqrt(Rational::new(num, den))
    }

    /// Amplitude for an arbitrary complex number, as decimals.
    pub fn from_complex(z: C64) -> Option<Amp> {
        fn real(x: f64) -> Amp {
            if x.is_sign_negative() {
                Amp::Neg(Box::new(Amp::Number(-x)))
            } else {
                Amp::Number(x)
            }
        }
        match (z.re != 0.0, z.im != 0.0) {
            (false, false) => None,
            (true, false) => Some(real(z.re)),
            (false, true) => Some(Amp::Imag(Box::new(real(z.im)))),
            // two terms are needed; callers split complex entries
            (true, true) => None,
        }
    }

    pub fn value(&self) -> C64 {
        match self {
            Amp::Number(x) => C64::new(*x, 0.0),
            Amp::Sqrt(r) => C64::new(r.value().sqrt(), 0.0),
            Amp::InvSqrt(r) => C64::new(1.0 / r.value().sqrt(), 0.0),
            Amp::Mul(a, b) => a.value() * b.value(),
            Amp::Neg(a) => -a.value(),
            Amp::Imag(a) => C64::new(0.0, 1.0) * a.value(),
        }
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_decimal(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for Amp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Amp::Number(x) => write!(f, "{}", format_decimal(*x)),
            Amp::Sqrt(r) => write!(f, "sqrt({r})"),
            Amp::InvSqrt(r) => write!(f, "1/sqrt({r})"),
            Amp::Mul(a, b) => write!(f, "{a}*{b}"),
            Amp::Neg(a) => write!(f, "-{a}"),
            Amp::Imag(a) => write!(f, "i*{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `[amp *] |labels>`
#[derive(Debug, Clone, PartialEq)]
pub struct KetTerm {
    pub sign: Sign,
    pub amp: Option<Amp>,
    pub labels: Vec<String>,
}

/// `[amp *] |ket><bra|`
#[derive(Debug, Clone, PartialEq)]
pub struct OpTerm {
    pub sign: Sign,
    pub amp: Option<Amp>,
    pub ket: Vec<String>,
    pub bra: Vec<String>,
}

impl KetTerm {
    pub fn coefficient(&self) -> C64 {
        self.amp.as_ref().map_or(C64::new(1.0, 0.0), Amp::value) * self.sign.factor()
    }
}

impl OpTerm {
    pub fn new(amp: Option<Amp>, ket: &[&str], bra: &[&str]) -> Self {
        OpTerm {
            sign: Sign::Plus,
            amp,
            ket: ket.iter().map(|s| s.to_string()).collect(),
            bra: bra.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn negated(mut self) -> Self {
        self.sign = match self.sign {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        };
        self
    }

    pub fn coefficient(&self) -> C64 {
        self.amp.as_ref().map_or(C64::new(1.0, 0.0), Amp::value) * self.sign.factor()
    }
}

fn write_terms<T>(
    f: &mut fmt::Formatter<'_>,
    terms: &[T],
    parts: impl Fn(&T) -> (Sign, Option<&Amp>, String),
) -> fmt::Result {
    for (i, term) in terms.iter().enumerate() {
        let (sign, amp, body) = parts(term);
        match (i, sign) {
            (0, Sign::Plus) => {}
            (0, Sign::Minus) => write!(f, "-")?,
            (_, Sign::Plus) => write!(f, " + ")?,
            (_, Sign::Minus) => write!(f, " - ")?,
        }
        if let Some(a) = amp {
            write!(f, "{a}*")?;
        }
        write!(f, "{body}")?;
    }
    Ok(())
}

/// Sum of kets, e.g. `1/sqrt(3)*|h> + sqrt(2/3)*|t>`.
#[derive(Debug, Clone, PartialEq)]
pub struct KetExpr(pub Vec<KetTerm>);

/// Sum of outer products, e.g. `|h,down><h|`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpExpr(pub Vec<OpTerm>);

impl fmt::Display for KetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_terms(f, &self.0, |t| {
            (t.sign, t.amp.as_ref(), format!("|{}>", t.labels.join(",")))
        })
    }
}

impl fmt::Display for OpExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_terms(f, &self.0, |t| {
            (
                t.sign,
                t.amp.as_ref(),
                format!("|{}><{}|", t.ket.join(","), t.bra.join(",")),
            )
        })
    }
}
