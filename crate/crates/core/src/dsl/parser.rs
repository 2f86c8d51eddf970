use crate::expr::{Amp, KetExpr, KetTerm, OpExpr, OpTerm, Rational, Sign};
use crate::linalg::{LinearMap, StateVector};
use crate::scenario::{
    expand_ket, expand_op, Branch, ExpandError, FactorSpace, MeasurementStep, Operator, Scenario, TermSide,
};

use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, SourcePosition};

/// Parses scenario text. Structural problems that the grammar cannot see
/// (completeness, normalization, ...) are left to [`Scenario::validate`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let tokens = tokenize(text)?;
    Parser { tokens, at: 0 }.scenario()
}

/// Positions of the pieces of one parsed term.
#[derive(Debug, Clone, Copy)]
struct TermSpan {
    ket: SourcePosition,
    bra: SourcePosition,
}

pub(super) struct Parser {
    pub(super) tokens: Vec<Token>,
    pub(super) at: usize,
}

fn expand_message(e: &ExpandError) -> (String, String) {
    match e {
        ExpandError::BraArity { found, expected } => (expected.to_string(), format!("bra arity {found}")),
        ExpandError::KetArity { found, expected } => (expected.to_string(), format!("ket arity {found}")),
        ExpandError::UnknownLabel { label, factor } => {
            (format!("a basis label of factor `{factor}`"), format!("label `{label}`"))
        }
        ExpandError::NoFactorMatch { labels } => (
            "labels of active factors in declaration order".to_string(),
            format!("labels ({labels})"),
        ),
        ExpandError::Ambiguous { labels } => (
            "labels that identify a unique set of factors".to_string(),
            format!("ambiguous labels ({labels})"),
        ),
        ExpandError::Capacity(d) => (
            format!("dimension at most {}", crate::linalg::MAX_DIM),
            format!("dimension {d}"),
        ),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    pub(super) fn pos(&self) -> SourcePosition {
        self.tokens[self.at].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    pub(super) fn error(&self, expected: impl Into<String>) -> ParseError {
        ParseError::new(self.pos(), expected, format!("unexpected {}", self.peek().describe()))
    }

    pub(super) fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub(super) fn expect_punct(&mut self, c: char) -> Result<SourcePosition, ParseError> {
        if self.is_punct(c) {
            Ok(self.advance().pos)
        } else {
            Err(self.error(format!("`{c}`")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    pub(super) fn ident(&mut self, what: &str) -> Result<(String, SourcePosition), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.advance().pos)),
            _ => Err(self.error(what)),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    pub(super) fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek().clone() {
            Tok::Number(s) => {
                let pos = self.pos();
                let v: f64 = s
                    .parse()
                    .map_err(|_| ParseError::new(pos, "a finite number", format!("`{s}`")))?;
                if !v.is_finite() {
                    return Err(ParseError::new(pos, "a finite number", format!("`{s}`")));
                }
                self.advance();
                Ok(v)
            }
            _ => Err(self.error("a number")),
        }
    }

    fn integer(&mut self) -> Result<u64, ParseError> {
        match self.peek().clone() {
            Tok::Number(s) if s.bytes().all(|b| b.is_ascii_digit()) => {
                let pos = self.pos();
                let v = s
                    .parse()
                    .map_err(|_| ParseError::new(pos, "an integer that fits in 64 bits", format!("`{s}`")))?;
                self.advance();
                Ok(v)
            }
            _ => Err(self.error("an integer")),
        }
    }

    fn rational(&mut self) -> Result<Rational, ParseError> {
        let num = self.integer()?;
        let den = if self.is_punct('/') {
            self.advance();
            let pos = self.pos();
            let d = self.integer()?;
            if d == 0 {
                return Err(ParseError::new(pos, "a nonzero denominator", "`0`"));
            }
            d
        } else {
            1
        };
        Ok(Rational::new(num, den))
    }

    fn amp_primary(&mut self) -> Result<Amp, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "sqrt" => {
                self.advance();
                self.expect_punct('(')?;
                let r = self.rational()?;
                self.expect_punct(')')?;
                Ok(Amp::Sqrt(r))
            }
            Tok::Number(s)
                if s == "1"
                    && *self.peek_at(1) == Tok::Punct('/')
                    && matches!(self.peek_at(2), Tok::Ident(k) if k == "sqrt") =>
            {
                self.advance();
                self.advance();
                self.advance();
                self.expect_punct('(')?;
                let pos = self.pos();
                let r = self.rational()?;
                if r.num == 0 {
                    return Err(ParseError::new(pos, "a nonzero rational", "`0`"));
                }
                self.expect_punct(')')?;
                Ok(Amp::InvSqrt(r))
            }
            Tok::Number(_) => Ok(Amp::Number(self.number()?)),
            _ => Err(self.error("an amplitude")),
        }
    }

    fn amp_unary(&mut self) -> Result<Amp, ParseError> {
        if self.is_punct('-') {
            self.advance();
            return Ok(Amp::Neg(Box::new(self.amp_unary()?)));
        }
        if self.is_keyword("i") {
            self.advance();
            self.expect_punct('*')?;
            return Ok(Amp::Imag(Box::new(self.amp_unary()?)));
        }
        self.amp_primary()
    }

    /// `amp "*"` in front of a ket, or nothing.
    fn term_amp(&mut self) -> Result<Option<Amp>, ParseError> {
        if self.is_punct('|') {
            return Ok(None);
        }
        let mut amp = self.amp_unary()?;
        while self.is_punct('*') && *self.peek_at(1) != Tok::Punct('|') {
            self.advance();
            amp = Amp::Mul(Box::new(amp), Box::new(self.amp_unary()?));
        }
        self.expect_punct('*')?;
        Ok(Some(amp))
    }

    fn label_list(&mut self, close: char) -> Result<Vec<String>, ParseError> {
        let mut labels = vec![self.ident("a basis label")?.0];
        while self.is_punct(',') {
            self.advance();
            labels.push(self.ident("a basis label")?.0);
        }
        if !self.is_punct(close) {
            return Err(self.error(format!("`,` or `{close}`")));
        }
        self.advance();
        Ok(labels)
    }

    fn ket(&mut self) -> Result<(Vec<String>, SourcePosition), ParseError> {
        let pos = self.expect_punct('|')?;
        Ok((self.label_list('>')?, pos))
    }

    fn leading_sign(&mut self) -> Sign {
        if self.is_punct('-') {
            self.advance();
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    fn next_sign(&mut self) -> Option<Sign> {
        let s = match self.peek() {
            Tok::Punct('+') => Sign::Plus,
            Tok::Punct('-') => Sign::Minus,
            _ => return None,
        };
        self.advance();
        Some(s)
    }

    fn ket_expr(&mut self) -> Result<(KetExpr, Vec<SourcePosition>), ParseError> {
        let mut terms = Vec::new();
        let mut spans = Vec::new();
        let mut sign = self.leading_sign();
        loop {
            let amp = self.term_amp()?;
            let (labels, pos) = self.ket()?;
            terms.push(KetTerm { sign, amp, labels });
            spans.push(pos);
            match self.next_sign() {
                Some(s) => sign = s,
                None => break,
            }
        }
        Ok((KetExpr(terms), spans))
    }

    fn op_expr(&mut self) -> Result<(OpExpr, Vec<TermSpan>), ParseError> {
        let mut terms = Vec::new();
        let mut spans = Vec::new();
        let mut sign = self.leading_sign();
        loop {
            let amp = self.term_amp()?;
            let (ket, ket_pos) = self.ket()?;
            let bra_pos = self.expect_punct('<')?;
            let bra = self.label_list('|')?;
            terms.push(OpTerm { sign, amp, ket, bra });
            spans.push(TermSpan { ket: ket_pos, bra: bra_pos });
            match self.next_sign() {
                Some(s) => sign = s,
                None => break,
            }
        }
        Ok((OpExpr(terms), spans))
    }

    /// Expands an operator against the active prefix, pinning errors to the
    /// offending term.
    fn expand(
        &self,
        factors: &[FactorSpace],
        active: usize,
        expr: &OpExpr,
        spans: &[TermSpan],
    ) -> Result<(LinearMap, usize), ParseError> {
        expand_op(factors, active, expr).map_err(|(i, side, e)| {
            let pos = match side {
                TermSide::Ket => spans[i].ket,
                TermSide::Bra => spans[i].bra,
            };
            let (expected, found) = expand_message(&e);
            ParseError::new(pos, expected, found)
        })
    }

    fn scenario(&mut self) -> Result<Scenario, ParseError> {
        self.expect_keyword("scenario")?;
        let name = self.string("a scenario name string")?;
        let mut factors: Vec<FactorSpace> = Vec::new();
        let mut initial: Option<(StateVector, KetExpr)> = None;
        let mut active = 0usize;
        let mut steps = Vec::new();
        let mut halt = Vec::new();

        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "factor" => {
                    self.advance();
                    let (fname, _) = self.ident("a factor name")?;
                    self.expect_punct('{')?;
                    let labels = self.label_list('}')?;
                    factors.push(FactorSpace { name: fname, labels });
                }
                Tok::Ident(kw) if kw == "init" => {
                    if initial.is_some() {
                        return Err(ParseError::new(self.pos(), "a single init declaration", "second `init`"));
                    }
                    self.advance();
                    self.expect_punct('=')?;
                    let (expr, spans) = self.ket_expr()?;
                    let (v, arity) = expand_ket(&factors, &expr).map_err(|(i, e)| {
                        let (expected, found) = expand_message(&e);
                        ParseError::new(spans[i], expected, found)
                    })?;
                    active = arity;
                    initial = Some((v, expr));
                }
                Tok::Ident(kw) if kw == "step" => {
                    if initial.is_none() {
                        return Err(ParseError::new(self.pos(), "init declaration before steps", "`step`"));
                    }
                    self.advance();
                    let (id, _) = self.ident("a step id")?;
                    self.expect_keyword("observer")?;
                    let observer = self.string("an observer name string")?;
                    let mut out_active: Option<usize> = None;
                    let mut merged = None;
                    if self.is_keyword("mergeable") {
                        self.advance();
                        self.expect_punct('=')?;
                        let (expr, spans) = self.op_expr()?;
                        let (map, out) = self.expand(&factors, active, &expr, &spans)?;
                        out_active = Some(out);
                        merged = Some(Operator {
                            map,
                            source: Some(expr),
                        });
                    }
                    self.expect_punct('{')?;
                    let mut branches = Vec::new();
                    loop {
                        if self.is_punct('}') && !branches.is_empty() {
                            self.advance();
                            break;
                        }
                        if !self.is_keyword("branch") {
                            let expected = if branches.is_empty() { "`branch`" } else { "`branch` or `}`" };
                            return Err(self.error(expected));
                        }
                        self.advance();
                        let (label, _) = self.ident("an outcome label")?;
                        self.expect_punct(':')?;
                        let (expr, spans) = self.op_expr()?;
                        let (map, out) = self.expand(&factors, active, &expr, &spans)?;
                        match out_active {
                            None => out_active = Some(out),
                            Some(prev) if prev != out => {
                                let t = &expr.0[0];
                                return Err(ParseError::new(
                                    spans[0].ket,
                                    prev.to_string(),
                                    format!("ket arity {}", t.ket.len()),
                                ));
                            }
                            Some(_) => {}
                        }
                        branches.push(Branch {
                            label,
                            op: Operator {
                                map,
                                source: Some(expr),
                            },
                        });
                    }
                    active = out_active.expect("at least one branch");
                    steps.push(MeasurementStep {
                        id,
                        observer,
                        branches,
                        merged,
                    });
                }
                Tok::Ident(kw) if kw == "halt" => {
                    self.advance();
                    self.expect_punct('{')?;
                    loop {
                        let (step, _) = self.ident("a step id")?;
                        self.expect_punct('=')?;
                        let (label, _) = self.ident("an outcome label")?;
                        halt.push((step, label));
                        if self.is_punct(',') {
                            self.advance();
                        } else {
                            break;
                        }
                    }
                    self.expect_punct('}')?;
                }
                _ => return Err(self.error("`factor`, `init`, `step`, `halt` or end of input")),
            }
        }

        let Some((initial, initial_source)) = initial else {
            return Err(ParseError::new(self.pos(), "init declaration", "end of input"));
        };
        Ok(Scenario {
            name,
            factors,
            initial,
            initial_source: Some(initial_source),
            steps,
            halt,
        })
    }
}
