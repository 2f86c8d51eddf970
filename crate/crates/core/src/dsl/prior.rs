use thiserror::Error;

use crate::scenario::{Partition, PartitionPrior, PriorError};

use super::lexer::{tokenize, Tok};
use super::parser::Parser;
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorFileError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("invalid prior: {0}")]
    Invalid(#[from] PriorError),
}

/// Parses `p{ids} = weight` lines. Weights may be decimals or `a/b`
/// fractions; unlisted partitions have weight zero.
pub fn parse_prior(text: &str) -> Result<PartitionPrior, PriorFileError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0 };
    let mut entries = Vec::new();
    while !matches!(p.tokens[p.at].tok, Tok::Eof) {
        match &p.tokens[p.at].tok {
            Tok::Ident(s) if s == "p" => {
                p.at += 1;
            }
            _ => return Err(p.error("`p{...} = weight`").into()),
        }
        p.expect_punct('{')?;
        let mut ids: Vec<String> = Vec::new();
        if !p.is_punct('}') {
            loop {
                ids.push(p.ident("a step id")?.0);
                if p.is_punct(',') {
                    p.at += 1;
                } else {
                    break;
                }
            }
        }
        p.expect_punct('}')?;
        p.expect_punct('=')?;
        let mut w = p.number()?;
        if p.is_punct('/') {
            p.at += 1;
            let pos = p.pos();
            let d = p.number()?;
            if d == 0.0 {
                return Err(ParseError::new(pos, "a nonzero denominator", "`0`").into());
            }
            w /= d;
        }
        entries.push((Partition::new(ids.iter().map(String::as_str)), w));
    }
    Ok(PartitionPrior::new(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::emit_prior;

    #[test]
    fn uniform_prior() {
        let prior = parse_prior("p{} = 0.25\np{I} = 0.25\np{II} = 0.25\np{I,II} = 0.25\n").unwrap();
        assert_eq!(prior.len(), 4);
        assert_eq!(prior.weight(&Partition::new(["I", "II"])), 0.25);
        assert_eq!(parse_prior(&emit_prior(&prior)).unwrap(), prior);
    }

    #[test]
    fn point_mass_and_fractions() {
        let prior = parse_prior("# both friends merged\np{I,II} = 1\n").unwrap();
        assert_eq!(prior, PartitionPrior::point_mass(Partition::new(["I", "II"])));
        let prior = parse_prior("p{} = 1/3\np{I} = 2/3").unwrap();
        assert!((prior.weight(&Partition::empty()) - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(prior.weight(&Partition::new(["II"])), 0.0);
    }

    #[test]
    fn simplex_violation() {
        let err = parse_prior("p{} = 0.6\np{I} = 0.6\n").unwrap_err();
        match err {
            PriorFileError::Invalid(PriorError::NotNormalized { sum }) => assert!((sum - 1.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error() {
        let err = parse_prior("p{I = 1\n").unwrap_err();
        match err {
            PriorFileError::Syntax(e) => assert_eq!((e.position.line, e.position.column), (1, 5)),
            other => panic!("{other:?}"),
        }
    }
}
