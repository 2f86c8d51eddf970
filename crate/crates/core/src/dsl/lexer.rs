use super::{ParseError, SourcePosition};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    /// Numeric literal kept as source text so integer-ness can be checked.
    Number(String),
    Punct(char),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Number(s) => format!("`{s}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: SourcePosition,
}

const PUNCT: &[char] = &['{', '}', ',', '=', '|', '<', '>', ':', '+', '-', '*', '/', '(', ')'];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = SourcePosition { line, column: col };
        if c.is_whitespace() {
            bump!();
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump!();
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    bump!();
                } else {
                    break;
                }
            }
            out.push(Token { tok: Tok::Ident(s), pos });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    bump!();
                } else {
                    break;
                }
            }
            if chars.peek() == Some(&'.') {
                s.push('.');
                bump!();
                let mut frac = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        frac = true;
                        bump!();
                    } else {
                        break;
                    }
                }
                if !frac {
                    return Err(ParseError::new(
                        SourcePosition { line, column: col },
                        "digit after decimal point",
                        describe_char(chars.peek().copied()),
                    ));
                }
            }
            if matches!(chars.peek(), Some('e') | Some('E')) {
                s.push('e');
                bump!();
                if let Some(&sign @ ('+' | '-')) = chars.peek() {
                    s.push(sign);
                    bump!();
                }
                let mut exp = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        exp = true;
                        bump!();
                    } else {
                        break;
                    }
                }
                if !exp {
                    return Err(ParseError::new(
                        SourcePosition { line, column: col },
                        "exponent digits",
                        describe_char(chars.peek().copied()),
                    ));
                }
            }
            out.push(Token { tok: Tok::Number(s), pos });
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match bump!() {
                    None => {
                        return Err(ParseError::new(
                            SourcePosition { line, column: col },
                            "closing `\"`",
                            "unexpected end of input",
                        ))
                    }
                    Some('"') => break,
                    Some('\\') => {
                        let esc_pos = SourcePosition { line, column: col };
                        match bump!() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            other => {
                                return Err(ParseError::new(
                                    esc_pos,
                                    "escape sequence (\\\", \\\\, \\n, \\t)",
                                    describe_char(other),
                                ))
                            }
                        }
                    }
                    Some(ch) => s.push(ch),
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
        } else if PUNCT.contains(&c) {
            bump!();
            out.push(Token { tok: Tok::Punct(c), pos });
        } else {
            return Err(ParseError::new(pos, "a token", describe_char(Some(c))));
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: SourcePosition { line, column: col },
    });
    Ok(out)
}

fn describe_char(c: Option<char>) -> String {
    match c {
        Some(c) => format!("unexpected character {c:?}"),
        None => "unexpected end of input".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<Tok> {
        tokenize(text).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn ket_and_amp_tokens() {
        assert_eq!(
            kinds("1/sqrt(3)*|h>"),
            vec![
                Tok::Number("1".into()),
                Tok::Punct('/'),
                Tok::Ident("sqrt".into()),
                Tok::Punct('('),
                Tok::Number("3".into()),
                Tok::Punct(')'),
                Tok::Punct('*'),
                Tok::Punct('|'),
                Tok::Ident("h".into()),
                Tok::Punct('>'),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn positions_and_comments() {
        let toks = tokenize("# header\n  factor coin # trailing\n{").unwrap();
        assert_eq!(toks[0].pos, SourcePosition { line: 2, column: 3 });
        assert_eq!(toks[1].pos, SourcePosition { line: 2, column: 10 });
        assert_eq!(toks[2].pos, SourcePosition { line: 3, column: 1 });
    }

    #[test]
    fn strings_with_escapes_and_unicode() {
        assert_eq!(kinds(r#""F̄ \"x\"""#)[0], Tok::Str("F\u{0304} \"x\"".into()));
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("0.25 1e-3 17")[..3], [Tok::Number("0.25".into()), Tok::Number("1e-3".into()), Tok::Number("17".into())]);
        assert!(tokenize("1.").is_err());
        assert!(tokenize("@").is_err());
        assert!(tokenize("\"open").is_err());
    }
}
