use std::fmt;

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// AND/OR formula over attribute labels, exactly as written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Leaf(String),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    /// Labels in left-to-right order, duplicates included.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Leaf(label) => out.push(label),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Merges directly nested gates of the same kind: `(A AND B) AND C` becomes `A AND B AND C`.
    pub fn flattened(&self) -> Formula {
        fn absorb(children: &[Formula], is_and: bool) -> Vec<Formula> {
            let mut out = Vec::new();
            for child in children.iter().map(Formula::flattened) {
                match child {
                    Formula::And(cs) if is_and => out.extend(cs),
                    Formula::Or(cs) if !is_and => out.extend(cs),
                    other => out.push(other),
                }
            }
            out
        }
        match self {
            Formula::Leaf(_) => self.clone(),
            Formula::And(cs) => Formula::And(absorb(cs, true)),
            Formula::Or(cs) => Formula::Or(absorb(cs, false)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, cs: &[Formula], op: &str| -> fmt::Result {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                match c {
                    Formula::Leaf(l) => f.write_str(l)?,
                    _ => write!(f, "({c})")?,
                }
            }
            Ok(())
        };
        match self {
            Formula::Leaf(l) => f.write_str(l),
            Formula::And(cs) => join(f, cs, "AND"),
            Formula::Or(cs) => join(f, cs, "OR"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token<'a> {
    Ident(&'a str),
    And,
    Or,
    Open,
    Close,
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b':')
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token<'_>)>, PolicyError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if b == b'(' {
            tokens.push((i, Token::Open));
            i += 1;
        } else if b == b')' {
            tokens.push((i, Token::Close));
            i += 1;
        } else if is_ident_byte(b) {
            let start = i;
            while i < bytes.len() && is_ident_byte(bytes[i]) {
                i += 1;
            }
            let word = &text[start..i];
            let token = match word {
                "AND" => Token::And,
                "OR" => Token::Or,
                _ => Token::Ident(word),
            };
            tokens.push((start, token));
        } else {
            let ch = text[i..].chars().next().expect("index is on a char boundary");
            return Err(PolicyError::Syntax {
                offset: i,
                message: format!("unknown token `{ch}`"),
            });
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, message: impl Into<String>) -> PolicyError {
        PolicyError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Formula, PolicyError> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::Or(terms) })
    }

    fn term(&mut self) -> Result<Formula, PolicyError> {
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { Formula::And(factors) })
    }

    fn factor(&mut self) -> Result<Formula, PolicyError> {
        match self.peek() {
            Some(Token::Ident(name)) => {
                let leaf = Formula::Leaf((*name).to_string());
                self.pos += 1;
                Ok(leaf)
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::Close) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(_) => Err(self.error("expected an attribute or `(`")),
            None => Err(self.error("unexpected end of policy")),
        }
    }
}

/// Parses `expr := term (OR term)*; term := factor (AND factor)*; factor := IDENT | ( expr )`.
///
/// Keywords are case-sensitive; identifiers are `[A-Za-z0-9_.:-]+`.
pub fn parse_policy(text: &str) -> Result<Formula, PolicyError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };
    let formula = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("expected AND, OR or end of policy"));
    }
    Ok(formula)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(s: &str) -> Formula {
        Formula::Leaf(s.into())
    }

    #[test]
    fn parses_the_three_clause_example() {
        let f = parse_policy("(SA_1 OR ObA_1) AND (SA_2 OR ObA_2) AND (SA_3 OR ObA_3)").unwrap();
        assert_eq!(
            f,
            Formula::And(vec![
                Formula::Or(vec![leaf("SA_1"), leaf("ObA_1")]),
                Formula::Or(vec![leaf("SA_2"), leaf("ObA_2")]),
                Formula::Or(vec![leaf("SA_3"), leaf("ObA_3")]),
            ])
        );
    }

    #[test]
    fn single_attribute() {
        assert_eq!(parse_policy("A").unwrap(), leaf("A"));
    }

    #[test]
    fn and_binds_tighter_than_or() {
        assert_eq!(
            parse_policy("A OR B AND C").unwrap(),
            Formula::Or(vec![leaf("A"), Formula::And(vec![leaf("B"), leaf("C")])])
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_policy("A AND (B OR") {
            Err(PolicyError::Syntax { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("unexpected {other:?}"),
        }
        match parse_policy("A & B") {
            Err(PolicyError::Syntax { offset, message }) => {
                assert_eq!(offset, 2);
                assert!(message.contains('&'));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_policy("").is_err());
        assert!(parse_policy("A B").is_err());
        assert!(parse_policy("()").is_err());
        assert!(parse_policy("A AND").is_err());
        assert!(parse_policy("A )").is_err());
    }

    #[test]
    fn lowercase_keywords_are_identifiers() {
        assert!(parse_policy("A and B").is_err());
        assert_eq!(parse_policy("and").unwrap(), leaf("and"));
    }

    #[test]
    fn display_round_trips() {
        for text in ["(A OR B) AND C", "A OR (B AND C) OR D", "X"] {
            let f = parse_policy(text).unwrap();
            assert_eq!(parse_policy(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn flattening_merges_same_operator() {
        let f = parse_policy("(A AND B) AND (C AND (D OR E))").unwrap().flattened();
        assert_eq!(
            f,
            Formula::And(vec![
                leaf("A"),
                leaf("B"),
                leaf("C"),
                Formula::Or(vec![leaf("D"), leaf("E")])
            ])
        );
    }
}
