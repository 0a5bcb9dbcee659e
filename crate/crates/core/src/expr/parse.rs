//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr     := term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := '-' factor | atom ('^' integer)?
//! atom     := rational | identifier | '(' expr ')'
//! rational := integer ('/' positive-integer)?
//! ```
//!
//! The exponent may be written as `-k` or `(…)` provided it folds to an
//! integer constant.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

use super::Expr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected one of {}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<String> },
    #[error("non-integer exponent at byte {offset}")]
    IntegerExponent { offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        let tok = match b {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' => {
                let end = bytes[start..]
                    .iter()
                    .position(|c| !c.is_ascii_digit())
                    .map_or(bytes.len(), |n| start + n);
                self.pos = end;
                let value = self.src[start..end].parse::<BigInt>().expect("digits");
                return Ok((start, Tok::Int(value)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let end = bytes[start..]
                    .iter()
                    .position(|c| !(c.is_ascii_alphanumeric() || *c == b'_'))
                    .map_or(bytes.len(), |n| start + n);
                self.pos = end;
                return Ok((start, Tok::Ident(self.src[start..end].to_string())));
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: expected(&["number", "identifier", "'('", "'-'"]),
                })
            }
        };
        self.pos += 1;
        Ok((start, tok))
    }
}

fn expected(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: (usize, Tok),
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let peeked = lexer.next()?;
        Ok(Parser { lexer, peeked })
    }

    fn peek(&self) -> &Tok {
        &self.peeked.1
    }

    fn offset(&self) -> usize {
        self.peeked.0
    }

    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        let next = self.lexer.next()?;
        Ok(std::mem::replace(&mut self.peeked, next))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump()?;
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.bump()?;
                    terms.push(self.term()?.neg());
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        let mut factors: Vec<Expr> = Vec::new();
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump()?;
                    factors.push(acc);
                    acc = self.factor()?;
                }
                Tok::Slash => {
                    self.bump()?;
                    let denom = self.factor()?;
                    factors.push(acc);
                    let numer = Expr::product(std::mem::take(&mut factors));
                    acc = numer.div(&denom);
                }
                _ => break,
            }
        }
        if factors.is_empty() {
            Ok(acc)
        } else {
            factors.push(acc);
            Ok(Expr::product(factors))
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump()?;
            return Ok(self.factor()?.neg());
        }
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump()?;
            let k = self.exponent()?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i64, ParseError> {
        let at = self.offset();
        let value = match self.peek() {
            Tok::Minus => {
                self.bump()?;
                -BigRational::from_integer(self.exponent_magnitude(at)?)
            }
            Tok::Int(_) => BigRational::from_integer(self.exponent_magnitude(at)?),
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect_rparen()?;
                match inner.as_const() {
                    Some(c) => c.clone(),
                    None => return Err(ParseError::IntegerExponent { offset: at }),
                }
            }
            Tok::Ident(_) => return Err(ParseError::IntegerExponent { offset: at }),
            _ => {
                return Err(ParseError::Syntax {
                    offset: at,
                    expected: expected(&["integer exponent"]),
                })
            }
        };
        if !value.denom().is_one() {
            return Err(ParseError::IntegerExponent { offset: at });
        }
        value
            .numer()
            .to_i64()
            .filter(|k| k.unsigned_abs() <= u32::MAX as u64)
            .ok_or(ParseError::IntegerExponent { offset: at })
    }

    fn exponent_magnitude(&mut self, at: usize) -> Result<BigInt, ParseError> {
        match self.bump()? {
            // `x^3/2` is (x^3)/2: a slash after the exponent is division.
            (_, Tok::Int(v)) => Ok(v),
            (off, _) => Err(ParseError::Syntax {
                offset: off.max(at),
                expected: expected(&["integer"]),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump()?;
                Ok(())
            }
            _ => Err(ParseError::Syntax {
                offset: self.offset(),
                expected: expected(&["')'", "operator"]),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (off, tok) = self.bump()?;
        match tok {
            Tok::Int(v) => Ok(Expr::constant(BigRational::from_integer(v))),
            Tok::Ident(name) => Ok(Expr::var(&name)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => Err(ParseError::Syntax {
                offset: off,
                expected: expected(&["number", "identifier", "'('", "'-'"]),
            }),
        }
    }
}

/// Parse an expression string.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(ParseError::Syntax {
            offset: p.offset(),
            expected: expected(&["operator", "end of input"]),
        }),
        _ => Err(ParseError::Syntax {
            offset: p.offset(),
            expected: expected(&["'+'", "'-'", "'*'", "'/'", "'^'", "end of input"]),
        }),
    }
}
