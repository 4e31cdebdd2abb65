//! Hand-written recursive-descent parser for right-hand-side expressions.
//!
//! Grammar, loosest to tightest:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?          // right-associative
//! unary  := '-' unary | atom
//! atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers resolve against the state dimension and the parameter map at
//! parse time, so an undeclared symbol fails immediately with its byte
//! position rather than at evaluation.

use std::collections::BTreeMap;

use super::{BinOp, Expr, Func};
use crate::error::{Result, StabError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>> {
        let mut out = Vec::new();
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return Ok(out);
            }
            let start = self.pos;
            let tok = match self.bytes[self.pos] {
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'^' => Tok::Caret,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                b'0'..=b'9' | b'.' => {
                    out.push((self.number(start)?, start));
                    continue;
                }
                c if c == b'_' || c.is_ascii_alphabetic() => {
                    while self.pos < self.bytes.len()
                        && (self.bytes[self.pos] == b'_'
                            || self.bytes[self.pos].is_ascii_alphanumeric())
                    {
                        self.pos += 1;
                    }
                    out.push((Tok::Ident(self.src[start..self.pos].to_string()), start));
                    continue;
                }
                _ => {
                    return Err(StabError::Syntax {
                        pos: start,
                        expected: "a number, identifier, operator, or parenthesis".to_string(),
                    })
                }
            };
            self.pos += 1;
            out.push((tok, start));
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok> {
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mut probe = self.pos + 1;
            if probe < self.bytes.len() && matches!(self.bytes[probe], b'+' | b'-') {
                probe += 1;
            }
            if probe < self.bytes.len() && self.bytes[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| StabError::Syntax {
                pos: start,
                expected: "a valid number literal".to_string(),
            })
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    end: usize,
    n: usize,
    params: &'a BTreeMap<String, f64>,
}

/// Parses one expression for an `n`-state system with the given parameters.
///
/// `x` and `xdot` alias `x1` and `x2` when `n == 2`; any other identifier
/// must be a declared parameter or a known function name.
pub fn parse_expr(src: &str, n: usize, params: &BTreeMap<String, f64>) -> Result<Expr> {
    let toks = Lexer::new(src).tokens()?;
    let mut parser = Parser {
        toks,
        cursor: 0,
        end: src.len(),
        n,
        params,
    };
    let expr = parser.expr()?;
    if let Some((_, pos)) = parser.peek_at() {
        return Err(StabError::Syntax {
            pos,
            expected: "an operator or end of input".to_string(),
        });
    }
    Ok(expr)
}

impl<'a> Parser<'a> {
    fn peek_at(&self) -> Option<(&Tok, usize)> {
        self.toks.get(self.cursor).map(|(t, p)| (t, *p))
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.cursor)
            .map(|(_, p)| *p)
            .unwrap_or(self.end)
    }

    fn eat(&mut self, want: &Tok, expected: &str) -> Result<()> {
        match self.toks.get(self.cursor) {
            Some((t, _)) if t == want => {
                self.cursor += 1;
                Ok(())
            }
            _ => Err(StabError::Syntax {
                pos: self.here(),
                expected: expected.to_string(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_at() {
                Some((Tok::Plus, _)) => BinOp::Add,
                Some((Tok::Minus, _)) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.cursor += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek_at() {
                Some((Tok::Star, _)) => BinOp::Mul,
                Some((Tok::Slash, _)) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.cursor += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if let Some((Tok::Caret, _)) = self.peek_at() {
            self.cursor += 1;
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some((Tok::Minus, _)) = self.peek_at() {
            self.cursor += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, pos) = match self.peek_at() {
            Some((t, p)) => (t.clone(), p),
            None => {
                return Err(StabError::Syntax {
                    pos: self.end,
                    expected: "a number, identifier, `-`, or `(`".to_string(),
                })
            }
        };
        match tok {
            Tok::Num(v) => {
                self.cursor += 1;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.cursor += 1;
                let inner = self.expr()?;
                self.eat(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.cursor += 1;
                if let Some((Tok::LParen, _)) = self.peek_at() {
                    self.call(&name, pos)
                } else {
                    self.symbol(&name, pos)
                }
            }
            _ => Err(StabError::Syntax {
                pos,
                expected: "a number, identifier, `-`, or `(`".to_string(),
            }),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr> {
        let func = Func::from_name(name).ok_or_else(|| StabError::UnknownSymbol {
            name: name.to_string(),
            pos,
        })?;
        self.eat(&Tok::LParen, "`(`")?;
        // Parse the full argument list before checking arity so that
        // `sin(x1, x2)` reports an arity error, not a stray-comma error.
        let mut args = Vec::new();
        if matches!(self.peek_at(), Some((Tok::RParen, _))) {
            self.cursor += 1;
        } else {
            loop {
                args.push(self.expr()?);
                match self.peek_at() {
                    Some((Tok::Comma, _)) => self.cursor += 1,
                    Some((Tok::RParen, _)) => {
                        self.cursor += 1;
                        break;
                    }
                    _ => {
                        return Err(StabError::Syntax {
                            pos: self.here(),
                            expected: "`,` or `)`".to_string(),
                        })
                    }
                }
            }
        }
        if args.len() != 1 {
            return Err(StabError::Arity {
                func: name.to_string(),
                expected: 1,
                got: args.len(),
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }

    fn symbol(&mut self, name: &str, pos: usize) -> Result<Expr> {
        if self.n == 2 {
            if name == "x" {
                return Ok(Expr::Var(0));
            }
            if name == "xdot" {
                return Ok(Expr::Var(1));
            }
        }
        if let Some(idx) = state_index(name) {
            if idx < self.n {
                return Ok(Expr::Var(idx));
            }
            return Err(StabError::UnknownSymbol {
                name: name.to_string(),
                pos,
            });
        }
        if self.params.contains_key(name) {
            return Ok(Expr::Param(name.to_string()));
        }
        Err(StabError::UnknownSymbol {
            name: name.to_string(),
            pos,
        })
    }
}

/// `x7` -> `Some(6)`; anything that is not `x` + a positive integer -> `None`.
pub(crate) fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn parses_the_usual_shapes() {
        let mut params = BTreeMap::new();
        params.insert("mu".to_string(), 1.0);
        for src in [
            "x2",
            "mu*(1 - x1^2)*x2 - x1",
            "x2^2 - x1 + x1^3",
            "-(x2 + sin(x1))",
            "abs(x2)*x2 + 3*x1 + x1^3",
            "1.5e-3 * x1",
        ] {
            parse_expr(src, 2, &params).unwrap();
        }
    }

    #[test]
    fn aliases_only_exist_for_two_states() {
        assert_eq!(
            parse_expr("x + xdot", 2, &no_params()).unwrap(),
            Expr::Bin(
                BinOp::Add,
                Box::new(Expr::Var(0)),
                Box::new(Expr::Var(1))
            )
        );
        assert!(matches!(
            parse_expr("x", 3, &no_params()),
            Err(StabError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse_expr("xdot", 1, &no_params()),
            Err(StabError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("x1 + * x2", 2, &no_params()) {
            Err(StabError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        match parse_expr("(x1 + x2", 2, &no_params()) {
            Err(StabError::Syntax { pos, .. }) => assert_eq!(pos, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("", 2, &no_params()).is_err());
        assert!(parse_expr("x1 x2", 2, &no_params()).is_err());
    }

    #[test]
    fn unknown_symbols_are_rejected() {
        assert!(matches!(
            parse_expr("x3", 2, &no_params()),
            Err(StabError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse_expr("nu * x1", 2, &no_params()),
            Err(StabError::UnknownSymbol { .. })
        ));
        // A function name used without arguments is not a variable.
        assert!(matches!(
            parse_expr("sin + 1", 2, &no_params()),
            Err(StabError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn arity_is_checked_after_the_argument_list() {
        assert!(matches!(
            parse_expr("sin(x1, x2)", 2, &no_params()),
            Err(StabError::Arity { got: 2, .. })
        ));
        assert!(matches!(
            parse_expr("sin()", 2, &no_params()),
            Err(StabError::Arity { got: 0, .. })
        ));
    }

    #[test]
    fn state_indices_are_strict() {
        assert_eq!(state_index("x1"), Some(0));
        assert_eq!(state_index("x12"), Some(11));
        assert_eq!(state_index("x01"), None);
        assert_eq!(state_index("x"), None);
        assert_eq!(state_index("y1"), None);
    }
}
