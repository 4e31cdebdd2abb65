//! Expression trees for autonomous right-hand sides.
//!
//! Expressions are parsed from text (see [`parse_expr`]), evaluated against a
//! state vector plus named parameters, and rewritten symbolically when an
//! equilibrium is shifted to the origin. State variables are positional:
//! `x1..xn`, with `x` and `xdot` accepted as aliases for `x1` and `x2` in
//! two-state systems.

mod parse;
mod system;

pub use parse::parse_expr;
pub use system::{parse_system, SystemDef, EQUILIBRIUM_TOL};

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Result, StabError};

/// Binary operators in increasing precedence: `+ -`, `* /`, `^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// The supported single-argument functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// An immutable expression tree. `Var(i)` is the zero-based state index.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates the expression at `state` with the given parameter bindings.
    ///
    /// Domain violations (log of a non-positive value, square root of a
    /// negative, division by zero, a fractional power of a negative base, or
    /// any non-finite intermediate) are reported with the offending
    /// subexpression rendered in source form.
    ///
    /// # Panics
    ///
    /// Panics if a `Var` index is out of range for `state` or a `Param` name
    /// is unbound; parser-produced trees never violate either.
    pub fn eval(&self, state: &[f64], params: &BTreeMap<String, f64>) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => state[*i],
            Expr::Param(name) => *params
                .get(name)
                .unwrap_or_else(|| panic!("parameter `{name}` is unbound")),
            Expr::Neg(e) => -e.eval(state, params)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(state, params)?;
                let b = r.eval(state, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(self.domain("fractional power of a negative base"));
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(self.domain("zero raised to a negative power"));
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, arg) => {
                let x = arg.eval(state, params)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(self.domain("logarithm of a non-positive value"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain("square root of a negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, op: &str) -> StabError {
        StabError::Domain {
            op: op.to_string(),
            subexpr: self.to_string(),
        }
    }

    /// Rewrites every state variable `x_i` as `x_i + offset[i]`, leaving the
    /// tree otherwise untouched. Zero offsets are skipped so an identity
    /// shift returns a structurally identical tree.
    pub fn shifted(&self, offset: &[f64]) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => {
                if offset[*i] == 0.0 {
                    Expr::Var(*i)
                } else {
                    Expr::Bin(
                        BinOp::Add,
                        Box::new(Expr::Var(*i)),
                        Box::new(Expr::Num(offset[*i])),
                    )
                }
            }
            Expr::Param(name) => Expr::Param(name.clone()),
            Expr::Neg(e) => Expr::Neg(Box::new(e.shifted(offset))),
            Expr::Bin(op, l, r) => Expr::Bin(
                *op,
                Box::new(l.shifted(offset)),
                Box::new(r.shifted(offset)),
            ),
            Expr::Call(f, arg) => Expr::Call(*f, Box::new(arg.shifted(offset))),
        }
    }

    /// True if `abs` appears anywhere in the tree. Integrands built from such
    /// expressions lose smoothness, so quadrature defaults are raised.
    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Param(_) => false,
            Expr::Neg(e) => e.contains_abs(),
            Expr::Bin(_, l, r) => l.contains_abs() || r.contains_abs(),
            Expr::Call(f, arg) => *f == Func::Abs || arg.contains_abs(),
        }
    }

    /// The set of state indices referenced anywhere in the tree.
    pub fn referenced_vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Num(_) | Expr::Param(_) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call(_, arg) => arg.collect_vars(out),
        }
    }
}

// Grammar levels for the printer. Each node is emitted at the loosest level
// that reparses to the same tree, so round-tripping is parenthesis-minimal.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Sum,
    Term,
    Factor,
    Unary,
}

impl Expr {
    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, level: Level) -> fmt::Result {
        let own = match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => Level::Sum,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => Level::Term,
            Expr::Bin(BinOp::Pow, ..) => Level::Factor,
            Expr::Neg(_) => Level::Unary,
            _ => Level::Unary,
        };
        if own < level {
            write!(f, "(")?;
            self.fmt_node(f)?;
            return write!(f, ")");
        }
        self.fmt_node(f)
    }

    fn fmt_node(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_at(f, Level::Unary)
            }
            Expr::Bin(op, l, r) => {
                let (sym, left, right) = match op {
                    BinOp::Add => (" + ", Level::Sum, Level::Term),
                    BinOp::Sub => (" - ", Level::Sum, Level::Term),
                    BinOp::Mul => (" * ", Level::Term, Level::Factor),
                    BinOp::Div => (" / ", Level::Term, Level::Factor),
                    // `^` is right-associative and its base is a unary.
                    BinOp::Pow => ("^", Level::Unary, Level::Factor),
                };
                l.fmt_at(f, left)?;
                write!(f, "{sym}")?;
                r.fmt_at(f, right)
            }
            Expr::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.fmt_at(f, Level::Sum)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, Level::Sum)
    }
}
