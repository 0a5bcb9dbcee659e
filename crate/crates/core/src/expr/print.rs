use std::fmt;

use num_traits::{One, Signed};

use super::{is_negative_const, Expr, Node};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e.node() {
        Node::Const(c) => {
            if c.is_negative() {
                if c.denom().is_one() {
                    UNARY
                } else {
                    PRODUCT
                }
            } else if c.denom().is_one() {
                ATOM
            } else {
                PRODUCT
            }
        }
        Node::Var(_) => ATOM,
        Node::Add(_) => SUM,
        Node::Mul(_) | Node::Div(_, _) => PRODUCT,
        Node::Neg(_) => UNARY,
        Node::Pow(_, _) => POWER,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if level(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.node() {
        Node::Const(c) => {
            if c.denom().is_one() {
                write!(f, "{}", c.numer())
            } else {
                write!(f, "{}/{}", c.numer(), c.denom())
            }
        }
        Node::Var(v) => write!(f, "{v}"),
        Node::Add(terms) => {
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    write_at(f, t, SUM)?;
                    continue;
                }
                match t.node() {
                    Node::Neg(inner) => {
                        write!(f, " - ")?;
                        write_at(f, inner, PRODUCT)?;
                    }
                    Node::Const(c) if is_negative_const(t) => {
                        write!(f, " - ")?;
                        write_expr(f, &Expr::constant(-c))?;
                    }
                    Node::Mul(fs) if is_negative_const(&fs[0]) => {
                        write!(f, " - ")?;
                        let flipped = Expr::product(std::iter::once(fs[0].neg()).chain(fs[1..].iter().cloned()));
                        write_at(f, &flipped, PRODUCT)?;
                    }
                    _ => {
                        write!(f, " + ")?;
                        write_at(f, t, PRODUCT)?;
                    }
                }
            }
            Ok(())
        }
        Node::Mul(factors) => {
            for (i, x) in factors.iter().enumerate() {
                if i == 0 {
                    write_at(f, x, PRODUCT)?;
                } else {
                    write!(f, "*")?;
                    write_at(f, x, POWER)?;
                }
            }
            Ok(())
        }
        Node::Neg(inner) => {
            write!(f, "-")?;
            write_at(f, inner, POWER)
        }
        Node::Div(n, d) => {
            write_at(f, n, PRODUCT)?;
            write!(f, "/")?;
            write_at(f, d, POWER)
        }
        Node::Pow(base, k) => {
            write_at(f, base, ATOM)?;
            write!(f, "^{k}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}
