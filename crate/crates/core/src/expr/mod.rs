//! Exact rational-function expressions.
//!
//! An [`Expr`] is an immutable, reference-counted DAG. Sub-expressions are
//! shared freely between expressions, and every traversal (evaluation,
//! differentiation, substitution) memoizes on node identity so shared
//! structure is visited once.

mod diff;
mod eval;
mod identity;
mod parse;
mod print;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub use diff::{differentiate, gradient, lie_derivative_along};
pub use eval::{evaluate, substitute, EvalError, Evaluator, Point};
pub use identity::{equals_random, is_zero_random, random_point, IdentityError, MAX_RESAMPLES, SAMPLE_BOUND};
pub use parse::{parse, ParseError};

/// Shared handle to an expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

/// Expression node. Exponents of `Pow` are always at least 2; negative
/// powers are represented as `Div(1, Pow(..))`.
#[derive(Debug)]
pub enum Node {
    Const(BigRational),
    Var(Arc<str>),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Expr),
    Div(Expr, Expr),
    Pow(Expr, u32),
}

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Identity of the underlying node, used as a memoization key.
    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn constant(value: BigRational) -> Self {
        Expr::from_node(Node::Const(value))
    }

    pub fn int(value: i64) -> Self {
        Expr::constant(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn ratio(numer: i64, denom: i64) -> Self {
        Expr::constant(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn var(name: &str) -> Self {
        Expr::from_node(Node::Var(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Structurally the constant zero. Use [`is_zero_random`] for a semantic test.
    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    /// Sum with constant folding and zero absorption.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut konst = BigRational::zero();
        let mut rest = Vec::new();
        for t in terms {
            match t.node() {
                Node::Const(c) => konst += c,
                _ => rest.push(t),
            }
        }
        if !konst.is_zero() {
            rest.push(Expr::constant(konst));
        }
        match rest.len() {
            0 => Expr::zero(),
            1 => rest.pop().unwrap(),
            _ => Expr::from_node(Node::Add(rest)),
        }
    }

    /// Product with constant folding and 0/1 absorption. A leading factor of
    /// −1 becomes a negation.
    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut konst = BigRational::one();
        let mut rest = Vec::new();
        for f in factors {
            match f.node() {
                Node::Const(c) => {
                    if c.is_zero() {
                        return Expr::zero();
                    }
                    konst *= c;
                }
                _ => rest.push(f),
            }
        }
        if rest.is_empty() {
            return Expr::constant(konst);
        }
        let negate = konst == -BigRational::one();
        if !konst.is_one() && !negate {
            rest.insert(0, Expr::constant(konst));
        }
        let body = if rest.len() == 1 {
            rest.pop().unwrap()
        } else {
            Expr::from_node(Node::Mul(rest))
        };
        if negate {
            body.neg()
        } else {
            body
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        Expr::sum([self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        Expr::sum([self.clone(), other.neg()])
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        Expr::product([self.clone(), other.clone()])
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn div(&self, denom: &Expr) -> Expr {
        if denom.is_one() {
            return self.clone();
        }
        match (self.node(), denom.node()) {
            (Node::Const(a), Node::Const(b)) if !b.is_zero() => Expr::constant(a / b),
            (Node::Const(a), _) if a.is_zero() && denom.as_const().is_none() => Expr::zero(),
            (_, Node::Const(b)) if !b.is_zero() => self.mul(&Expr::constant(b.recip())),
            _ => Expr::from_node(Node::Div(self.clone(), denom.clone())),
        }
    }

    /// Integer power; negative exponents become a reciprocal.
    pub fn pow(&self, exponent: i64) -> Expr {
        if exponent == 0 {
            return Expr::one();
        }
        if exponent == 1 {
            return self.clone();
        }
        if exponent < 0 {
            return Expr::one().div(&self.pow(-exponent));
        }
        let k = u32::try_from(exponent).expect("exponent too large");
        match self.node() {
            Node::Const(c) => Expr::constant(num_traits::pow::pow(c.clone(), k as usize)),
            Node::Pow(base, j) => Expr::from_node(Node::Pow(base.clone(), j * k)),
            _ => Expr::from_node(Node::Pow(self.clone(), k)),
        }
    }

    /// Dot product of two equally long expression vectors, skipping
    /// structurally zero terms.
    pub fn dot(a: &[Expr], b: &[Expr]) -> Expr {
        assert_eq!(a.len(), b.len(), "dot product of unequal lengths");
        Expr::sum(
            a.iter()
                .zip(b)
                .filter(|(x, y)| !x.is_zero() && !y.is_zero())
                .map(|(x, y)| x.mul(y)),
        )
    }

    /// Children of this node in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => Vec::new(),
            Node::Add(xs) | Node::Mul(xs) => xs.iter().collect(),
            Node::Neg(x) | Node::Pow(x, _) => vec![x],
            Node::Div(n, d) => vec![n, d],
        }
    }

    /// Names of all variables occurring in the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            if let Node::Var(v) = e.node() {
                out.insert(v.to_string());
            }
            stack.extend(e.children());
        }
        out
    }

    /// Number of distinct nodes in the DAG.
    pub fn dag_size(&self) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if seen.insert(e.id()) {
                stack.extend(e.children());
            }
        }
        seen.len()
    }

    /// Structural equality of the two trees (not semantic equality).
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Add(a), Node::Add(b)) | (Node::Mul(a), Node::Mul(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.structurally_eq(y))
            }
            (Node::Neg(a), Node::Neg(b)) => a.structurally_eq(b),
            (Node::Div(a, b), Node::Div(c, d)) => a.structurally_eq(c) && b.structurally_eq(d),
            (Node::Pow(a, j), Node::Pow(b, k)) => j == k && a.structurally_eq(b),
            _ => false,
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

impl From<&str> for Expr {
    fn from(name: &str) -> Self {
        Expr::var(name)
    }
}

/// True when the constant is a negative number (used by the printer).
pub(crate) fn is_negative_const(e: &Expr) -> bool {
    e.as_const().is_some_and(|c| c.is_negative())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_folding() {
        let e = Expr::sum([Expr::int(2), Expr::int(3), Expr::var("x"), Expr::zero()]);
        assert_eq!(e.to_string(), "x + 5");
        assert!(Expr::product([Expr::var("x"), Expr::zero()]).is_zero());
        assert!(Expr::product([Expr::one(), Expr::var("y")]).structurally_eq(&Expr::var("y")));
    }

    #[test]
    fn negative_power_is_reciprocal() {
        let e = Expr::var("x").pow(-2);
        match e.node() {
            Node::Div(n, d) => {
                assert!(n.is_one());
                assert!(matches!(d.node(), Node::Pow(_, 2)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minus_one_factor_becomes_negation() {
        let e = Expr::product([Expr::int(-1), Expr::var("x")]);
        assert!(matches!(e.node(), Node::Neg(_)));
    }

    #[test]
    fn free_vars_of_shared_dag() {
        let x = Expr::var("x");
        let y = Expr::var("y");
        let s = x.add(&y);
        let e = s.mul(&s).div(&x);
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, vec!["x", "y"]);
        assert!(e.dag_size() < 8);
    }
}
