use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use super::{Expr, Node};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero (sample point lies on a pole)")]
    DivisionByZero,
    #[error("no value for variable '{0}'")]
    MissingVariable(String),
}

/// Assignment of exact rational values to variable names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Point(BTreeMap<String, BigRational>);

impl Point {
    pub fn new() -> Self {
        Point::default()
    }

    pub fn with(mut self, name: &str, value: BigRational) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: &str, value: BigRational) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&BigRational> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BigRational)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, BigRational)> for Point {
    fn from_iter<T: IntoIterator<Item = (String, BigRational)>>(iter: T) -> Self {
        Point(iter.into_iter().collect())
    }
}

/// Evaluates many expressions at one point, sharing a memo table so common
/// sub-expressions are computed once.
pub struct Evaluator<'p> {
    point: &'p Point,
    // Holding the node keeps its address from being reused while memoized.
    memo: HashMap<usize, (Expr, BigRational)>,
}

impl<'p> Evaluator<'p> {
    pub fn new(point: &'p Point) -> Self {
        Evaluator {
            point,
            memo: HashMap::new(),
        }
    }

    pub fn eval(&mut self, e: &Expr) -> Result<BigRational, EvalError> {
        if let Some((_, v)) = self.memo.get(&e.id()) {
            return Ok(v.clone());
        }
        let value = match e.node() {
            Node::Const(c) => c.clone(),
            Node::Var(name) => self
                .point
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::MissingVariable(name.to_string()))?,
            Node::Add(terms) => {
                let mut acc = BigRational::zero();
                for t in terms {
                    acc += self.eval(t)?;
                }
                acc
            }
            Node::Mul(factors) => {
                let mut acc = BigRational::one();
                for f in factors {
                    let v = self.eval(f)?;
                    if v.is_zero() {
                        // Remaining factors must still be pole-free.
                        for g in factors {
                            self.eval(g)?;
                        }
                        acc = BigRational::zero();
                        break;
                    }
                    acc *= v;
                }
                acc
            }
            Node::Neg(x) => -self.eval(x)?,
            Node::Div(n, d) => {
                let den = self.eval(d)?;
                if den.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                self.eval(n)? / den
            }
            Node::Pow(b, k) => num_traits::pow::pow(self.eval(b)?, *k as usize),
        };
        self.memo.insert(e.id(), (e.clone(), value.clone()));
        Ok(value)
    }

    pub fn eval_all(&mut self, es: &[Expr]) -> Result<Vec<BigRational>, EvalError> {
        es.iter().map(|e| self.eval(e)).collect()
    }
}

/// Exact value of `e` at `point`.
pub fn evaluate(e: &Expr, point: &Point) -> Result<BigRational, EvalError> {
    Evaluator::new(point).eval(e)
}

/// Simultaneous substitution: right-hand sides are inserted verbatim and
/// never substituted into each other.
pub fn substitute(e: &Expr, bindings: &BTreeMap<String, Expr>) -> Expr {
    Substituter::new(bindings).apply(e)
}

pub(crate) struct Substituter<'b> {
    bindings: &'b BTreeMap<String, Expr>,
    memo: HashMap<usize, Expr>,
}

impl<'b> Substituter<'b> {
    pub(crate) fn new(bindings: &'b BTreeMap<String, Expr>) -> Self {
        Substituter {
            bindings,
            memo: HashMap::new(),
        }
    }

    pub(crate) fn apply(&mut self, e: &Expr) -> Expr {
        if let Some(done) = self.memo.get(&e.id()) {
            return done.clone();
        }
        let out = match e.node() {
            Node::Const(_) => e.clone(),
            Node::Var(name) => self.bindings.get(&**name).cloned().unwrap_or_else(|| e.clone()),
            Node::Add(terms) => {
                let new: Vec<Expr> = terms.iter().map(|t| self.apply(t)).collect();
                if new.iter().zip(terms).all(|(a, b)| a.ptr_eq(b)) {
                    e.clone()
                } else {
                    Expr::sum(new)
                }
            }
            Node::Mul(factors) => {
                let new: Vec<Expr> = factors.iter().map(|t| self.apply(t)).collect();
                if new.iter().zip(factors).all(|(a, b)| a.ptr_eq(b)) {
                    e.clone()
                } else {
                    Expr::product(new)
                }
            }
            Node::Neg(x) => {
                let nx = self.apply(x);
                if nx.ptr_eq(x) {
                    e.clone()
                } else {
                    nx.neg()
                }
            }
            Node::Div(n, d) => {
                let (nn, nd) = (self.apply(n), self.apply(d));
                if nn.ptr_eq(n) && nd.ptr_eq(d) {
                    e.clone()
                } else {
                    nn.div(&nd)
                }
            }
            Node::Pow(b, k) => {
                let nb = self.apply(b);
                if nb.ptr_eq(b) {
                    e.clone()
                } else {
                    nb.pow(i64::from(*k))
                }
            }
        };
        self.memo.insert(e.id(), out.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn evaluates_quotient() {
        let e = parse("x/y").unwrap();
        let p = Point::new().with("x", q(1, 1)).with("y", q(2, 1));
        assert_eq!(evaluate(&e, &p).unwrap(), q(1, 2));
        let p = Point::new().with("x", q(1, 1)).with("y", q(0, 1));
        assert_eq!(evaluate(&e, &p), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn missing_variable() {
        let e = parse("x + z").unwrap();
        let p = Point::new().with("x", q(1, 1));
        assert_eq!(evaluate(&e, &p), Err(EvalError::MissingVariable("z".into())));
    }

    #[test]
    fn gravity_norm_at_nominal_gravity() {
        let h2 = parse("g_x^2 + g_y^2 + g_z^2").unwrap();
        let p = Point::new()
            .with("g_x", q(0, 1))
            .with("g_y", q(0, 1))
            .with("g_z", q(-981, 100));
        assert_eq!(evaluate(&h2, &p).unwrap(), q(981 * 981, 10000));
    }

    #[test]
    fn zero_factor_does_not_hide_pole() {
        let e = parse("0*x + y*(1/z)").unwrap();
        let p = Point::new().with("x", q(1, 1)).with("y", q(0, 1)).with("z", q(0, 1));
        assert_eq!(evaluate(&e, &p), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut b = BTreeMap::new();
        b.insert("x".to_string(), parse("z^2").unwrap());
        let e = substitute(&parse("x + y").unwrap(), &b);
        assert_eq!(e.to_string(), "z^2 + y");

        let mut b = BTreeMap::new();
        b.insert("x".to_string(), parse("x + 1").unwrap());
        let twice = substitute(&substitute(&Expr::var("x"), &b), &b);
        let p = Point::new().with("x", q(5, 1));
        assert_eq!(evaluate(&twice, &p).unwrap(), q(7, 1));

        let mut b = BTreeMap::new();
        b.insert("x".to_string(), Expr::var("y"));
        b.insert("y".to_string(), Expr::var("x"));
        let swapped = substitute(&parse("x - 2*y").unwrap(), &b);
        assert_eq!(swapped.to_string(), "y - 2*x");
    }

    #[test]
    fn untouched_subtrees_are_shared() {
        let e = parse("a*b + c").unwrap();
        let mut b = BTreeMap::new();
        b.insert("c".to_string(), Expr::int(1));
        let out = substitute(&e, &b);
        let (Node::Add(old), Node::Add(new)) = (e.node(), out.node()) else {
            panic!()
        };
        assert!(old[0].ptr_eq(&new[0]));
    }
}
