//! Probabilistic identity testing by exact evaluation at random integer points.
//!
//! A nonzero rational function vanishes at a uniformly random point of a
//! large grid with small probability (Schwartz–Zippel), so agreement at
//! several independent points is strong evidence of identity. A mismatch is
//! always conclusive.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{EvalError, Evaluator, Expr, Point};

/// Sample coordinates are drawn uniformly from `[-SAMPLE_BOUND, SAMPLE_BOUND]`.
pub const SAMPLE_BOUND: i64 = 1_000_000;

/// Consecutive pole hits tolerated before giving up on a sample.
pub const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("gave up after {MAX_RESAMPLES} consecutive samples hit a pole")]
    ResampleExhausted,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A random point assigning every name in `vars` an integer in the sample range.
pub fn random_point<'a, R: Rng>(vars: impl IntoIterator<Item = &'a String>, rng: &mut R) -> Point {
    vars.into_iter()
        .map(|v| {
            let x = rng.gen_range(-SAMPLE_BOUND..=SAMPLE_BOUND);
            (v.clone(), BigRational::from_integer(BigInt::from(x)))
        })
        .collect()
}

/// True iff `a − b` vanishes at `trials` independent random points.
pub fn equals_random(a: &Expr, b: &Expr, trials: usize, seed: u64) -> Result<bool, IdentityError> {
    is_zero_random(&a.sub(b), trials, seed)
}

/// True iff `e` vanishes at `trials` independent random points.
pub fn is_zero_random(e: &Expr, trials: usize, seed: u64) -> Result<bool, IdentityError> {
    assert!(trials >= 1, "at least one trial is required");
    if e.is_zero() {
        return Ok(true);
    }
    let vars = e.free_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut misses = 0;
        let value = loop {
            let p = random_point(&vars, &mut rng);
            match Evaluator::new(&p).eval(e) {
                Ok(v) => break v,
                Err(EvalError::DivisionByZero) => {
                    misses += 1;
                    if misses >= MAX_RESAMPLES {
                        return Err(IdentityError::ResampleExhausted);
                    }
                }
                Err(other) => return Err(other.into()),
            }
        };
        if !value.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    #[test]
    fn binomial_identity() {
        let a = parse("(x+y)^2").unwrap();
        let b = parse("x^2 + 2*x*y + y^2").unwrap();
        assert!(equals_random(&a, &b, 5, 1).unwrap());
    }

    #[test]
    fn distinct_variables_differ() {
        assert!(!equals_random(&Expr::var("x"), &Expr::var("y"), 5, 1).unwrap());
    }

    #[test]
    fn rational_identity_with_cancellation() {
        let a = parse("(x^2 - y^2)/(x - y)").unwrap();
        let b = parse("x + y").unwrap();
        assert!(equals_random(&a, &b, 5, 3).unwrap());
    }

    #[test]
    fn pole_everywhere_is_reported() {
        let e = parse("1/(x - x)").unwrap();
        assert_eq!(
            is_zero_random(&e, 3, 0),
            Err(IdentityError::ResampleExhausted)
        );
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(seed in 0u64..500) {
            let e = random_expr(seed);
            let back = parse(&e.to_string()).unwrap();
            prop_assert!(equals_random(&back, &e, 5, seed).unwrap());
        }

        #[test]
        fn evaluation_is_multiplicative(s1 in 0u64..200, s2 in 0u64..200, pt in 0u64..1000) {
            let (a, b) = (random_expr(s1), random_expr(s2));
            let vars: std::collections::BTreeSet<String> =
                ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
            let p = random_point(&vars, &mut ChaCha8Rng::seed_from_u64(pt));
            let (va, vb, vab) = (
                super::super::evaluate(&a, &p),
                super::super::evaluate(&b, &p),
                super::super::evaluate(&a.mul(&b), &p),
            );
            if let (Ok(va), Ok(vb)) = (va, vb) {
                prop_assert_eq!(vab.unwrap(), va * vb);
            }
        }

        #[test]
        fn differentiation_is_linear(s1 in 0u64..200, s2 in 0u64..200) {
            use super::super::differentiate;
            let (a, b) = (random_expr(s1), random_expr(s2));
            let lhs = differentiate(&a.add(&b), "x");
            let rhs = differentiate(&a, "x").add(&differentiate(&b, "x"));
            prop_assert!(equals_random(&lhs, &rhs, 5, s1 ^ s2).unwrap());
        }
    }

    /// Small random rational function over x, y, z.
    pub(crate) fn random_expr(seed: u64) -> Expr {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        build(&mut rng, 4)
    }

    fn build(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
        let leaf = depth == 0 || rng.gen_bool(0.25);
        if leaf {
            return match rng.gen_range(0..4) {
                0 => Expr::ratio(rng.gen_range(-9..10), rng.gen_range(1..5)),
                1 => Expr::var("x"),
                2 => Expr::var("y"),
                _ => Expr::var("z"),
            };
        }
        match rng.gen_range(0..5) {
            0 => build(rng, depth - 1).add(&build(rng, depth - 1)),
            1 => build(rng, depth - 1).sub(&build(rng, depth - 1)),
            2 => build(rng, depth - 1).mul(&build(rng, depth - 1)),
            3 => build(rng, depth - 1).div(&Expr::sum([
                build(rng, depth - 1).pow(2),
                Expr::one(),
            ])),
            _ => build(rng, depth - 1).pow(rng.gen_range(0..4)),
        }
    }
}
