//! Exact dense linear algebra over the rationals.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("column {index} out of range for a matrix with {cols} columns")]
    IndexOutOfRange { index: usize, cols: usize },
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RationalMatrix {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RationalMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigRational::one();
        }
        m
    }

    /// Builds a matrix from rows; every row must have `cols` entries.
    pub fn from_rows(cols: usize, rows: Vec<Vec<BigRational>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged row");
            data.extend(r);
        }
        RationalMatrix { rows: n, cols, data }
    }

    pub fn from_i64(rows: &[&[i64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        RationalMatrix::from_rows(
            cols,
            rows.iter()
                .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[BigRational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<BigRational> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = RationalMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &RationalMatrix) -> RationalMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let mut out = RationalMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn select_rows(&self, idx: &[usize]) -> RationalMatrix {
        RationalMatrix::from_rows(self.cols, idx.iter().map(|&i| self.row(i).to_vec()).collect())
    }

    pub fn without_column(&self, col: usize) -> Result<RationalMatrix, LinalgError> {
        if col >= self.cols {
            return Err(LinalgError::IndexOutOfRange {
                index: col,
                cols: self.cols,
            });
        }
        let rows = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != col)
                    .map(|(_, v)| v.clone())
                    .collect()
            })
            .collect();
        Ok(RationalMatrix::from_rows(self.cols - 1, rows))
    }
}

impl std::ops::Index<(usize, usize)> for RationalMatrix {
    type Output = BigRational;
    fn index(&self, (i, j): (usize, usize)) -> &BigRational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RationalMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigRational {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RationalMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

fn bit_cost(v: &BigRational) -> u64 {
    v.numer().bits() + v.denom().bits()
}

/// Reduced row echelon form in place; returns the pivot columns.
///
/// Pivots are chosen per column as the candidate with the smallest
/// numerator+denominator bit length, which keeps coefficient growth down.
fn rref(rows: &mut [Vec<BigRational>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len())
            .filter(|&i| !rows[i][c].is_zero())
            .min_by_key(|&i| bit_cost(&rows[i][c]))
        else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r][c..].iter_mut() {
            *v *= &inv;
        }
        let (head, tail) = rows.split_at_mut(r);
        let (pivot_row, tail) = tail.split_first_mut().unwrap();
        for other in head.iter_mut().chain(tail.iter_mut()) {
            if other[c].is_zero() {
                continue;
            }
            let factor = other[c].clone();
            for (x, p) in other[c..].iter_mut().zip(&pivot_row[c..]) {
                if !p.is_zero() {
                    *x -= &factor * p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn to_rows(m: &RationalMatrix) -> Vec<Vec<BigRational>> {
    (0..m.rows).map(|i| m.row(i).to_vec()).collect()
}

/// Exact rank.
pub fn rank(m: &RationalMatrix) -> usize {
    let mut rows = to_rows(m);
    rref(&mut rows, m.cols).len()
}

/// Indices of a maximal independent set of rows, chosen greedily in row order.
pub fn row_basis(m: &RationalMatrix) -> Vec<usize> {
    let mut basis = IncrementalBasis::new(m.cols);
    (0..m.rows).filter(|&i| basis.insert(m.row(i))).collect()
}

/// Basis of the right kernel as the columns of a `cols × (cols − rank)` matrix.
pub fn null_space(m: &RationalMatrix) -> RationalMatrix {
    let mut rows = to_rows(m);
    let pivots = rref(&mut rows, m.cols);
    let free: Vec<usize> = (0..m.cols).filter(|c| !pivots.contains(c)).collect();
    let mut n = RationalMatrix::zeros(m.cols, free.len());
    for (k, &f) in free.iter().enumerate() {
        n[(f, k)] = BigRational::one();
        for (r, &p) in pivots.iter().enumerate() {
            n[(p, k)] = -rows[r][f].clone();
        }
    }
    n
}

/// Rank after deleting column `col`.
pub fn rank_without_column(m: &RationalMatrix, col: usize) -> Result<usize, LinalgError> {
    Ok(rank(&m.without_column(col)?))
}

/// Row space built one row at a time, kept in reduced form so membership
/// tests cost one pass over the stored pivots.
#[derive(Clone, Debug)]
pub struct IncrementalBasis {
    cols: usize,
    // (pivot column, row normalized to 1 at the pivot)
    rows: Vec<(usize, Vec<BigRational>)>,
}

impl IncrementalBasis {
    pub fn new(cols: usize) -> Self {
        IncrementalBasis {
            cols,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, row: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        let mut v = row.to_vec();
        for (p, b) in &self.rows {
            if v[*p].is_zero() {
                continue;
            }
            let factor = v[*p].clone();
            for (x, y) in v.iter_mut().zip(b) {
                if !y.is_zero() {
                    *x -= &factor * y;
                }
            }
        }
        v
    }

    /// Whether `row` lies outside the current span.
    pub fn is_independent(&self, row: &[BigRational]) -> bool {
        self.reduce(row).iter().any(|x| !x.is_zero())
    }

    /// Adds `row` if it extends the span; returns whether it did.
    pub fn insert(&mut self, row: &[BigRational]) -> bool {
        let mut v = self.reduce(row);
        let Some(p) = v.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = v[p].recip();
        for x in v.iter_mut() {
            *x *= &inv;
        }
        self.rows.push((p, v));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RationalMatrix {
        RationalMatrix::from_rows(
            cols,
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| BigRational::new(rng.gen_range(-20..21).into(), rng.gen_range(1..6).into()))
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn small_ranks() {
        assert_eq!(rank(&RationalMatrix::from_i64(&[&[1, 0], &[0, 0]])), 1);
        assert_eq!(rank(&RationalMatrix::identity(7)), 7);
        assert_eq!(rank(&RationalMatrix::zeros(3, 4)), 0);
    }

    #[test]
    fn greedy_row_basis() {
        let m = RationalMatrix::from_i64(&[&[1, 0], &[2, 0], &[0, 1]]);
        assert_eq!(row_basis(&m), vec![0, 2]);
        assert!(row_basis(&RationalMatrix::zeros(3, 3)).is_empty());
    }

    #[test]
    fn kernel_of_single_row() {
        let n = null_space(&RationalMatrix::from_i64(&[&[1, 1]]));
        assert_eq!(n.cols(), 1);
        assert_eq!(n.column(0), vec![q(-1), q(1)]);
        assert_eq!(null_space(&RationalMatrix::identity(4)).cols(), 0);
    }

    #[test]
    fn column_deletion() {
        assert_eq!(rank_without_column(&RationalMatrix::identity(3), 0).unwrap(), 2);
        assert_eq!(rank_without_column(&RationalMatrix::from_i64(&[&[1, 1]]), 0).unwrap(), 1);
        assert_eq!(
            rank_without_column(&RationalMatrix::identity(2), 2),
            Err(LinalgError::IndexOutOfRange { index: 2, cols: 2 })
        );
    }

    #[test]
    fn row_basis_size_matches_constructed_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let k = trial % 6;
            let a = random_matrix(&mut rng, 8, k.max(1));
            let b = random_matrix(&mut rng, k.max(1), 8);
            let m = if k == 0 { RationalMatrix::zeros(8, 8) } else { a.mul(&b) };
            let r = rank(&m);
            assert!(r <= k, "rank {r} exceeds construction bound {k}");
            assert_eq!(row_basis(&m).len(), r);
        }
    }

    proptest! {
        #[test]
        fn rank_nullity_and_transpose(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..6, inner in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, rows, inner).mul(&random_matrix(&mut rng, inner, cols));
            let r = rank(&m);
            prop_assert_eq!(r, rank(&m.transpose()));
            let n = null_space(&m);
            prop_assert_eq!(r + n.cols(), cols);
            if n.cols() > 0 {
                prop_assert!(m.mul(&n).is_zero());
            }
        }

        #[test]
        fn rank_invariant_under_permutation_and_scaling(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, 2, 5).mul(&random_matrix(&mut rng, 5, 5));
            let m = RationalMatrix::from_rows(5, vec![m.row(0).to_vec(), m.row(1).to_vec(), m.row(0).iter().zip(m.row(1)).map(|(a, b)| a + b).collect()]);
            let mut rows: Vec<Vec<BigRational>> = (0..3).rev().map(|i| m.row(i).to_vec()).collect();
            let s = BigRational::new(rng.gen_range(1..50).into(), rng.gen_range(1..50).into());
            for v in rows[1].iter_mut() { *v *= &s; }
            prop_assert_eq!(rank(&m), rank(&RationalMatrix::from_rows(5, rows)));
        }
    }
}
