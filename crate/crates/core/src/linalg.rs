//! Dense solvers for the small symmetric step systems.
//!
//! Dimensions are the number of active hedge assets, so 1 and 2 get closed
//! forms and anything larger goes through Gaussian elimination with partial
//! pivoting. Singularity is never silent: callers receive the smallest
//! pivot encountered and decide whether to regularize.

use crate::error::{HedgeError, Result};
use crate::Scalar;

/// Row-major symmetric matrix of order `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    pub d: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(d: usize) -> Self {
        SymMatrix { d, data: vec![T::zero(); d * d] }
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let d = rows.len();
        let mut data = Vec::with_capacity(d * d);
        for r in rows {
            assert_eq!(r.len(), d);
            data.extend_from_slice(r);
        }
        SymMatrix { d, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.d + j] = v;
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> T {
        (0..self.d).map(|i| self.at(i, i)).sum()
    }

    /// Add `ridge` to every diagonal entry.
    pub fn add_ridge(&mut self, ridge: T) {
        for i in 0..self.d {
            let v = self.at(i, i) + ridge;
            self.set(i, i, v);
        }
    }

    /// Determinant by elimination (exact closed forms for d <= 2).
    pub fn det(&self) -> T {
        match self.d {
            0 => T::one(),
            1 => self.at(0, 0),
            2 => self.at(0, 0) * self.at(1, 1) - self.at(0, 1) * self.at(1, 0),
            _ => {
                let mut a = self.data.clone();
                let d = self.d;
                let mut det = T::one();
                for col in 0..d {
                    let mut piv = col;
                    for r in (col + 1)..d {
                        if a[r * d + col].abs() > a[piv * d + col].abs() {
                            piv = r;
                        }
                    }
                    if piv != col {
                        for c in 0..d {
                            a.swap(col * d + c, piv * d + c);
                        }
                        det = -det;
                    }
                    let p = a[col * d + col];
                    if p == T::zero() {
                        return T::zero();
                    }
                    det = det * p;
                    for r in (col + 1)..d {
                        let f = a[r * d + col] / p;
                        for c in col..d {
                            a[r * d + c] = a[r * d + c] - f * a[col * d + c];
                        }
                    }
                }
                det
            }
        }
    }

    /// Determinant of the principal submatrix selected by `idx`.
    pub fn principal_minor(&self, idx: &[usize]) -> T {
        let l = idx.len();
        let mut sub = SymMatrix::zeros(l);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                sub.set(a, b, self.at(i, j));
            }
        }
        sub.det()
    }

    /// Leading principal minors, orders 1..=d.
    pub fn leading_minors(&self) -> Vec<T> {
        (1..=self.d).map(|l| self.principal_minor(&(0..l).collect::<Vec<_>>())).collect()
    }

    /// Inverse via column-wise solves; `None` when a pivot vanishes.
    pub fn inverse(&self, pivot_floor: T) -> Option<SymMatrix<T>> {
        let d = self.d;
        let mut inv = SymMatrix::zeros(d);
        for j in 0..d {
            let mut e = vec![T::zero(); d];
            e[j] = T::one();
            let sol = solve_symmetric(self, &e).ok()?;
            if sol.min_pivot < pivot_floor {
                return None;
            }
            for i in 0..d {
                inv.set(i, j, sol.x[i]);
            }
        }
        Some(inv)
    }
}

/// Solution of one dense system, with the smallest pivot met on the way.
#[derive(Debug, Clone)]
pub struct Solve<T> {
    pub x: Vec<T>,
    /// Smallest absolute pivot (d = 1: the coefficient; d = 2: min of the
    /// first diagonal and the Schur complement; else elimination pivots).
    pub min_pivot: T,
}

/// Solve `F x = b` for symmetric `F`.
///
/// Closed form for d = 1 and d = 2, partial-pivot elimination otherwise.
/// Inputs must be finite; singular systems return pivot 0 and a zero
/// solution component where division broke down, so callers must inspect
/// `min_pivot` against their tolerance.
pub fn solve_symmetric<T: Scalar>(f: &SymMatrix<T>, b: &[T]) -> Result<Solve<T>> {
    let d = f.d;
    if b.len() != d {
        return Err(HedgeError::invalid("rhs length mismatch"));
    }
    if f.data.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(HedgeError::NonFinite("linear system".into()));
    }
    match d {
        0 => Ok(Solve { x: vec![], min_pivot: T::infinity() }),
        1 => {
            let a = f.at(0, 0);
            let x = if a == T::zero() { T::zero() } else { b[0] / a };
            Ok(Solve { x: vec![x], min_pivot: a.abs() })
        }
        2 => {
            let (a1, a2, dd) = (f.at(0, 0), f.at(1, 1), f.at(0, 1));
            let det = a1 * a2 - dd * dd;
            if det == T::zero() {
                return Ok(Solve { x: vec![T::zero(); 2], min_pivot: T::zero() });
            }
            let x1 = (a2 * b[0] - dd * b[1]) / det;
            let x2 = (a1 * b[1] - dd * b[0]) / det;
            // Pivots of the eliminated form: a1 and det / a1.
            let min_pivot = if a1 == T::zero() {
                T::zero()
            } else {
                a1.abs().min((det / a1).abs())
            };
            Ok(Solve { x: vec![x1, x2], min_pivot })
        }
        _ => {
            let mut a = f.data.clone();
            let mut rhs = b.to_vec();
            let mut min_pivot = T::infinity();
            for col in 0..d {
                let mut piv = col;
                for r in (col + 1)..d {
                    if a[r * d + col].abs() > a[piv * d + col].abs() {
                        piv = r;
                    }
                }
                if piv != col {
                    for c in 0..d {
                        a.swap(col * d + c, piv * d + c);
                    }
                    rhs.swap(col, piv);
                }
                let p = a[col * d + col];
                min_pivot = min_pivot.min(p.abs());
                if p == T::zero() {
                    continue;
                }
                for r in (col + 1)..d {
                    let fct = a[r * d + col] / p;
                    if fct == T::zero() {
                        continue;
                    }
                    for c in col..d {
                        a[r * d + c] = a[r * d + c] - fct * a[col * d + c];
                    }
                    rhs[r] = rhs[r] - fct * rhs[col];
                }
            }
            let mut x = vec![T::zero(); d];
            for i in (0..d).rev() {
                let mut s = rhs[i];
                for j in (i + 1)..d {
                    s = s - a[i * d + j] * x[j];
                }
                let p = a[i * d + i];
                x[i] = if p == T::zero() { T::zero() } else { s / p };
            }
            Ok(Solve { x, min_pivot })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use proptest::prelude::*;

    #[test]
    fn hand_solvable_two_by_two() {
        // A = (2, 3), D = 1, b = (1, 1): det = 5, x = (0.4, 0.2).
        let f = SymMatrix::from_rows(&[&[2.0f64, 1.0], &[1.0, 3.0]]);
        let s = solve_symmetric(&f, &[1.0, 1.0]).unwrap();
        assert!((s.x[0] - 0.4).abs() < 1e-15);
        assert!((s.x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_system_is_zero() {
        let f = SymMatrix::from_rows(&[&[2.0f64, 1.0], &[1.0, 3.0]]);
        let s = solve_symmetric(&f, &[0.0, 0.0]).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn singular_system_reports_zero_pivot() {
        let f = SymMatrix::from_rows(&[&[1.0f64, 1.0], &[1.0, 1.0]]);
        let s = solve_symmetric(&f, &[1.0, 2.0]).unwrap();
        assert_eq!(s.min_pivot, 0.0);
    }

    #[test]
    fn leading_minors_hand_values() {
        let f = SymMatrix::from_rows(&[&[2.0f64, 1.0], &[1.0, 2.0]]);
        assert_eq!(f.leading_minors(), vec![2.0, 3.0]);
        let g = SymMatrix::from_rows(&[&[1.0f64, 1.0], &[1.0, 1.0]]);
        assert_eq!(g.leading_minors(), vec![1.0, 0.0]);
    }

    #[test]
    fn inverse_roundtrip() {
        let f = SymMatrix::from_rows(&[
            &[4.0f64, 1.0, 0.5],
            &[1.0, 3.0, 0.2],
            &[0.5, 0.2, 2.0],
        ]);
        let inv = f.inverse(1e-12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += f.at(i, k) * inv.at(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "({i},{j}): {s}");
            }
        }
    }

    // Independent exact oracle: Cramer's rule over rationals with cofactor
    // determinants, nothing shared with the float elimination path.
    fn rational_det(m: &Vec<Vec<BigRational>>) -> BigRational {
        let d = m.len();
        if d == 1 {
            return m[0][0].clone();
        }
        let mut acc = BigRational::from_integer(BigInt::from(0));
        for j in 0..d {
            let minor: Vec<Vec<BigRational>> = (1..d)
                .map(|r| (0..d).filter(|c| *c != j).map(|c| m[r][c].clone()).collect())
                .collect();
            let term = &m[0][j] * rational_det(&minor);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    fn rational_solve(f: &[Vec<i64>], b: &[i64]) -> Vec<BigRational> {
        let d = b.len();
        let fm: Vec<Vec<BigRational>> = f
            .iter()
            .map(|row| row.iter().map(|v| BigRational::from_integer(BigInt::from(*v))).collect())
            .collect();
        let det = rational_det(&fm);
        (0..d)
            .map(|j| {
                let mut col = fm.clone();
                for (r, bi) in b.iter().enumerate() {
                    col[r][j] = BigRational::from_integer(BigInt::from(*bi));
                }
                rational_det(&col) / det.clone()
            })
            .collect()
    }

    #[test]
    fn elimination_matches_rational_oracle_on_integer_instances() {
        let cases: Vec<(Vec<Vec<i64>>, Vec<i64>)> = vec![
            (
                vec![
                    vec![10, 2, 1, 0],
                    vec![2, 8, 1, 1],
                    vec![1, 1, 6, 2],
                    vec![0, 1, 2, 9],
                ],
                vec![1, -3, 2, 5],
            ),
            (
                vec![vec![5, 1, 1], vec![1, 7, 2], vec![1, 2, 4]],
                vec![2, 0, -1],
            ),
        ];
        for (fi, bi) in cases {
            let d = bi.len();
            let mut f = SymMatrix::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    f.set(i, j, fi[i][j] as f64);
                }
            }
            let b: Vec<f64> = bi.iter().map(|v| *v as f64).collect();
            let got = solve_symmetric(&f, &b).unwrap();
            let oracle = rational_solve(&fi, &bi);
            for (g, o) in got.x.iter().zip(oracle) {
                let o: f64 = o.numer().to_string().parse::<f64>().unwrap()
                    / o.denom().to_string().parse::<f64>().unwrap();
                assert!((g - o).abs() < 1e-12 * o.abs().max(1.0), "{g} vs {o}");
            }
        }
    }

    proptest! {
        #[test]
        fn random_pd_systems_have_small_residual(seed in 0u64..2000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let d = 4usize;
            // A^T A + I is symmetric positive definite.
            let a: Vec<Vec<f64>> =
                (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mut f = SymMatrix::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    let mut s = if i == j { 1.0 } else { 0.0 };
                    for k in 0..d {
                        s += a[k][i] * a[k][j];
                    }
                    f.set(i, j, s);
                }
            }
            let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sol = solve_symmetric(&f, &b).unwrap();
            let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..d {
                let mut r = -b[i];
                for j in 0..d {
                    r += f.at(i, j) * sol.x[j];
                }
                prop_assert!(r.abs() <= 1e-10 * norm_b.max(1.0));
            }
        }
    }
}
