//! Small dense solves for moment systems.
//!
//! Moment matrices are Hankel-like and badly scaled (column `k` grows like
//! `k!!`). Systems are row/column equilibrated, factored with complete
//! pivoting, and polished by iterative refinement whose residual is
//! accumulated in compensated (double-double) arithmetic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default hard limit on the equilibrated 2-norm condition number.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

const REFINEMENT_STEPS: usize = 3;

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    /// 2-norm condition number of the equilibrated matrix.
    pub condition: f64,
}

/// `a*b` as an unevaluated sum `hi + lo`.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Compensated dot product (Ogita-Rump-Oishi Dot2).
pub fn dot2(xs: &[f64], ys: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let (p, pe) = two_prod(x, y);
        let (t, se) = two_sum(s, p);
        s = t;
        c += pe + se;
    }
    s + c
}

/// Compensated sum.
pub fn sum2(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in xs {
        let (t, e) = two_sum(s, x);
        s = t;
        c += e;
    }
    s + c
}

fn equilibrate(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = a.shape();
    let rows: Vec<f64> = (0..n)
        .map(|i| {
            let mx = (0..m).fold(0.0f64, |acc, j| acc.max(a[(i, j)].abs()));
            if mx > 0.0 { 1.0 / mx } else { 1.0 }
        })
        .collect();
    let cols: Vec<f64> = (0..m)
        .map(|j| {
            let mx = (0..n).fold(0.0f64, |acc, i| acc.max((a[(i, j)] * rows[i]).abs()));
            if mx > 0.0 { 1.0 / mx } else { 1.0 }
        })
        .collect();
    (rows, cols)
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 { f64::INFINITY } else { max / min }
}

/// Condition number after row/column equilibration.
pub fn scaled_condition(a: &DMatrix<f64>) -> f64 {
    let (r, c) = equilibrate(a);
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * r[i] * c[j]);
    condition_number(&scaled)
}

/// Solves the square system `a x = b`.
pub fn solve(a: &DMatrix<f64>, b: &[f64], condition_limit: f64) -> Result<Solution> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "system must be square");
    assert_eq!(b.len(), n);
    if n == 0 {
        return Ok(Solution {
            x: Vec::new(),
            condition: 1.0,
        });
    }
    let (r, c) = equilibrate(a);
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * r[i] * c[j]);
    let condition = condition_number(&scaled);
    if !condition.is_finite() {
        return Err(Error::Singular);
    }
    if condition > condition_limit {
        return Err(Error::IllConditioned {
            condition,
            limit: condition_limit,
        });
    }
    let lu = scaled.full_piv_lu();
    if !lu.is_invertible() {
        return Err(Error::Singular);
    }
    let rhs = DVector::from_fn(n, |i, _| b[i] * r[i]);
    let y = lu.solve(&rhs).ok_or(Error::Singular)?;
    let mut x: Vec<f64> = (0..n).map(|j| y[j] * c[j]).collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    for _ in 0..REFINEMENT_STEPS {
        let res = DVector::from_fn(n, |i, _| {
            let mut terms = rows[i].clone();
            terms.push(-1.0);
            let mut xs = x.clone();
            xs.push(b[i]);
            -dot2(&terms, &xs) * r[i]
        });
        let Some(d) = lu.solve(&res) else { break };
        for j in 0..n {
            x[j] += d[j] * c[j];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(Solution { x, condition })
}

/// Determinant by LU with complete pivoting.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.clone().full_piv_lu().determinant()
}
