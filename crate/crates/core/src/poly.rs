//! Dense real polynomials in the monomial basis, ascending coefficients.

use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// The polynomial with no terms (degree "-1").
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Nominal degree (length - 1); `None` for the empty polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<f64> {
        self.coeffs.last().copied()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        Self {
            coeffs: (0..len).map(|k| self.coeff(k) + other.coeff(k)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Max-norm distance between coefficient vectors, padding with zeros.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let len = self.coeffs.len().max(other.coeffs.len());
        (0..len)
            .map(|k| (self.coeff(k) - other.coeff(k)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_and_derivative() {
        // x^3 - 3x
        let p = Polynomial::new(vec![0.0, -3.0, 0.0, 1.0]);
        assert_eq!(p.eval(2.0), 2.0);
        assert_eq!(p.derivative().coeffs(), &[-3.0, 0.0, 3.0]);
        assert_eq!(Polynomial::zero().eval(3.0), 0.0);
        assert_eq!(Polynomial::zero().degree(), None);
        let z = Complex64::new(0.0, 1.0);
        assert_eq!(p.eval_complex(z), Complex64::new(0.0, -4.0));
    }

    proptest! {
        #[test]
        fn linear_ops_commute_with_eval(
            a in proptest::collection::vec(-5.0f64..5.0, 0..6),
            b in proptest::collection::vec(-5.0f64..5.0, 0..6),
            x in -2.0f64..2.0,
            s in -3.0f64..3.0,
        ) {
            let (pa, pb) = (Polynomial::new(a), Polynomial::new(b));
            let lhs = pa.add(&pb.scaled(s)).eval(x);
            let rhs = pa.eval(x) + s * pb.eval(x);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
