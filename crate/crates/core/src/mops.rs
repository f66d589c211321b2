//! Type II multiple orthogonal polynomials `P_k`, type I functions
//! `Q_k = sum_i A_i(x) exp(a_i x)`, h-numbers and recurrence coefficients.
//!
//! `P` and `Q` are obtained from the moment linear systems that define them;
//! every other quantity (h-numbers, `c_{jk}`, ladder relations) is computed
//! afterwards by contracting coefficients against raw moments, so the
//! structural identities between them are genuine checks.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;

use crate::ensemble::{prefix_counts, Ensemble, MultiIndex};
use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_CONDITION_LIMIT};
use crate::moments::MomentCache;
use crate::poly::Polynomial;

/// Breakdown threshold for h-numbers relative to their rounding scale.
pub const H_BREAKDOWN: f64 = 1e-10;
/// Relative tolerance for leading-coefficient consistency.
pub const LEADING_TOL: f64 = 1e-8;

/// Monic polynomial `P_k` of degree `|k|` with `k_i` orthogonality
/// conditions against `exp(-(V(x) - a_i x))`.
#[derive(Clone, Debug)]
pub struct MonicPolynomial {
    pub index: MultiIndex,
    pub poly: Polynomial,
    /// Largest scaled residual of the orthogonality relations.
    pub residual: f64,
    pub condition: f64,
}

impl MonicPolynomial {
    pub fn degree(&self) -> usize {
        self.index.total()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly.eval(x)
    }
}

/// `Q(x) = sum_i A_i(x) exp(a_i x)` with `deg A_i = k_i - 1`.
#[derive(Clone, Debug)]
pub struct TypeIFunction {
    pub index: MultiIndex,
    /// One polynomial per distinct eigenvalue, empty when `k_i = 0`.
    pub parts: Vec<Polynomial>,
    pub exponents: Vec<f64>,
    pub residual: f64,
    pub condition: f64,
}

impl TypeIFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_shifted(x, 0.0)
    }

    /// `sum_i A_i(x) exp(a_i x - shift)`, with the shift folded into each
    /// exponential.
    pub fn eval_shifted(&self, x: f64, shift: f64) -> f64 {
        self.parts
            .iter()
            .zip(&self.exponents)
            .filter(|(p, _)| !p.is_empty())
            .map(|(p, &a)| p.eval(x) * (a * x - shift).exp())
            .sum()
    }

    pub fn part(&self, slot: usize) -> &Polynomial {
        &self.parts[slot]
    }

    /// Coefficients in the `Sigma_k` basis order: slots in spectrum order,
    /// ascending powers within each slot.
    pub fn basis_coeffs(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.coeffs().iter().copied()).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.parts.iter().map(Polynomial::max_abs_coeff).fold(0.0, f64::max)
    }

    /// Largest coefficient difference over all parts.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a.max_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn linear_combination(&self, s: f64, other: &Self, t: f64) -> Self {
        Self {
            index: self.index.clone(),
            parts: self
                .parts
                .iter()
                .zip(&other.parts)
                .map(|(a, b)| a.scaled(s).add(&b.scaled(t)))
                .collect(),
            exponents: self.exponents.clone(),
            residual: f64::NAN,
            condition: f64::NAN,
        }
    }
}

/// Value of an integral contracted against moments, with the sum of
/// absolute contributions as its rounding scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pairing {
    pub value: f64,
    pub scale: f64,
}

impl Pairing {
    /// `|value - target| / max(1, scale)`.
    pub fn scaled_error(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.scale.max(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadingCoefficient {
    pub value: f64,
    /// `1 / h` of the predecessor index.
    pub expected: f64,
}

impl LeadingCoefficient {
    pub fn rel_error(&self) -> f64 {
        (self.value - self.expected).abs() / self.expected.abs()
    }
}

/// Residuals of the two equalities of a ladder relation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderReport {
    /// Max-norm coefficient residual of the first form, relative to the
    /// largest coefficient of the target.
    pub first: f64,
    pub second: f64,
    /// Relative mismatch between the two scalar factors.
    pub factor_mismatch: f64,
}

impl LadderReport {
    pub fn max(&self) -> f64 {
        self.first.max(self.second).max(self.factor_mismatch)
    }
}

/// Solver for one ensemble, memoizing polynomials per multi-index.
#[derive(Debug)]
pub struct Mops {
    ens: Ensemble,
    cache: MomentCache,
    condition_limit: f64,
    p_memo: RwLock<HashMap<MultiIndex, Arc<MonicPolynomial>>>,
    q_memo: RwLock<HashMap<MultiIndex, Arc<TypeIFunction>>>,
}

impl Mops {
    pub fn new(ens: Ensemble) -> Self {
        Self::with_condition_limit(ens, DEFAULT_CONDITION_LIMIT)
    }

    pub fn with_condition_limit(ens: Ensemble, condition_limit: f64) -> Self {
        let cache = MomentCache::for_ensemble(&ens);
        Self {
            ens,
            cache,
            condition_limit,
            p_memo: RwLock::default(),
            q_memo: RwLock::default(),
        }
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ens
    }

    pub fn cache(&self) -> &MomentCache {
        &self.cache
    }

    fn check_index(&self, index: &MultiIndex) -> Result<()> {
        if index.p() != self.ens.p() {
            return Err(Error::OutOfRange(format!(
                "multi-index {index} has {} entries, spectrum has {}",
                index.p(),
                self.ens.p()
            )));
        }
        Ok(())
    }

    fn require_two(&self, what: &str) -> Result<()> {
        if self.ens.p() != 2 {
            return Err(Error::Unsupported(format!(
                "{what} requires exactly two distinct eigenvalues"
            )));
        }
        Ok(())
    }

    /// Type II polynomial for `index`, from `M p = -m`.
    pub fn solve_p(&self, index: &MultiIndex) -> Result<Arc<MonicPolynomial>> {
        self.check_index(index)?;
        if let Some(p) = self.p_memo.read().expect("memo poisoned").get(index) {
            return Ok(p.clone());
        }
        let d = index.total();
        let rows: Vec<(usize, usize)> = (0..index.p())
            .flat_map(|slot| (0..index.get(slot)).map(move |j| (slot, j)))
            .collect();
        let mut moments = Vec::with_capacity(index.p());
        for slot in 0..index.p() {
            moments.push(self.cache.moments(slot, index.get(slot) + d + 1)?);
        }
        let mat = DMatrix::from_fn(d, d, |r, m| {
            let (slot, j) = rows[r];
            moments[slot].0[j + m]
        });
        let rhs: Vec<f64> = rows.iter().map(|&(slot, j)| -moments[slot].0[j + d]).collect();
        let sol = linalg::solve(&mat, &rhs, self.condition_limit)?;
        let mut coeffs = sol.x;
        coeffs.push(1.0);
        let residual = rows
            .iter()
            .map(|&(slot, j)| {
                let (raw, abs) = &moments[slot];
                let terms: Vec<f64> = (0..=d).map(|m| coeffs[m] * raw[j + m]).collect();
                let scale: f64 = (0..=d).map(|m| coeffs[m].abs() * abs[j + m]).sum();
                linalg::sum2(terms).abs() / scale
            })
            .fold(0.0, f64::max);
        let p = Arc::new(MonicPolynomial {
            index: index.clone(),
            poly: Polynomial::new(coeffs),
            residual,
            condition: sol.condition,
        });
        Ok(self
            .p_memo
            .write()
            .expect("memo poisoned")
            .entry(index.clone())
            .or_insert(p)
            .clone())
    }

    /// Type I function for `index` (`|index| >= 1`): `int x^j Q e^{-V} = 0`
    /// for `j < |index| - 1` and `= 1` for `j = |index| - 1`.
    pub fn solve_q(&self, index: &MultiIndex) -> Result<Arc<TypeIFunction>> {
        self.check_index(index)?;
        let d = index.total();
        if d == 0 {
            return Err(Error::OutOfRange("type I function needs |k| >= 1".into()));
        }
        if let Some(q) = self.q_memo.read().expect("memo poisoned").get(index) {
            return Ok(q.clone());
        }
        let basis: Vec<(usize, usize)> = (0..index.p())
            .flat_map(|slot| (0..index.get(slot)).map(move |l| (slot, l)))
            .collect();
        let mut moments = Vec::with_capacity(index.p());
        for slot in 0..index.p() {
            moments.push(self.cache.moments(slot, index.get(slot) + d + 1)?);
        }
        let mat = DMatrix::from_fn(d, d, |r, c| {
            let (slot, l) = basis[c];
            moments[slot].0[r + l]
        });
        let mut rhs = vec![0.0; d];
        rhs[d - 1] = 1.0;
        let sol = linalg::solve(&mat, &rhs, self.condition_limit)?;
        let residual = (0..d)
            .map(|r| {
                let terms: Vec<f64> = basis
                    .iter()
                    .zip(&sol.x)
                    .map(|(&(slot, l), q)| q * moments[slot].0[r + l])
                    .chain(std::iter::once(-rhs[r]))
                    .collect();
                let scale: f64 = basis
                    .iter()
                    .zip(&sol.x)
                    .map(|(&(slot, l), q)| q.abs() * moments[slot].1[r + l])
                    .sum();
                linalg::sum2(terms).abs() / scale.max(1.0)
            })
            .fold(0.0, f64::max);
        let mut parts = Vec::with_capacity(index.p());
        let mut offset = 0;
        for slot in 0..index.p() {
            let k = index.get(slot);
            parts.push(Polynomial::new(sol.x[offset..offset + k].to_vec()));
            offset += k;
        }
        let q = Arc::new(TypeIFunction {
            index: index.clone(),
            parts,
            exponents: self.ens.spectrum.eigenvalues(),
            residual,
            condition: sol.condition,
        });
        Ok(self
            .q_memo
            .write()
            .expect("memo poisoned")
            .entry(index.clone())
            .or_insert(q)
            .clone())
    }

    /// `int x^shift P(x) Q(x) exp(-V(x)) dx` by moment contraction.
    pub fn pairing(&self, p: &Polynomial, q: &TypeIFunction, shift: usize) -> Result<Pairing> {
        let mut terms = Vec::new();
        let mut scale = 0.0;
        for (slot, part) in q.parts.iter().enumerate() {
            if part.is_empty() || p.is_empty() {
                continue;
            }
            let len = p.coeffs().len() + part.coeffs().len() + shift;
            let (raw, abs) = self.cache.moments(slot, len)?;
            for (m, &pm) in p.coeffs().iter().enumerate() {
                for (l, &ql) in part.coeffs().iter().enumerate() {
                    terms.push(pm * ql * raw[m + l + shift]);
                    scale += (pm * ql).abs() * abs[m + l + shift];
                }
            }
        }
        Ok(Pairing {
            value: linalg::sum2(terms),
            scale,
        })
    }

    /// `P_k` along the (extended) ordering.
    pub fn p_seq(&self, k: usize) -> Result<Arc<MonicPolynomial>> {
        let idx = prefix_counts(&self.ens.extended_slots(), self.ens.p(), k)?;
        self.solve_p(&idx)
    }

    /// `Q_j` along the (extended) ordering; built from the first `j + 1`
    /// entries.
    pub fn q_seq(&self, j: usize) -> Result<Arc<TypeIFunction>> {
        let idx = prefix_counts(&self.ens.extended_slots(), self.ens.p(), j + 1)?;
        self.solve_q(&idx)
    }

    /// `int P_j Q_k e^{-V}` for the ordering sequences.
    pub fn biorthogonality(&self, j: usize, k: usize) -> Result<Pairing> {
        let p = self.p_seq(j)?;
        let q = self.q_seq(k)?;
        self.pairing(&p.poly, &q, 0)
    }

    /// `h^{(slot)}_k = int P_k(x) x^{k_slot} w_slot(x) dx`.
    pub fn h_number(&self, index: &MultiIndex, slot: usize) -> Result<f64> {
        let p = self.solve_p(index)?;
        let shift = index.get(slot);
        let len = p.poly.coeffs().len() + shift;
        let (raw, abs) = self.cache.moments(slot, len)?;
        let terms: Vec<f64> = p
            .poly
            .coeffs()
            .iter()
            .enumerate()
            .map(|(m, c)| c * raw[m + shift])
            .collect();
        let scale: f64 = p
            .poly
            .coeffs()
            .iter()
            .enumerate()
            .map(|(m, c)| c.abs() * abs[m + shift])
            .sum();
        let h = linalg::sum2(terms);
        if h.abs() < H_BREAKDOWN * scale {
            return Err(Error::Breakdown(format!(
                "h-number for {index}, slot {slot} is {h:.3e} at scale {scale:.3e}"
            )));
        }
        Ok(h)
    }

    /// Top coefficient of the `slot` part of `Q_index`, checked against
    /// `1 / h^{(slot)}` of the index with that count lowered by one.
    /// `None` when the part is empty.
    pub fn leading_type1(&self, index: &MultiIndex, slot: usize) -> Result<Option<LeadingCoefficient>> {
        self.check_index(index)?;
        let Some(pred) = index.decremented(slot) else {
            return Ok(None);
        };
        let q = self.solve_q(index)?;
        let value = q.part(slot).leading().expect("non-empty part");
        let expected = 1.0 / self.h_number(&pred, slot)?;
        let lc = LeadingCoefficient { value, expected };
        if lc.rel_error() > LEADING_TOL {
            return Err(Error::Consistency(format!(
                "leading coefficient of part {slot} of Q{index} is {value:e}, 1/h gives {expected:e}"
            )));
        }
        Ok(Some(lc))
    }

    /// `c_{jk} = int x P_k(x) Q_j(x) e^{-V(x)} dx` along the extended ordering.
    pub fn recurrence_c(&self, j: usize, k: usize) -> Result<Pairing> {
        let p = self.p_seq(k)?;
        let q = self.q_seq(j)?;
        self.pairing(&p.poly, &q, 1)
    }

    fn idx2(&self, k1: usize, k2: usize) -> MultiIndex {
        MultiIndex(vec![k1, k2])
    }

    /// `h^{(slot+1)}_{k1,k2}` in two-eigenvalue notation.
    pub fn h2(&self, k1: usize, k2: usize, slot: usize) -> Result<f64> {
        self.require_two("h-number table")?;
        self.h_number(&self.idx2(k1, k2), slot)
    }

    pub fn p2(&self, k1: usize, k2: usize) -> Result<Arc<MonicPolynomial>> {
        self.require_two("two-index polynomial")?;
        self.solve_p(&self.idx2(k1, k2))
    }

    pub fn q2(&self, k1: usize, k2: usize) -> Result<Arc<TypeIFunction>> {
        self.require_two("two-index type I function")?;
        self.solve_q(&self.idx2(k1, k2))
    }

    fn ladder_range(&self, n1: usize, n2: usize) -> Result<()> {
        self.require_two("ladder relation")?;
        if n1 == 0 || n2 == 0 {
            return Err(Error::OutOfRange(format!(
                "ladder relations need n1, n2 >= 1, got ({n1},{n2})"
            )));
        }
        Ok(())
    }

    /// `P_{n1-1,n2-1} = g (P_{n1-1,n2} - P_{n1,n2-1})` with `g` from either
    /// h-number ratio.
    pub fn ladder_check_p(&self, n1: usize, n2: usize) -> Result<LadderReport> {
        self.ladder_range(n1, n2)?;
        let target = self.p2(n1 - 1, n2 - 1)?;
        let diff = self.p2(n1 - 1, n2)?.poly.sub(&self.p2(n1, n2 - 1)?.poly);
        let g1 = self.h2(n1 - 1, n2 - 1, 0)? / self.h2(n1 - 1, n2, 0)?;
        let g2 = -self.h2(n1 - 1, n2 - 1, 1)? / self.h2(n1, n2 - 1, 1)?;
        let scale = target.poly.max_abs_coeff();
        Ok(LadderReport {
            first: target.poly.max_diff(&diff.scaled(g1)) / scale,
            second: target.poly.max_diff(&diff.scaled(g2)) / scale,
            factor_mismatch: (g1 - g2).abs() / g1.abs(),
        })
    }

    /// `Q_{n1+1,n2+1} = g (Q_{n1,n2+1} - Q_{n1+1,n2})`, compared part by
    /// part; the factor mismatch compares `beta` from the A and B parts.
    pub fn ladder_check_q(&self, n1: usize, n2: usize) -> Result<LadderReport> {
        self.ladder_range(n1, n2)?;
        let target = self.q2(n1 + 1, n2 + 1)?;
        let left = self.q2(n1, n2 + 1)?;
        let right = self.q2(n1 + 1, n2)?;
        let g1 = -self.h2(n1, n2, 0)? / self.h2(n1, n2 + 1, 0)?;
        let g2 = self.h2(n1, n2, 1)? / self.h2(n1 + 1, n2, 1)?;
        let scale = target.max_abs_coeff();
        let lead = |q: &TypeIFunction, slot: usize| q.part(slot).leading().unwrap_or(0.0);
        let beta_a = -lead(&right, 0) / lead(&target, 0);
        let beta_b = lead(&left, 1) / lead(&target, 1);
        Ok(LadderReport {
            first: target.max_diff(&left.linear_combination(g1, &right, -g1)) / scale,
            second: target.max_diff(&left.linear_combination(g2, &right, -g2)) / scale,
            factor_mismatch: (beta_a - beta_b).abs() / beta_a.abs(),
        })
    }
}
