//! Correlation kernel `K_n(x, y) = e^{-(V(x)+V(y))/2} sum_k P_k(x) Q_k(y)`,
//! its Christoffel-Darboux form and the identities it satisfies.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensemble::{Ensemble, MultiIndex};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mops::{MonicPolynomial, Mops, TypeIFunction};
use crate::poly::Polynomial;
use crate::quadrature::{integrate_converged, truncation_bound};

/// Below this separation the CD quotient is replaced by its Taylor limit.
pub const DIAGONAL_GAP: f64 = 1e-6;
/// Points per axis of the standard identity-check grid.
pub const STANDARD_STEPS: usize = 21;

const QUAD_TOL: f64 = 1e-12;

/// Equispaced points `lo, ..., hi` (inclusive), `steps >= 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 2 {
            return Err(Error::Config(format!(
                "grid needs finite lo < hi and at least 2 steps, got {lo}:{hi}:{steps}"
            )));
        }
        Ok(Self { lo, hi, steps })
    }

    /// The 21-point grid over `[min a - 4, max a + 4]`.
    pub fn standard(ens: &Ensemble) -> Self {
        let (lo, hi) = ens.default_window();
        Self {
            lo,
            hi,
            steps: STANDARD_STEPS,
        }
    }

    /// Parses `XMIN:XMAX:STEPS`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Config(format!("grid must be XMIN:XMAX:STEPS, got {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].trim().parse().map_err(|_| bad())?;
        let hi = parts[1].trim().parse().map_err(|_| bad())?;
        let steps = parts[2].trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi, steps)
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }

    /// All `(x, y)` pairs, row-major in `x`.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let pts = self.points();
        pts.iter()
            .flat_map(|&x| pts.iter().map(move |&y| (x, y)))
            .collect()
    }
}

/// One term `scale * P(x) * Q(y)` of a Christoffel-Darboux numerator.
#[derive(Clone, Debug)]
struct CdTerm {
    scale: f64,
    p: Polynomial,
    dp: Polynomial,
    d2p: Polynomial,
    q: Arc<TypeIFunction>,
}

impl CdTerm {
    fn new(scale: f64, p: &Polynomial, q: Arc<TypeIFunction>) -> Self {
        let dp = p.derivative();
        let d2p = dp.derivative();
        Self {
            scale,
            p: p.clone(),
            dp,
            d2p,
            q,
        }
    }
}

/// Multi-index ingredients of the two-eigenvalue CD formula.
#[derive(Clone, Debug)]
pub struct CdParts {
    pub p_top: Arc<MonicPolynomial>,
    pub p_first: Arc<MonicPolynomial>,
    pub p_second: Arc<MonicPolynomial>,
    pub q_top: Arc<TypeIFunction>,
    pub q_first: Arc<TypeIFunction>,
    pub q_second: Arc<TypeIFunction>,
    /// `h^{(1)}_{n1,n2} / h^{(1)}_{n1-1,n2}`.
    pub ratio_first: f64,
    /// `h^{(2)}_{n1,n2} / h^{(2)}_{n1,n2-1}`.
    pub ratio_second: f64,
}

/// Polynomials and type I functions needed to evaluate `K_n`.
#[derive(Debug)]
pub struct KernelBundle {
    mops: Arc<Mops>,
    p: Vec<Arc<MonicPolynomial>>,
    q: Vec<Arc<TypeIFunction>>,
    parts: Option<CdParts>,
    cd: Option<Vec<CdTerm>>,
}

impl KernelBundle {
    pub fn new(ens: Ensemble) -> Result<Self> {
        Self::from_mops(Arc::new(Mops::new(ens)))
    }

    pub fn from_mops(mops: Arc<Mops>) -> Result<Self> {
        let n = mops.ensemble().n();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for k in 0..n {
            let idx = mops.ensemble().prefix_counts(k)?;
            p.push(mops.solve_p(&idx)?);
            q.push(mops.solve_q(&mops.ensemble().prefix_counts(k + 1)?)?);
        }
        let (parts, cd) = match mops.ensemble().p() {
            1 => (None, Some(classical_terms(&mops)?)),
            2 => {
                let parts = two_eigenvalue_parts(&mops)?;
                let terms = vec![
                    CdTerm::new(1.0, &parts.p_top.poly, parts.q_top.clone()),
                    CdTerm::new(-parts.ratio_first, &parts.p_first.poly, parts.q_first.clone()),
                    CdTerm::new(-parts.ratio_second, &parts.p_second.poly, parts.q_second.clone()),
                ];
                (Some(parts), Some(terms))
            }
            _ => (None, None),
        };
        Ok(Self {
            mops,
            p,
            q,
            parts,
            cd,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        self.mops.ensemble()
    }

    pub fn mops(&self) -> &Arc<Mops> {
        &self.mops
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p_sequence(&self) -> &[Arc<MonicPolynomial>] {
        &self.p
    }

    pub fn q_sequence(&self) -> &[Arc<TypeIFunction>] {
        &self.q
    }

    /// Two-eigenvalue CD ingredients; `None` unless `p = 2`.
    pub fn cd_parts(&self) -> Option<&CdParts> {
        self.parts.as_ref()
    }

    fn half_v(&self, x: f64, y: f64) -> f64 {
        let v = self.ensemble().potential.eval(x) + self.ensemble().potential.eval(y);
        0.5 * v
    }

    /// The n-term sum.
    pub fn kernel_sum(&self, x: f64, y: f64) -> f64 {
        let shift = self.half_v(x, y);
        self.p
            .iter()
            .zip(&self.q)
            .map(|(p, q)| p.eval(x) * q.eval_shifted(y, shift))
            .sum()
    }

    /// The Christoffel-Darboux form: three terms for two eigenvalues, the
    /// classical two-term quotient for one.
    pub fn kernel_cd(&self, x: f64, y: f64) -> Result<f64> {
        let terms = self.cd.as_ref().ok_or_else(|| {
            Error::Unsupported("Christoffel-Darboux requires exactly two distinct eigenvalues".into())
        })?;
        Ok(eval_quotient(terms, x, y, self.half_v(x, y)))
    }

    /// Four-term intermediate form built from recurrence coefficients along
    /// the extended ordering. Needs two eigenvalues and an ordering ending
    /// in `(a_1, a_2)`.
    #[doc(hidden)]
    pub fn kernel_four_term(&self, x: f64, y: f64) -> Result<f64> {
        let terms = self.four_term_parts()?;
        Ok(eval_quotient(&terms, x, y, self.half_v(x, y)))
    }

    fn four_term_parts(&self) -> Result<Vec<CdTerm>> {
        let ens = self.ensemble();
        let n = ens.n();
        if ens.p() != 2 {
            return Err(Error::Unsupported(
                "four-term form requires exactly two distinct eigenvalues".into(),
            ));
        }
        if ens.ordering.slots()[n - 2..] != [0, 1] {
            return Err(Error::OrderingMismatch(
                "four-term form needs an ordering ending in (a_1, a_2)".into(),
            ));
        }
        let m = &self.mops;
        Ok(vec![
            CdTerm::new(1.0, &m.p_seq(n)?.poly, m.q_seq(n - 1)?),
            CdTerm::new(-m.recurrence_c(n - 2, n)?.value, &m.p_seq(n - 2)?.poly, m.q_seq(n)?),
            CdTerm::new(-m.recurrence_c(n - 1, n)?.value, &m.p_seq(n - 1)?.poly, m.q_seq(n)?),
            CdTerm::new(
                -m.recurrence_c(n - 1, n + 1)?.value,
                &m.p_seq(n - 1)?.poly,
                m.q_seq(n + 1)?,
            ),
        ])
    }

    /// `R_m = det(K_n(lambda_j, lambda_k))`.
    pub fn correlation(&self, points: &[f64]) -> f64 {
        let m = points.len();
        let mat = DMatrix::from_fn(m, m, |j, k| self.kernel_sum(points[j], points[k]));
        linalg::determinant(&mat)
    }

    fn truncation(&self) -> f64 {
        let ens = self.ensemble();
        truncation_bound(&ens.potential, ens.spectrum.abs_max(), 2 * self.n())
    }

    /// `int K_n(x, x) dx`.
    pub fn trace_check(&self) -> Result<f64> {
        let l = self.truncation();
        integrate_converged(|x| self.kernel_sum(x, x), -l, l, QUAD_TOL)
    }

    /// `|int K_n(x, y) K_n(y, z) dy - K_n(x, z)|`.
    pub fn reproducing_check(&self, x: f64, z: f64) -> Result<f64> {
        let l = self.truncation();
        let v = integrate_converged(
            |y| self.kernel_sum(x, y) * self.kernel_sum(y, z),
            -l,
            l,
            QUAD_TOL,
        )?;
        Ok((v - self.kernel_sum(x, z)).abs())
    }

    /// `(x, y, K)` over the grid, evaluated in parallel.
    pub fn grid_values(&self, grid: &Grid) -> Vec<(f64, f64, f64)> {
        grid.pairs()
            .into_par_iter()
            .map(|(x, y)| (x, y, self.kernel_sum(x, y)))
            .collect()
    }

    /// Max of `|K_cd - K_sum| / (1 + |K_sum|)` over the grid.
    pub fn cd_deviation(&self, grid: &Grid) -> Result<f64> {
        grid.pairs()
            .into_par_iter()
            .map(|(x, y)| {
                let k = self.kernel_sum(x, y);
                Ok((self.kernel_cd(x, y)? - k).abs() / (1.0 + k.abs()))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

fn eval_quotient(terms: &[CdTerm], x: f64, y: f64, shift: f64) -> f64 {
    let qy: Vec<f64> = terms.iter().map(|t| t.q.eval_shifted(y, shift)).collect();
    let d = x - y;
    if d.abs() < DIAGONAL_GAP {
        // N(y, y) = 0, so N(x, y) / (x - y) = N_x(y, y) + N_xx(y, y) (x - y) / 2 + ...
        let first: f64 = terms.iter().zip(&qy).map(|(t, q)| t.scale * t.dp.eval(y) * q).sum();
        let second: f64 = terms.iter().zip(&qy).map(|(t, q)| t.scale * t.d2p.eval(y) * q).sum();
        first + 0.5 * second * d
    } else {
        let num: f64 = terms.iter().zip(&qy).map(|(t, q)| t.scale * t.p.eval(x) * q).sum();
        num / d
    }
}

fn classical_terms(mops: &Mops) -> Result<Vec<CdTerm>> {
    let n = mops.ensemble().n();
    let a = mops.ensemble().spectrum.eigenvalue(0);
    let top = mops.solve_p(&MultiIndex(vec![n]))?;
    let prev = mops.solve_p(&MultiIndex(vec![n - 1]))?;
    let inv_h = 1.0 / mops.h_number(&MultiIndex(vec![n - 1]), 0)?;
    let as_type1 = |p: &Polynomial| {
        Arc::new(TypeIFunction {
            index: MultiIndex(vec![n]),
            parts: vec![p.scaled(inv_h)],
            exponents: vec![a],
            residual: 0.0,
            condition: 1.0,
        })
    };
    Ok(vec![
        CdTerm::new(1.0, &top.poly, as_type1(&prev.poly)),
        CdTerm::new(-1.0, &prev.poly, as_type1(&top.poly)),
    ])
}

fn two_eigenvalue_parts(mops: &Mops) -> Result<CdParts> {
    let mult = mops.ensemble().spectrum.multiplicities();
    let (n1, n2) = (mult.get(0), mult.get(1));
    Ok(CdParts {
        p_top: mops.p2(n1, n2)?,
        p_first: mops.p2(n1 - 1, n2)?,
        p_second: mops.p2(n1, n2 - 1)?,
        q_top: mops.q2(n1, n2)?,
        q_first: mops.q2(n1 + 1, n2)?,
        q_second: mops.q2(n1, n2 + 1)?,
        ratio_first: mops.h2(n1, n2, 0)? / mops.h2(n1 - 1, n2, 0)?,
        ratio_second: mops.h2(n1, n2, 1)? / mops.h2(n1, n2 - 1, 1)?,
    })
}

/// Max `|K_1 - K_2|` over the grid.
pub fn ordering_invariance(b1: &KernelBundle, b2: &KernelBundle, grid: &Grid) -> f64 {
    grid.pairs()
        .into_par_iter()
        .map(|(x, y)| (b1.kernel_sum(x, y) - b2.kernel_sum(x, y)).abs())
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Potential, SourceSpectrum};

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn bundle(pot: Potential, pairs: Vec<(f64, usize)>) -> KernelBundle {
        let ens = Ensemble::new(pot, SourceSpectrum::new(pairs).unwrap(), None).unwrap();
        KernelBundle::new(ens).unwrap()
    }

    #[test]
    fn single_gaussian() {
        let b = bundle(Potential::gaussian(), vec![(0.0, 1)]);
        assert!((b.kernel_sum(0.0, 0.0) - INV_SQRT_2PI).abs() < 1e-14);
        let (x, y) = (0.7f64, -1.2f64);
        let want = (-(x * x + y * y) / 4.0).exp() * INV_SQRT_2PI;
        assert!((b.kernel_sum(x, y) - want).abs() < 1e-14);
        assert!((b.correlation(&[x]) - (-x * x / 2.0).exp() * INV_SQRT_2PI).abs() < 1e-14);
        assert!((b.trace_check().unwrap() - 1.0).abs() < 1e-10);
        assert!(b.reproducing_check(0.0, 0.0).unwrap() < 1e-10);

        let b = bundle(Potential::gaussian(), vec![(0.0, 2)]);
        assert!((b.kernel_sum(0.0, 0.0) - INV_SQRT_2PI).abs() < 1e-14);
    }

    #[test]
    fn not_symmetric_for_two_eigenvalues() {
        let b = bundle(Potential::gaussian(), vec![(-1.0, 1), (1.0, 1)]);
        assert!((b.kernel_sum(0.5, -0.3) - b.kernel_sum(-0.3, 0.5)).abs() > 1e-3);
        // even V and a symmetric spectrum: K(x, y) = K(-x, -y)
        assert!((b.kernel_sum(0.5, -0.5) - b.kernel_sum(-0.5, 0.5)).abs() < 1e-14);
    }

    #[test]
    fn cd_matches_sum() {
        for pairs in [
            vec![(-1.0, 1), (1.0, 1)],
            vec![(-1.0, 1), (1.0, 2)],
            vec![(-0.5, 2), (1.5, 3)],
        ] {
            let b = bundle(Potential::gaussian(), pairs);
            let grid = Grid::standard(b.ensemble());
            assert!(b.cd_deviation(&grid).unwrap() < 1e-8);
            for x in [-2.0, 0.0, 0.3, 1.7] {
                let k = b.kernel_sum(x, x);
                assert!((b.kernel_cd(x, x).unwrap() - k).abs() < 1e-7 * (1.0 + k.abs()));
                let near = b.kernel_cd(x + 3e-7, x).unwrap();
                assert!((near - b.kernel_sum(x + 3e-7, x)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn four_term_form() {
        let b = bundle(Potential::gaussian(), vec![(-1.0, 2), (1.0, 2)]);
        for (x, y) in Grid::new(-3.0, 3.0, 7).unwrap().pairs() {
            let k = b.kernel_sum(x, y);
            assert!((b.kernel_four_term(x, y).unwrap() - k).abs() < 1e-8 * (1.0 + k.abs()));
        }
        let other = b.ensemble().with_ordering(vec![1, 0, 1, 0]).unwrap();
        let b = KernelBundle::new(other).unwrap();
        assert!(b.kernel_four_term(0.0, 1.0).is_err());
    }

    #[test]
    fn classical_reduction() {
        let b = bundle(Potential::gaussian(), vec![(0.0, 3)]);
        let grid = Grid::new(-4.0, 4.0, 11).unwrap();
        assert!(b.cd_deviation(&grid).unwrap() < 1e-10);
        let b = bundle(Potential::gaussian(), vec![(0.8, 3)]);
        assert!(b.cd_deviation(&grid).unwrap() < 1e-10);
    }

    #[test]
    fn three_eigenvalues_have_no_cd_form() {
        let b = bundle(Potential::gaussian(), vec![(-1.0, 1), (0.0, 1), (1.0, 1)]);
        let err = b.kernel_cd(0.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("exactly two distinct eigenvalues"));
        assert!((b.trace_check().unwrap() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn identities() {
        let b = bundle(Potential::gaussian(), vec![(-1.0, 1), (1.0, 2)]);
        assert!((b.trace_check().unwrap() - 3.0).abs() < 3e-7);
        let k = b.kernel_sum(1.0, -1.0);
        assert!(b.reproducing_check(1.0, -1.0).unwrap() < 1e-7 * (1.0 + k.abs()));
        let b = bundle(Potential::quartic(), vec![(-0.5, 1), (0.5, 1)]);
        assert!((b.trace_check().unwrap() - 2.0).abs() < 2e-7);
        assert!(b.correlation(&[0.4, 0.4]).abs() < 1e-10);
    }

    #[test]
    fn ordering_does_not_change_kernel() {
        let ens = Ensemble::new(
            Potential::gaussian(),
            SourceSpectrum::new(vec![(-1.0, 2), (1.0, 1)]).unwrap(),
            Some(&[-1.0, -1.0, 1.0]),
        )
        .unwrap();
        let b1 = KernelBundle::new(ens.clone()).unwrap();
        let b2 = KernelBundle::new(ens.with_ordering(vec![0, 1, 0]).unwrap()).unwrap();
        let grid = Grid::standard(&ens);
        assert!(ordering_invariance(&b1, &b2, &grid) < 1e-8);
        assert_eq!(ordering_invariance(&b1, &b1, &grid), 0.0);
        let diff = b1.p_sequence()[2].poly.max_diff(&b2.p_sequence()[2].poly);
        assert!(diff > 1e-3);
    }

    #[test]
    fn grid_parsing() {
        let g = Grid::parse("-4:4:21").unwrap();
        assert_eq!(g.points().len(), 21);
        assert_eq!(g.points()[10], 0.0);
        assert!(Grid::parse("1:0:5").is_err());
        assert!(Grid::parse("a:b").is_err());
    }
}
