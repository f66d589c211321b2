//! 3x3 Riemann-Hilbert matrices `Y` (type II side) and `X` (type I side)
//! for two eigenvalues, with Cauchy transforms done by quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::ensemble::Potential;
use crate::error::{Error, Result};
use crate::kernel::DIAGONAL_GAP;
use crate::mops::{Mops, TypeIFunction};
use crate::poly::Polynomial;
use crate::quadrature::{truncation_bound, QuadratureRule, DEFAULT_ORDER, DEFAULT_PANELS};

pub type ComplexMatrix3 = Matrix3<Complex64>;

/// Smallest `|Im z|` accepted by the Cauchy transform.
pub const AXIS_FLOOR: f64 = 1e-8;
/// Below this `|Im z|` panels are refined geometrically toward `Re z`.
pub const NEAR_AXIS: f64 = 0.1;
/// Offsets used for boundary-value diagnostics.
pub const EPS_LADDER: [f64; 7] = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4];

const CAUCHY_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 6;

fn two_pi_i() -> Complex64 {
    Complex64::new(0.0, 2.0 * PI)
}

/// `f(s) = sum_i p_i(s) exp(a_i s - V(s))`.
#[derive(Clone, Debug)]
pub struct WeightedFunction {
    pub potential: Potential,
    pub terms: Vec<(Polynomial, f64)>,
}

impl WeightedFunction {
    pub fn eval(&self, s: f64) -> f64 {
        let v = self.potential.eval(s);
        self.terms
            .iter()
            .filter(|(p, _)| !p.is_empty())
            .map(|(p, a)| p.eval(s) * (a * s - v).exp())
            .sum()
    }

    fn truncation(&self) -> f64 {
        let a = self.terms.iter().fold(0.0f64, |m, (_, a)| m.max(a.abs()));
        let deg = self.terms.iter().filter_map(|(p, _)| p.degree()).max().unwrap_or(0);
        truncation_bound(&self.potential, a, deg + 1)
    }
}

/// Value of a Cauchy transform at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchySample {
    pub z: Complex64,
    pub value: Complex64,
}

fn breakpoints(l: f64, x0: f64, eta: f64, subtract: bool) -> Vec<f64> {
    let h = 2.0 * l / DEFAULT_PANELS as f64;
    let mut pts: Vec<f64> = (0..=DEFAULT_PANELS).map(|i| -l + h * i as f64).collect();
    if subtract && eta < NEAR_AXIS {
        pts.push(x0);
        let mut d = 0.5 * eta;
        while d < h {
            for p in [x0 - d, x0 + d] {
                if p.abs() < l {
                    pts.push(p);
                }
            }
            d *= 2.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * l);
    pts
}

fn bisect(pts: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * pts.len());
    for w in pts.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(pts.last());
    out
}

/// `Cf(z) = (1 / 2 pi i) int f(s) / (s - z) ds`.
///
/// `f(Re z)` is subtracted from the integrand and its contribution over
/// the truncation interval added back in closed form.
pub fn cauchy_transform(f: &WeightedFunction, z: Complex64) -> Result<CauchySample> {
    let eta = z.im.abs();
    if eta < AXIS_FLOOR || !z.re.is_finite() {
        return Err(Error::OutOfRange(format!(
            "Cauchy transform too close to the real axis: Im z = {:e}",
            z.im
        )));
    }
    let l = f.truncation();
    let x0 = z.re;
    let subtract = x0.abs() < l;
    let f0 = if subtract { f.eval(x0) } else { 0.0 };
    let integrate = |pts: &[f64]| {
        let rule = QuadratureRule::from_breakpoints(pts, DEFAULT_ORDER);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = w * (f.eval(s) - f0) / (s - z);
            sum += v;
            scale += v.norm();
        }
        (sum, scale)
    };
    let mut pts = breakpoints(l, x0, eta, subtract);
    let (mut prev, _) = integrate(&pts);
    for _ in 0..MAX_BISECTIONS {
        pts = bisect(&pts);
        let (cur, scale) = integrate(&pts);
        if (cur - prev).norm() <= CAUCHY_TOL * scale.max(f64::MIN_POSITIVE) {
            let mut total = cur;
            if subtract {
                total += f0 * ((l - z).ln() - (-l - z).ln());
            }
            return Ok(CauchySample {
                z,
                value: total / two_pi_i(),
            });
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!("Cauchy transform at {z} did not converge")))
}

/// Max-absolute-entry norm.
pub fn max_norm(m: &ComplexMatrix3) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Ingredients of `Y` and `X` for one multi-index `(n1, n2)`.
#[derive(Debug)]
pub struct RhSolver {
    mops: Arc<Mops>,
    n1: usize,
    n2: usize,
    exponents: [f64; 2],
    /// `P_{n1,n2}, P_{n1-1,n2}, P_{n1,n2-1}`.
    p_rows: [Polynomial; 3],
    /// `1, c_1, c_2`.
    y_consts: [Complex64; 3],
    /// `Q_{n1,n2}, Q_{n1+1,n2}, Q_{n1,n2+1}`.
    q_rows: [Arc<TypeIFunction>; 3],
    /// `2 pi i, k_1, k_2`.
    x_consts: [Complex64; 3],
}

impl RhSolver {
    pub fn new(mops: Arc<Mops>, n1: usize, n2: usize) -> Result<Self> {
        if mops.ensemble().p() != 2 {
            return Err(Error::Unsupported(
                "Riemann-Hilbert matrices require exactly two distinct eigenvalues".into(),
            ));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::OutOfRange(format!(
                "Riemann-Hilbert matrices need n1, n2 >= 1, got ({n1},{n2})"
            )));
        }
        let c1 = -two_pi_i() / mops.h2(n1 - 1, n2, 0)?;
        let c2 = -two_pi_i() / mops.h2(n1, n2 - 1, 1)?;
        let k1 = mops.h2(n1, n2, 0)?;
        let k2 = mops.h2(n1, n2, 1)?;
        let spec = &mops.ensemble().spectrum;
        Ok(Self {
            exponents: [spec.eigenvalue(0), spec.eigenvalue(1)],
            p_rows: [
                mops.p2(n1, n2)?.poly.clone(),
                mops.p2(n1 - 1, n2)?.poly.clone(),
                mops.p2(n1, n2 - 1)?.poly.clone(),
            ],
            y_consts: [Complex64::new(1.0, 0.0), c1, c2],
            q_rows: [mops.q2(n1, n2)?, mops.q2(n1 + 1, n2)?, mops.q2(n1, n2 + 1)?],
            x_consts: [two_pi_i(), k1.into(), k2.into()],
            mops,
            n1,
            n2,
        })
    }

    /// Uses the ensemble's multiplicities as `(n1, n2)`.
    pub fn for_ensemble(mops: Arc<Mops>) -> Result<Self> {
        let m = mops.ensemble().spectrum.multiplicities();
        if m.p() != 2 {
            return Err(Error::Unsupported(
                "Riemann-Hilbert matrices require exactly two distinct eigenvalues".into(),
            ));
        }
        Self::new(mops, m.get(0), m.get(1))
    }

    pub fn indices(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    fn potential(&self) -> &Potential {
        &self.mops.ensemble().potential
    }

    fn weighted(&self, terms: Vec<(Polynomial, f64)>) -> WeightedFunction {
        WeightedFunction {
            potential: self.potential().clone(),
            terms,
        }
    }

    fn weight(&self, slot: usize, x: f64) -> f64 {
        (self.exponents[slot] * x - self.potential().eval(x)).exp()
    }

    pub fn assemble_y(&self, z: Complex64) -> Result<ComplexMatrix3> {
        let mut y = ComplexMatrix3::zeros();
        for (r, p) in self.p_rows.iter().enumerate() {
            let c = self.y_consts[r];
            y[(r, 0)] = c * p.eval_complex(z);
            for slot in 0..2 {
                let f = self.weighted(vec![(p.clone(), self.exponents[slot])]);
                y[(r, slot + 1)] = c * cauchy_transform(&f, z)?.value;
            }
        }
        Ok(y)
    }

    pub fn assemble_x(&self, z: Complex64) -> Result<ComplexMatrix3> {
        let mut x = ComplexMatrix3::zeros();
        for (r, q) in self.q_rows.iter().enumerate() {
            let k = self.x_consts[r];
            let f = self.weighted(
                q.parts
                    .iter()
                    .cloned()
                    .zip(q.exponents.iter().copied())
                    .collect(),
            );
            x[(r, 0)] = -k * cauchy_transform(&f, z)?.value;
            x[(r, 1)] = k * q.part(0).eval_complex(z);
            x[(r, 2)] = k * q.part(1).eval_complex(z);
        }
        Ok(x)
    }

    /// `|det Y(z) - 1|`.
    pub fn det_residual(&self, z: Complex64) -> Result<f64> {
        Ok((self.assemble_y(z)?.determinant() - 1.0).norm())
    }

    /// `||X(z)^T Y(z) - I||`.
    pub fn duality_residual(&self, z: Complex64) -> Result<f64> {
        let prod = self.assemble_x(z)?.transpose() * self.assemble_y(z)?;
        Ok(max_norm(&(prod - ComplexMatrix3::identity())))
    }

    fn scaling(&self, z: Complex64, sign: i32) -> ComplexMatrix3 {
        let n = (self.n1 + self.n2) as i32;
        ComplexMatrix3::from_diagonal(&nalgebra::Vector3::new(
            z.powi(-sign * n),
            z.powi(sign * self.n1 as i32),
            z.powi(sign * self.n2 as i32),
        ))
    }

    /// `||Y(z) diag(z^-n, z^n1, z^n2) - I||`.
    pub fn asymptotic_residual_y(&self, z: Complex64) -> Result<f64> {
        let m = self.assemble_y(z)? * self.scaling(z, 1);
        Ok(max_norm(&(m - ComplexMatrix3::identity())))
    }

    /// `||X(z) diag(z^n, z^-n1, z^-n2) - I||`.
    pub fn asymptotic_residual_x(&self, z: Complex64) -> Result<f64> {
        let m = self.assemble_x(z)? * self.scaling(z, -1);
        Ok(max_norm(&(m - ComplexMatrix3::identity())))
    }

    /// `||Y(x + i eps) - Y(x - i eps) J(x)||` with the upper-triangular jump.
    pub fn jump_residual(&self, x: f64, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        let plus = self.assemble_y(Complex64::new(x, eps))?;
        let minus = self.assemble_y(Complex64::new(x, -eps))?;
        let mut j = ComplexMatrix3::identity();
        j[(0, 1)] = self.weight(0, x).into();
        j[(0, 2)] = self.weight(1, x).into();
        Ok(max_norm(&(plus - minus * j)))
    }

    /// Same for `X` with its lower-triangular jump.
    pub fn jump_residual_x(&self, x: f64, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        let plus = self.assemble_x(Complex64::new(x, eps))?;
        let minus = self.assemble_x(Complex64::new(x, -eps))?;
        let mut j = ComplexMatrix3::identity();
        j[(1, 0)] = (-self.weight(0, x)).into();
        j[(2, 0)] = (-self.weight(1, x)).into();
        Ok(max_norm(&(plus - minus * j)))
    }

    /// `(eps, residual)` along [`EPS_LADDER`].
    pub fn jump_ladder(&self, x: f64) -> Result<Vec<(f64, f64)>> {
        EPS_LADDER
            .iter()
            .map(|&e| Ok((e, self.jump_residual(x, e)?)))
            .collect()
    }

    /// Entries 21 and 31 of `X^T(y) Y(x)` from the polynomial columns
    /// only; `px` evaluates a row polynomial of `Y` at `x`.
    fn contraction(&self, px: impl Fn(&Polynomial) -> Complex64, y: Complex64) -> [Complex64; 2] {
        let col: Vec<Complex64> = self
            .p_rows
            .iter()
            .zip(&self.y_consts)
            .map(|(p, c)| c * px(p))
            .collect();
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for (slot, o) in out.iter_mut().enumerate() {
            *o = self
                .q_rows
                .iter()
                .zip(&self.x_consts)
                .zip(&col)
                .map(|((q, k), c)| k * q.part(slot).eval_complex(y) * c)
                .sum();
        }
        out
    }

    /// `[Y^{-1}(y) Y(x)]_{21}` and `_{31}` at complex points by polynomial
    /// contraction.
    pub fn product_entries(&self, x: Complex64, y: Complex64) -> [Complex64; 2] {
        self.contraction(|p| p.eval_complex(x), y)
    }

    /// The same entries from a numerically inverted `Y`.
    pub fn product_entries_inverted(&self, x: Complex64, y: Complex64) -> Result<[Complex64; 2]> {
        let inv = self.assemble_y(y)?.try_inverse().ok_or(Error::Singular)?;
        let prod = inv * self.assemble_y(x)?;
        Ok([prod[(1, 0)], prod[(2, 0)]])
    }

    /// Kernel in the compact Riemann-Hilbert form at real arguments.
    pub fn kernel_from_rh(&self, x: f64, y: f64) -> f64 {
        let shift = 0.5 * (self.potential().eval(x) + self.potential().eval(y));
        let yc = Complex64::new(y, 0.0);
        let combine = |e: [Complex64; 2]| -> Complex64 {
            e.iter()
                .zip(&self.exponents)
                .map(|(v, a)| v * (a * y - shift).exp())
                .sum::<Complex64>()
                / two_pi_i()
        };
        let d = x - y;
        let value = if d.abs() < DIAGONAL_GAP {
            let first = combine(self.contraction(|p| p.derivative().eval(y).into(), yc));
            let second = combine(self.contraction(|p| p.derivative().derivative().eval(y).into(), yc));
            first + 0.5 * second * d
        } else {
            combine(self.contraction(|p| p.eval(x).into(), yc)) / d
        };
        value.re
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps must lie in [1e-6, 1e-2], got {eps:e}")));
    }
    Ok(())
}
