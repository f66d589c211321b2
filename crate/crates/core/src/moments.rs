//! Moment integrals `m_k(a) = int x^k exp(-(V(x) - a x)) dx` and the moment
//! matrices built from them.
//!
//! For `V(x) = x^2/2` the moments have a closed-form recursion; any other
//! potential goes through composite Gauss-Legendre quadrature. The two
//! paths are checked against each other in the tests.

use std::io::Write;
use std::sync::RwLock;

use nalgebra::DMatrix;

use crate::ensemble::{Ensemble, Potential, SourceSpectrum};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{self, QuadratureRule};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// `int x^k exp(-(x^2/2 - a x)) dx` via `M_k = a M_{k-1} + (k-1) M_{k-2}`.
pub fn gaussian_raw_moment(a: f64, k: usize) -> f64 {
    gaussian_raw_moments(a, k + 1)[k]
}

/// First `len` Gaussian raw moments.
pub fn gaussian_raw_moments(a: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let m = match k {
            0 => SQRT_2PI * (0.5 * a * a).exp(),
            1 => a * out[0],
            _ => a * out[k - 1] + (k as f64 - 1.0) * out[k - 2],
        };
        out.push(m);
    }
    out
}

/// `int_{-L}^{L} x^k exp(-V(x) + a x) dx` on the given rule.
pub fn quad_moment(pot: &Potential, a: f64, k: usize, rule: &QuadratureRule) -> f64 {
    rule.integrate(|x| x.powi(k as i32) * (a * x - pot.eval(x)).exp())
}

/// [`quad_moment`] on `[-L, L]` with `L` from [`quadrature::truncation_bound`]
/// and panel doubling until the relative change is below 1e-12.
pub fn quad_moment_converged(pot: &Potential, a: f64, k: usize) -> Result<f64> {
    let l = quadrature::truncation_bound(pot, a, k);
    quadrature::integrate_converged(
        |x| x.powi(k as i32) * (a * x - pot.eval(x)).exp(),
        -l,
        l,
        quadrature::DEFAULT_REL_TOL,
    )
}

#[derive(Default, Debug)]
struct SlotMoments {
    raw: Vec<f64>,
    /// `int |x|^k w(x) dx`, or an upper bound of it; used as a rounding scale.
    abs: Vec<f64>,
}

/// Lazily extended table of raw moments, one row per distinct eigenvalue.
///
/// Rows only ever grow; an entry once stored is never replaced, and every
/// writer computes the same value, so concurrent readers see a consistent
/// table.
#[derive(Debug)]
pub struct MomentCache {
    potential: Potential,
    eigenvalues: Vec<f64>,
    slots: Vec<RwLock<SlotMoments>>,
}

const MIN_BATCH: usize = 24;

impl MomentCache {
    pub fn new(potential: Potential, eigenvalues: Vec<f64>) -> Self {
        let slots = eigenvalues.iter().map(|_| RwLock::default()).collect();
        Self {
            potential,
            eigenvalues,
            slots,
        }
    }

    pub fn for_ensemble(ens: &Ensemble) -> Self {
        Self::new(ens.potential.clone(), ens.spectrum.eigenvalues())
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn eigenvalue(&self, slot: usize) -> f64 {
        self.eigenvalues[slot]
    }

    pub fn slot_count(&self) -> usize {
        self.eigenvalues.len()
    }

    fn compute(&self, slot: usize, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = self.eigenvalues[slot];
        if self.potential.is_gaussian() {
            let raw = gaussian_raw_moments(a, len + 1);
            let abs = (0..len)
                .map(|k| {
                    if k % 2 == 0 {
                        raw[k]
                    } else {
                        0.5 * (raw[k - 1] + raw[k + 1])
                    }
                })
                .collect();
            return Ok((raw[..len].to_vec(), abs));
        }
        let l = quadrature::truncation_bound(&self.potential, a, len);
        let pot = &self.potential;
        quadrature::integrate_vec_converged(
            |x, out| {
                let mut v = (a * x - pot.eval(x)).exp();
                for o in out.iter_mut() {
                    *o = v;
                    v *= x;
                }
            },
            len,
            -l,
            l,
            quadrature::DEFAULT_REL_TOL,
        )
    }

    fn ensure(&self, slot: usize, len: usize) -> Result<()> {
        let cur = self.slots[slot].read().expect("moment cache poisoned").raw.len();
        if cur >= len {
            return Ok(());
        }
        let target = len.max(2 * cur).max(MIN_BATCH);
        let (raw, abs) = self.compute(slot, target)?;
        let mut guard = self.slots[slot].write().expect("moment cache poisoned");
        let have = guard.raw.len();
        if have < target {
            guard.raw.extend_from_slice(&raw[have..]);
            guard.abs.extend_from_slice(&abs[have..]);
        }
        Ok(())
    }

    pub fn raw(&self, slot: usize, k: usize) -> Result<f64> {
        self.ensure(slot, k + 1)?;
        Ok(self.slots[slot].read().expect("moment cache poisoned").raw[k])
    }

    pub fn abs(&self, slot: usize, k: usize) -> Result<f64> {
        self.ensure(slot, k + 1)?;
        Ok(self.slots[slot].read().expect("moment cache poisoned").abs[k])
    }

    /// Copies of the first `len` raw and absolute moments of a slot.
    pub fn moments(&self, slot: usize, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.ensure(slot, len)?;
        let g = self.slots[slot].read().expect("moment cache poisoned");
        Ok((g.raw[..len].to_vec(), g.abs[..len].to_vec()))
    }
}

/// Moments `m[j][k] = int x^k w_j(x) dx` for the block-ordered weight
/// functions `w_j(x) = x^{d_j - 1} exp(-(V(x) - a_i x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub entries: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    /// CSV with header `row,power,value`; rows are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "power", "value"])?;
        for (j, row) in self.entries.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                w.serialize((j + 1, k, v))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Slot and power offset `d_j - 1` of each block-ordered weight function.
pub fn block_rows(spectrum: &SourceSpectrum) -> Vec<(usize, usize)> {
    (0..spectrum.p())
        .flat_map(|slot| (0..spectrum.multiplicity(slot)).map(move |d| (slot, d)))
        .collect()
}

pub fn moment_matrix(ens: &Ensemble, cache: &MomentCache, r: usize, c: usize) -> Result<MomentTable> {
    let rows = block_rows(&ens.spectrum);
    if r > rows.len() {
        return Err(Error::OutOfRange(format!("{r} rows requested, n = {}", rows.len())));
    }
    let entries = rows[..r]
        .iter()
        .map(|&(slot, d)| (0..c).map(|k| cache.raw(slot, k + d)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentTable { entries })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZTilde {
    /// `det (m_{jk})_{j=1..n, k=0..n-1}`.
    pub value: f64,
    /// `value * n_1! ... n_p!`.
    pub hat: f64,
    /// Equilibrated condition number of the moment matrix.
    pub condition: f64,
}

pub fn ztilde(table: &MomentTable, n: usize, multiplicities: &[usize]) -> Result<ZTilde> {
    if n == 0 {
        return Ok(ZTilde {
            value: 1.0,
            hat: 1.0,
            condition: 1.0,
        });
    }
    if table.rows() < n || table.cols() < n {
        return Err(Error::OutOfRange(format!(
            "table is {}x{}, need {n}x{n}",
            table.rows(),
            table.cols()
        )));
    }
    let m = DMatrix::from_fn(n, n, |j, k| table.entries[j][k]);
    let value = linalg::determinant(&m);
    let condition = linalg::scaled_condition(&m);
    if value == 0.0 || !condition.is_finite() || condition > 1e15 {
        return Err(Error::Singular);
    }
    let factorials: f64 = multiplicities
        .iter()
        .map(|&m| (1..=m).map(|i| i as f64).product::<f64>())
        .product();
    Ok(ZTilde {
        value,
        hat: value * factorials,
        condition,
    })
}
