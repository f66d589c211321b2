//! Correlation functions straight from the joint eigenvalue density
//! `prod e^{-V(x_j)} det(w_i(x_j)) prod_{i>j} (x_i - x_j)`, normalized and
//! marginalized by tensor-product quadrature. Only for `n <= 3`.

use rayon::prelude::*;

use crate::ensemble::{Ensemble, Potential};
use crate::error::{Error, Result};
use crate::quadrature::{truncation_bound, QuadratureRule, DEFAULT_ORDER};

pub const MAX_ORACLE_N: usize = 3;

const START_PANELS: usize = 4;
const MAX_PANELS: usize = 16;
const NORM_TOL: f64 = 1e-10;

type Column = [f64; MAX_ORACLE_N];

struct Table {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cols: Vec<Column>,
}

#[derive(Debug)]
pub struct JpdfOracle {
    n: usize,
    potential: Potential,
    /// `(a, d)` for each weight `x^d e^{a x}`.
    weights: Vec<(f64, i32)>,
    truncation: f64,
    panels: usize,
    norm: f64,
}

impl JpdfOracle {
    pub fn new(ens: &Ensemble) -> Result<Self> {
        let n = ens.n();
        if n > MAX_ORACLE_N {
            return Err(Error::Unsupported(format!(
                "joint-density oracle supports n <= {MAX_ORACLE_N}, got n = {n}"
            )));
        }
        let weights = ens
            .spectrum
            .pairs()
            .iter()
            .flat_map(|&(a, k)| (0..k as i32).map(move |d| (a, d)))
            .collect();
        let mut oracle = Self {
            n,
            potential: ens.potential.clone(),
            weights,
            truncation: truncation_bound(&ens.potential, ens.spectrum.abs_max(), 2 * n),
            panels: START_PANELS,
            norm: 0.0,
        };
        let mut prev = oracle.integrate(&oracle.table(START_PANELS), &[]);
        let mut panels = START_PANELS;
        loop {
            panels *= 2;
            let cur = oracle.integrate(&oracle.table(panels), &[]);
            if (cur - prev).abs() <= NORM_TOL * cur.abs() {
                oracle.panels = panels;
                oracle.norm = cur;
                return Ok(oracle);
            }
            if panels >= MAX_PANELS {
                return Err(Error::NonConvergence(
                    "joint-density normalization did not converge".into(),
                ));
            }
            prev = cur;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Integral of the unnormalized density over `R^n`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    fn column(&self, x: f64) -> Column {
        let v = self.potential.eval(x);
        let mut c = [0.0; MAX_ORACLE_N];
        for (slot, &(a, d)) in self.weights.iter().enumerate() {
            c[slot] = x.powi(d) * (a * x - v).exp();
        }
        c
    }

    fn table(&self, panels: usize) -> Table {
        let rule = QuadratureRule::symmetric(self.truncation, panels, DEFAULT_ORDER);
        let cols = rule.nodes.iter().map(|&x| self.column(x)).collect();
        Table {
            nodes: rule.nodes,
            weights: rule.weights,
            cols,
        }
    }

    fn density(&self, xs: &[f64; MAX_ORACLE_N], cols: &[Column; MAX_ORACLE_N]) -> f64 {
        // entry (i, j) = w_i(x_j) e^{-V(x_j)} = cols[j][i]
        let g = |i: usize, j: usize| cols[j][i];
        match self.n {
            1 => g(0, 0),
            2 => (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)) * (xs[1] - xs[0]),
            _ => {
                let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                    - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
                det * (xs[1] - xs[0]) * (xs[2] - xs[0]) * (xs[2] - xs[1])
            }
        }
    }

    fn recurse(
        &self,
        t: &Table,
        xs: &mut [f64; MAX_ORACLE_N],
        cols: &mut [Column; MAX_ORACLE_N],
        depth: usize,
    ) -> f64 {
        if depth == self.n {
            return self.density(xs, cols);
        }
        let mut s = 0.0;
        for k in 0..t.nodes.len() {
            xs[depth] = t.nodes[k];
            cols[depth] = t.cols[k];
            s += t.weights[k] * self.recurse(t, xs, cols, depth + 1);
        }
        s
    }

    /// Integrates the unnormalized density over the variables after
    /// `fixed`.
    fn integrate(&self, t: &Table, fixed: &[f64]) -> f64 {
        let mut xs = [0.0; MAX_ORACLE_N];
        let mut cols = [[0.0; MAX_ORACLE_N]; MAX_ORACLE_N];
        for (j, &x) in fixed.iter().enumerate() {
            xs[j] = x;
            cols[j] = self.column(x);
        }
        let depth = fixed.len();
        if self.n - depth < 2 {
            return self.recurse(t, &mut xs, &mut cols, depth);
        }
        (0..t.nodes.len())
            .into_par_iter()
            .map(|k| {
                let (mut xs, mut cols) = (xs, cols);
                xs[depth] = t.nodes[k];
                cols[depth] = t.cols[k];
                t.weights[k] * self.recurse(t, &mut xs, &mut cols, depth + 1)
            })
            .sum()
    }

    /// `R_m(points) = n!/(n-m)! int p(points, rest) d(rest)`.
    pub fn r_m(&self, points: &[f64]) -> Result<f64> {
        let m = points.len();
        if m == 0 || m > self.n {
            return Err(Error::OutOfRange(format!(
                "R_m needs 1 <= m <= n = {}, got m = {m}",
                self.n
            )));
        }
        let falling: f64 = ((self.n - m + 1)..=self.n).map(|k| k as f64).product();
        let t = self.table(self.panels);
        Ok(falling * self.integrate(&t, points) / self.norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::SourceSpectrum;
    use crate::kernel::KernelBundle;

    fn ens(pot: Potential, pairs: Vec<(f64, usize)>) -> Ensemble {
        Ensemble::new(pot, SourceSpectrum::new(pairs).unwrap(), None).unwrap()
    }

    #[test]
    fn scalar_case() {
        let e = ens(Potential::quartic(), vec![(0.6, 1)]);
        let o = JpdfOracle::new(&e).unwrap();
        let b = KernelBundle::new(e).unwrap();
        for x in [-1.0, 0.0, 0.4, 1.3] {
            assert!((o.r_m(&[x]).unwrap() - b.correlation(&[x])).abs() < 1e-8);
        }
    }

    #[test]
    fn two_point_matches_kernel() {
        let e = ens(Potential::gaussian(), vec![(-1.0, 1), (1.0, 1)]);
        let o = JpdfOracle::new(&e).unwrap();
        let b = KernelBundle::new(e).unwrap();
        let r1 = b.correlation(&[0.7]);
        assert!((o.r_m(&[0.7]).unwrap() - r1).abs() < 1e-6 * (1.0 + r1));
        let r2 = b.correlation(&[0.3, -0.3]);
        assert!((o.r_m(&[0.3, -0.3]).unwrap() - r2).abs() < 1e-6 * (1.0 + r2));
        assert!(o.r_m(&[0.0, 0.1, 0.2]).is_err());
    }

    #[test]
    fn refuses_large_n() {
        let e = ens(Potential::gaussian(), vec![(-1.0, 2), (1.0, 2)]);
        assert!(matches!(JpdfOracle::new(&e), Err(Error::Unsupported(_))));
    }
}
