//! Named identity checks with overridable tolerances.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, Ordering};
use crate::error::{Error, Result};
use crate::kernel::{Grid, KernelBundle};
use crate::mops::Mops;
use crate::rhp::{RhSolver, EPS_LADDER};
use crate::validation::mc::{self, DensityBin, McConfig, McReport};
use crate::validation::JpdfOracle;

const DEFAULTS: &[(&str, f64)] = &[
    ("moments.condition", 1e12),
    ("mops.residual_p", 1e-8),
    ("mops.residual_q", 1e-8),
    ("mops.biorthogonality", 1e-8),
    ("mops.leading", 1e-8),
    ("kernel.trace", 1e-7),
    ("kernel.reproducing", 1e-7),
    ("kernel.r1_nonnegative", 1e-10),
    ("cd.agreement", 1e-8),
    ("cd.diagonal", 1e-7),
    ("cd.four_term", 1e-8),
    ("cd.top_coefficient", 1e-10),
    ("cd.structural_zeros", 1e-10),
    ("cd.c_formulas", 1e-8),
    ("cd.ladder", 1e-8),
    ("rh.duality", 1e-6),
    ("rh.det", 1e-6),
    ("rh.asymptotic_y", 1.0),
    ("rh.asymptotic_x", 1.0),
    ("rh.jump", 1e-3),
    ("rh.jump_trend", 1.2),
    ("rh.kernel", 1e-8),
    ("rh.inverted", 1e-5),
    ("mc.charpoly", 4.0),
    ("mc.density", 4.0),
    ("oracle.r1", 1e-6),
    ("oracle.r2", 1e-6),
];

/// Off-axis points for duality and unimodularity.
pub const OFF_AXIS: [(f64, f64); 3] = [(0.0, 2.0), (1.0, 1.0), (-3.0, -0.5)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Default for Tolerances {
    fn default() -> Self {
        Self(DEFAULTS.iter().map(|&(k, v)| (k.to_string(), v)).collect())
    }
}

impl Tolerances {
    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }

    /// Applies a `NAME=VALUE` override.
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("tolerance must be NAME=VALUE, got {spec:?}")))?;
        let name = name.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad tolerance value in {spec:?}")))?;
        match self.0.get_mut(name) {
            Some(v) if value.is_finite() && value > 0.0 => {
                *v = value;
                Ok(())
            }
            Some(_) => Err(Error::Config(format!("tolerance {name} must be positive"))),
            None => Err(Error::Config(format!("unknown tolerance {name:?}"))),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// Accumulates checks against a tolerance table.
#[derive(Debug)]
pub struct Suite<'a> {
    tol: &'a Tolerances,
    pub checks: Vec<Check>,
}

impl<'a> Suite<'a> {
    pub fn new(tol: &'a Tolerances) -> Self {
        Self {
            tol,
            checks: Vec::new(),
        }
    }

    pub fn record(&mut self, name: &str, value: f64) {
        let tolerance = self.tol.get(name);
        self.checks.push(Check {
            check: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.check.as_str())
            .collect()
    }
}

/// Points spread over the support, used for pointwise comparisons.
pub fn probe_points(ens: &Ensemble, count: usize) -> Vec<f64> {
    let (lo, hi) = (ens.spectrum.a_min() - 2.5, ens.spectrum.a_max() + 2.5);
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
        .collect()
}

/// Five `(x, z)` pairs around the spectrum.
pub fn probe_pairs(ens: &Ensemble) -> Vec<(f64, f64)> {
    let (a, b) = (ens.spectrum.a_min(), ens.spectrum.a_max());
    let c = 0.5 * (a + b);
    vec![
        (c, c),
        (c + 1.0, c - 1.0),
        (c - 0.5, c + 0.8),
        (a, b),
        (b + 0.7, a - 1.3),
    ]
}

pub fn mops_checks(suite: &mut Suite, mops: &Mops) -> Result<()> {
    let ens = mops.ensemble();
    let n = ens.n();
    let mut res_p: f64 = 0.0;
    let mut res_q: f64 = 0.0;
    for k in 0..=n {
        res_p = res_p.max(mops.solve_p(&ens.prefix_counts(k)?)?.residual);
        if k > 0 {
            res_q = res_q.max(mops.solve_q(&ens.prefix_counts(k)?)?.residual);
        }
    }
    suite.record("mops.residual_p", res_p);
    suite.record("mops.residual_q", res_q);
    let mut bio: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            bio = bio.max(mops.biorthogonality(j, k)?.scaled_error(target));
        }
    }
    suite.record("mops.biorthogonality", bio);
    let mut lead: f64 = 0.0;
    for k in 1..=n {
        let idx = ens.prefix_counts(k)?;
        for slot in 0..ens.p() {
            match mops.leading_type1(&idx, slot) {
                Ok(Some(lc)) => lead = lead.max(lc.rel_error()),
                Ok(None) => {}
                Err(Error::Consistency(_)) => lead = f64::INFINITY,
                Err(e) => return Err(e),
            }
        }
    }
    suite.record("mops.leading", lead);
    Ok(())
}

pub fn kernel_checks(suite: &mut Suite, bundle: &KernelBundle, grid: &Grid) -> Result<()> {
    let n = bundle.n() as f64;
    suite.record("kernel.trace", (bundle.trace_check()? - n).abs() / n);
    let mut rep: f64 = 0.0;
    for (x, z) in probe_pairs(bundle.ensemble()) {
        let k = bundle.kernel_sum(x, z);
        rep = rep.max(bundle.reproducing_check(x, z)? / (1.0 + k.abs()));
    }
    suite.record("kernel.reproducing", rep);
    let dense = Grid::new(grid.lo, grid.hi, 20 * grid.steps)?;
    let min_r1 = dense
        .points()
        .iter()
        .map(|&x| bundle.correlation(&[x]))
        .fold(f64::INFINITY, f64::min);
    suite.record("kernel.r1_nonnegative", (-min_r1).max(0.0));
    Ok(())
}

fn with_tail_ordering(mops: &Arc<Mops>) -> Result<Arc<Mops>> {
    let ens = mops.ensemble();
    let n = ens.n();
    if ens.ordering.slots()[n - 2..] == [0, 1] {
        return Ok(mops.clone());
    }
    let slots = Ordering::canonical(&ens.spectrum).slots().to_vec();
    Ok(Arc::new(Mops::new(ens.with_ordering(slots)?)))
}

/// Christoffel-Darboux agreement plus, for two eigenvalues, the recurrence
/// and ladder identities behind it.
pub fn cd_checks(suite: &mut Suite, bundle: &KernelBundle, grid: &Grid) -> Result<()> {
    suite.record("cd.agreement", bundle.cd_deviation(grid)?);
    let mut diag: f64 = 0.0;
    for x in grid.points() {
        let k = bundle.kernel_sum(x, x);
        diag = diag.max((bundle.kernel_cd(x, x)? - k).abs() / (1.0 + k.abs()));
    }
    suite.record("cd.diagonal", diag);
    if bundle.ensemble().p() != 2 {
        return Ok(());
    }
    let mops = bundle.mops();
    let ens = mops.ensemble();
    let n = ens.n();
    let ext = ens.extended_slots();

    suite.record("cd.top_coefficient", (mops.recurrence_c(n, n - 1)?.value - 1.0).abs());
    let mut zeros: f64 = 0.0;
    for j in 0..=n + 1 {
        for k in 0..=n + 1 {
            let part_a = j >= k + 2;
            let part_b = k >= j + 3 && {
                let window = &ext[j + 1..k];
                window.contains(&0) && window.contains(&1)
            };
            if part_a || part_b {
                zeros = zeros.max(mops.recurrence_c(j, k)?.value.abs());
            }
        }
    }
    suite.record("cd.structural_zeros", zeros);

    let tail = with_tail_ordering(mops)?;
    let tail_bundle = KernelBundle::from_mops(tail.clone())?;
    let mut four: f64 = 0.0;
    for (x, y) in grid.pairs() {
        let k = tail_bundle.kernel_sum(x, y);
        four = four.max((tail_bundle.kernel_four_term(x, y)? - k).abs() / (1.0 + k.abs()));
    }
    suite.record("cd.four_term", four);

    let mult = ens.spectrum.multiplicities();
    let (n1, n2) = (mult.get(0), mult.get(1));
    let h = |k1, k2, slot| tail.h2(k1, k2, slot);
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    let c_formulas = [
        rel(tail.recurrence_c(n - 2, n)?.value, h(n1, n2, 0)? / h(n1 - 1, n2 - 1, 0)?),
        rel(
            tail.recurrence_c(n - 1, n)?.value,
            h(n1, n2, 0)? / h(n1 - 1, n2, 0)? + h(n1, n2, 1)? / h(n1, n2 - 1, 1)?,
        ),
        rel(tail.recurrence_c(n - 1, n + 1)?.value, h(n1 + 1, n2, 1)? / h(n1, n2 - 1, 1)?),
    ];
    suite.record("cd.c_formulas", c_formulas.iter().copied().fold(0.0, f64::max));

    let mut ladder: f64 = 0.0;
    for k1 in 1..=n1 {
        for k2 in 1..=n2 {
            ladder = ladder
                .max(mops.ladder_check_p(k1, k2)?.max())
                .max(mops.ladder_check_q(k1, k2)?.max());
        }
    }
    suite.record("cd.ladder", ladder);
    Ok(())
}

/// Riemann-Hilbert identities at the ensemble's multiplicities.
pub fn rh_checks(suite: &mut Suite, solver: &RhSolver, bundle: &KernelBundle, grid: &Grid) -> Result<()> {
    let mut dual: f64 = 0.0;
    let mut det: f64 = 0.0;
    for (re, im) in OFF_AXIS {
        let z = Complex64::new(re, im);
        dual = dual.max(solver.duality_residual(z)?);
        det = det.max(solver.det_residual(z)?);
    }
    suite.record("rh.duality", dual);
    suite.record("rh.det", det);

    // R(50) against 2x the 1/|z| extrapolation of R(100)
    let dir = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
    let y = solver.asymptotic_residual_y(dir * 50.0)? / (4.0 * solver.asymptotic_residual_y(dir * 100.0)?);
    let x = solver.asymptotic_residual_x(dir * 50.0)? / (4.0 * solver.asymptotic_residual_x(dir * 100.0)?);
    suite.record("rh.asymptotic_y", y);
    suite.record("rh.asymptotic_x", x);

    let (mut last, mut trend) = (0.0f64, 0.0f64);
    // the polynomial column alone contributes 2 eps |c_r P_r'(x)|, so the
    // probes stay near the centre of the spectrum
    let c = 0.5 * (grid.lo + grid.hi);
    for x0 in [c - 0.5, c, c + 0.5] {
        let ladder = solver.jump_ladder(x0)?;
        last = last.max(ladder.last().map_or(0.0, |r| r.1));
        for w in ladder.windows(2) {
            trend = trend.max(w[1].1 / w[0].1);
        }
        last = last.max(solver.jump_residual_x(x0, *EPS_LADDER.last().unwrap())?);
    }
    suite.record("rh.jump", last);
    suite.record("rh.jump_trend", trend);

    let mut dev: f64 = 0.0;
    for (x, y) in grid.pairs() {
        let k = bundle.kernel_cd(x, y)?;
        dev = dev.max((solver.kernel_from_rh(x, y) - k).abs() / (1.0 + k.abs()));
    }
    suite.record("rh.kernel", dev);

    let mut inv: f64 = 0.0;
    for (x, y) in [(0.3, -0.8), (1.1, 0.4), (-1.5, 2.0)] {
        let (xc, yc) = (Complex64::new(x, 1e-3), Complex64::new(y, 1e-3));
        let poly = solver.product_entries(xc, yc);
        let num = solver.product_entries_inverted(xc, yc)?;
        for (p, q) in poly.iter().zip(&num) {
            inv = inv.max((p - q).norm() / (1.0 + p.norm()));
        }
    }
    suite.record("rh.inverted", inv);
    Ok(())
}

pub fn mc_checks(
    suite: &mut Suite,
    cfg: &McConfig,
    bundle: &KernelBundle,
) -> Result<(McReport, Vec<DensityBin>)> {
    let report = mc::mc_avg_charpoly(cfg, bundle.mops())?;
    let bins = mc::mc_density_check(&report, bundle)?;
    suite.record("mc.charpoly", report.max_z_score());
    suite.record("mc.density", mc::max_deviation(&bins));
    Ok((report, bins))
}

/// Oracle against kernel at 10 points (`R_1`) and 5 pairs (`R_2`).
pub fn oracle_checks(suite: &mut Suite, bundle: &KernelBundle) -> Result<()> {
    let ens = bundle.ensemble();
    let oracle = JpdfOracle::new(ens)?;
    let mut r1: f64 = 0.0;
    for x in probe_points(ens, 10) {
        let k = bundle.correlation(&[x]);
        r1 = r1.max((oracle.r_m(&[x])? - k).abs() / (1.0 + k));
    }
    suite.record("oracle.r1", r1);
    if ens.n() >= 2 {
        let mut r2: f64 = 0.0;
        for (x, y) in probe_pairs(ens) {
            let k = bundle.correlation(&[x, y]);
            r2 = r2.max((oracle.r_m(&[x, y])? - k).abs() / (1.0 + k));
        }
        suite.record("oracle.r2", r2);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Potential, SourceSpectrum};

    #[test]
    fn tolerance_overrides() {
        let mut t = Tolerances::default();
        t.apply("cd.agreement=1e-6").unwrap();
        assert_eq!(t.get("cd.agreement"), 1e-6);
        assert!(t.apply("nope=1").is_err());
        assert!(t.apply("cd.agreement").is_err());
        assert!(t.apply("cd.agreement=-1").is_err());
    }

    #[test]
    fn two_eigenvalue_suite_passes() {
        let ens = Ensemble::new(
            Potential::gaussian(),
            SourceSpectrum::new(vec![(-1.0, 1), (1.0, 2)]).unwrap(),
            None,
        )
        .unwrap();
        let tol = Tolerances::default();
        let mut suite = Suite::new(&tol);
        let bundle = KernelBundle::new(ens.clone()).unwrap();
        let grid = Grid::standard(&ens);
        mops_checks(&mut suite, bundle.mops()).unwrap();
        cd_checks(&mut suite, &bundle, &grid).unwrap();
        let solver = RhSolver::for_ensemble(bundle.mops().clone()).unwrap();
        rh_checks(&mut suite, &solver, &bundle, &grid).unwrap();
        assert!(suite.all_pass(), "{:#?}", suite.checks);
    }
}
