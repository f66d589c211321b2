//! Acceptance suite: one line per criterion, then a single assertion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the report.

use std::time::{Duration, Instant};

use extsource::checks::{self, Suite, Tolerances};
use extsource::ensemble::{Ensemble, MultiIndex, Potential, SourceSpectrum};
use extsource::kernel::{ordering_invariance, Grid, KernelBundle};
use extsource::mops::Mops;
use extsource::rhp::RhSolver;
use extsource::validation::McConfig;

fn ens(pot: Potential, pairs: &[(f64, usize)]) -> Ensemble {
    Ensemble::new(pot, SourceSpectrum::new(pairs.to_vec()).unwrap(), None).unwrap()
}

fn ens_ordered(pot: Potential, pairs: &[(f64, usize)], order: &[f64]) -> Ensemble {
    Ensemble::new(pot, SourceSpectrum::new(pairs.to_vec()).unwrap(), Some(order)).unwrap()
}

fn two_eigenvalue_configs() -> Vec<Ensemble> {
    vec![
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 2)]),
        ens(Potential::gaussian(), &[(-1.0, 2), (1.0, 2)]),
    ]
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn from_suite(suite: &Suite, elapsed: Duration, budget: Duration) -> Self {
        let worst = suite
            .checks
            .iter()
            .map(|c| format!("{}={:.2e}", c.check, c.value))
            .collect::<Vec<_>>()
            .join(" ");
        let in_time = elapsed <= budget;
        let failing = suite.failing().join(",");
        Self {
            pass: suite.all_pass() && in_time,
            detail: format!(
                "{worst} | {:.2}s (budget {}s){}",
                elapsed.as_secs_f64(),
                budget.as_secs(),
                if failing.is_empty() { String::new() } else { format!(" failing: {failing}") }
            ),
        }
    }
}

/// Takes the worst value of repeated records under one name.
fn record_max(suite: &mut Suite, name: &str, values: impl IntoIterator<Item = f64>) {
    suite.record(name, values.into_iter().fold(0.0, f64::max));
}

fn cd_identity(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut suite = Suite::new(tol);
    let mut devs = Vec::new();
    for e in two_eigenvalue_configs() {
        let grid = Grid::standard(&e);
        devs.push(KernelBundle::new(e).unwrap().cd_deviation(&grid).unwrap());
    }
    record_max(&mut suite, "cd.agreement", devs);
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(5))
}

fn biorthogonality(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut suite = Suite::new(tol);
    let mut errs = Vec::new();
    for n in 2..=8usize {
        let split = [(n / 2).max(1), n - (n / 2).max(1)];
        for (pot, a) in [(Potential::gaussian(), 1.0), (Potential::quartic(), 0.5)] {
            let e = ens(pot, &[(-a, split[0]), (a, split[1])]);
            let mops = Mops::new(e);
            for j in 0..n {
                for k in 0..n {
                    let target = if j == k { 1.0 } else { 0.0 };
                    errs.push(mops.biorthogonality(j, k).unwrap().scaled_error(target));
                }
            }
        }
    }
    record_max(&mut suite, "mops.biorthogonality", errs);
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(30))
}

fn trace_and_reproducing(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut configs = two_eigenvalue_configs();
    configs.extend([
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 1)]),
        ens(Potential::gaussian(), &[(-1.0, 4), (1.0, 4)]),
        ens(Potential::quartic(), &[(-0.5, 1), (0.5, 1)]),
        ens(Potential::quartic(), &[(-0.5, 1), (0.5, 2)]),
        ens(Potential::quartic(), &[(-0.5, 4), (0.5, 4)]),
        ens(Potential::gaussian(), &[(-1.0, 1), (0.0, 1), (1.0, 1)]),
        ens_ordered(Potential::gaussian(), &[(-1.0, 2), (1.0, 1)], &[-1.0, 1.0, -1.0]),
    ]);
    configs.extend((1..=6).map(|n| ens(Potential::gaussian(), &[(0.0, n)])));
    let (mut trace, mut rep) = (Vec::new(), Vec::new());
    for e in configs {
        let grid = Grid::standard(&e);
        let b = KernelBundle::new(e).unwrap();
        let mut s = Suite::new(tol);
        checks::kernel_checks(&mut s, &b, &grid).unwrap();
        for c in s.checks {
            match c.check.as_str() {
                "kernel.trace" => trace.push(c.value),
                "kernel.reproducing" => rep.push(c.value),
                _ => {}
            }
        }
    }
    let mut suite = Suite::new(tol);
    record_max(&mut suite, "kernel.trace", trace);
    record_max(&mut suite, "kernel.reproducing", rep);
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60))
}

fn ordering(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let pairs = [(-1.0, 2), (1.0, 1)];
    let e1 = ens_ordered(Potential::gaussian(), &pairs, &[-1.0, -1.0, 1.0]);
    let e2 = ens_ordered(Potential::gaussian(), &pairs, &[-1.0, 1.0, -1.0]);
    let grid = Grid::standard(&e1);
    let b1 = KernelBundle::new(e1).unwrap();
    let b2 = KernelBundle::new(e2).unwrap();
    let mut suite = Suite::new(tol);
    suite.record("cd.agreement", ordering_invariance(&b1, &b2, &grid));
    let coeff_diff = (0..=3)
        .map(|k| {
            let p1 = b1.mops().p_seq(k).unwrap();
            let p2 = b2.mops().p_seq(k).unwrap();
            p1.poly.max_diff(&p2.poly)
        })
        .fold(0.0, f64::max);
    let mut out = Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60));
    out.pass &= coeff_diff > 1e-3;
    out.detail = format!("kernel diff {} | P_k coefficient diff {coeff_diff:.3e}", out.detail);
    out
}

fn oracle(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let configs = [
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 1)]),
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 2)]),
        ens(Potential::quartic(), &[(-0.5, 1), (0.5, 1)]),
        ens(Potential::quartic(), &[(-0.5, 1), (0.5, 2)]),
    ];
    let (mut r1, mut r2) = (Vec::new(), Vec::new());
    for e in configs {
        let b = KernelBundle::new(e).unwrap();
        let mut s = Suite::new(tol);
        checks::oracle_checks(&mut s, &b).unwrap();
        for c in s.checks {
            match c.check.as_str() {
                "oracle.r1" => r1.push(c.value),
                "oracle.r2" => r2.push(c.value),
                _ => {}
            }
        }
    }
    let mut suite = Suite::new(tol);
    record_max(&mut suite, "oracle.r1", r1);
    record_max(&mut suite, "oracle.r2", r2);
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(120))
}

fn monte_carlo(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let configs = [
        ens(Potential::gaussian(), &[(0.0, 2)]),
        ens(Potential::gaussian(), &[(0.0, 3)]),
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 1)]),
        ens(Potential::gaussian(), &[(-1.0, 1), (1.0, 2)]),
    ];
    let (mut coef, mut dens) = (Vec::new(), Vec::new());
    for (i, e) in configs.into_iter().enumerate() {
        let cfg = McConfig::for_ensemble(&e, 100_000, 7 + i as u64, 4).unwrap();
        let b = KernelBundle::new(e).unwrap();
        let mut s = Suite::new(tol);
        checks::mc_checks(&mut s, &cfg, &b).unwrap();
        for c in s.checks {
            match c.check.as_str() {
                "mc.charpoly" => coef.push(c.value),
                "mc.density" => dens.push(c.value),
                _ => {}
            }
        }
    }
    let mut suite = Suite::new(tol);
    record_max(&mut suite, "mc.charpoly", coef);
    record_max(&mut suite, "mc.density", dens);
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60))
}

fn riemann_hilbert(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut suite = Suite::new(tol);
    for e in two_eigenvalue_configs() {
        let grid = Grid::standard(&e);
        let b = KernelBundle::new(e).unwrap();
        let solver = RhSolver::for_ensemble(b.mops().clone()).unwrap();
        checks::rh_checks(&mut suite, &solver, &b, &grid).unwrap();
    }
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60))
}

fn structural(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut suite = Suite::new(tol);
    for e in two_eigenvalue_configs() {
        let grid = Grid::standard(&e);
        let b = KernelBundle::new(e).unwrap();
        checks::cd_checks(&mut suite, &b, &grid).unwrap();
    }
    suite.checks.retain(|c| {
        matches!(
            c.check.as_str(),
            "cd.top_coefficient" | "cd.structural_zeros" | "cd.four_term" | "cd.c_formulas" | "cd.ladder"
        )
    });
    Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60))
}

/// Monic probabilists' Hermite polynomials by their three-term recurrence,
/// ascending coefficients.
fn hermite(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0], vec![0.0, 1.0]];
    for k in 1..n {
        let mut next = vec![0.0; k + 2];
        for (i, c) in out[k].iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, c) in out[k - 1].iter().enumerate() {
            next[i] -= k as f64 * c;
        }
        out.push(next);
    }
    out.truncate(n + 1);
    out
}

fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn classical(tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let (mut coef, mut hnum, mut kern) = (0.0f64, 0.0f64, 0.0f64);
    let root = (2.0 * std::f64::consts::PI).sqrt();
    for n in 1..=6usize {
        let e = ens(Potential::gaussian(), &[(0.0, n)]);
        let grid = Grid::standard(&e);
        let b = KernelBundle::new(e).unwrap();
        let he = hermite(n);
        let mut fact = 1.0;
        for k in 0..=n {
            let p = b.mops().solve_p(&MultiIndex(vec![k])).unwrap();
            for (i, want) in he[k].iter().enumerate() {
                coef = coef.max((p.poly.coeff(i) - want).abs() / want.abs().max(1.0));
            }
            if k > 0 {
                fact *= k as f64;
            }
            let h = b.mops().h_number(&MultiIndex(vec![k]), 0).unwrap();
            hnum = hnum.max((h - fact * root).abs() / (fact * root));
        }
        // (1/h_{n-1}) (He_n(x) He_{n-1}(y) - He_{n-1}(x) He_n(y)) / (x - y),
        // with the weight split evenly between the two arguments
        let h_prev = (1..n).map(|k| k as f64).product::<f64>() * root;
        for (x, y) in grid.pairs() {
            let damp = (-(x * x + y * y) / 4.0).exp();
            let want = if (x - y).abs() > 1e-6 {
                damp * (eval(&he[n], x) * eval(&he[n - 1], y) - eval(&he[n - 1], x) * eval(&he[n], y))
                    / ((x - y) * h_prev)
            } else {
                let mut f = 1.0;
                let mut s = 0.0;
                for k in 0..n {
                    if k > 0 {
                        f *= k as f64;
                    }
                    s += eval(&he[k], x) * eval(&he[k], y) / (f * root);
                }
                damp * s
            };
            let got = b.kernel_cd(x, y).unwrap();
            kern = kern.max((got - want).abs() / (1.0 + want.abs()));
        }
    }
    let mut suite = Suite::new(tol);
    suite.record("cd.top_coefficient", coef);
    suite.record("mops.leading", hnum);
    suite.record("cd.agreement", kern);
    let mut out = Outcome::from_suite(&suite, start.elapsed(), Duration::from_secs(60));
    out.detail = format!("(hermite coeffs, h_k, classical kernel) {}", out.detail);
    out
}

#[test]
fn acceptance_criteria() {
    let tol = Tolerances::default();
    let criteria: [(&str, fn(&Tolerances) -> Outcome); 9] = [
        ("christoffel-darboux identity", cd_identity),
        ("biorthogonality", biorthogonality),
        ("trace and reproducing", trace_and_reproducing),
        ("ordering invariance", ordering),
        ("joint-density oracle", oracle),
        ("monte carlo", monte_carlo),
        ("riemann-hilbert suite", riemann_hilbert),
        ("structural zeros and recurrence coefficients", structural),
        ("classical reduction", classical),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run(&tol);
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", i + 1, out.detail);
        if !out.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
