//! Composite Gauss-Legendre quadrature on finite intervals.
//!
//! All integrands in this crate are entire functions times a rapidly
//! decaying weight, so a fixed high-order rule on a handful of panels
//! converges spectrally; convergence is confirmed by doubling the panel
//! count.

use std::sync::OnceLock;

use crate::ensemble::Potential;
use crate::error::{Error, Result};

/// Points per panel.
pub const DEFAULT_ORDER: usize = 40;
/// Initial number of panels on `[-L, L]`.
pub const DEFAULT_PANELS: usize = 16;
/// Relative change under panel doubling accepted as converged.
pub const DEFAULT_REL_TOL: f64 = 1e-12;
/// Tail threshold: the integrand is below `exp(-TAIL_EXPONENT)` beyond `L`.
pub const TAIL_EXPONENT: f64 = 60.0;

const MAX_PANELS: usize = 1 << 12;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared order-40 rule.
    pub fn default_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(DEFAULT_ORDER))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Flattened composite rule: nodes and positive weights over a union of
/// panels.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Half-width `L` of the symmetric truncation interval, when symmetric.
    pub truncation: f64,
    pub panels: usize,
    pub order: usize,
}

impl QuadratureRule {
    /// `panels` equal panels on `[-truncation, truncation]`.
    pub fn symmetric(truncation: f64, panels: usize, order: usize) -> Self {
        let mut rule = Self::uniform(-truncation, truncation, panels, order);
        rule.truncation = truncation;
        rule
    }

    pub fn uniform(lo: f64, hi: f64, panels: usize, order: usize) -> Self {
        let h = (hi - lo) / panels as f64;
        let edges: Vec<f64> = (0..=panels).map(|i| lo + h * i as f64).collect();
        Self::from_breakpoints(&edges, order)
    }

    /// One Gauss-Legendre panel between every pair of consecutive edges.
    pub fn from_breakpoints(edges: &[f64], order: usize) -> Self {
        let base_owned;
        let base = if order == DEFAULT_ORDER {
            GaussLegendre::default_rule()
        } else {
            base_owned = GaussLegendre::new(order);
            &base_owned
        };
        let panels = edges.len().saturating_sub(1);
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, wt) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + half * t);
                weights.push(half * wt);
            }
        }
        let truncation = edges
            .first()
            .zip(edges.last())
            .map(|(a, b)| a.abs().max(b.abs()))
            .unwrap_or(0.0);
        Self {
            nodes,
            weights,
            truncation,
            panels,
            order,
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Returns `(integral of f, integral of |f|)`.
    pub fn integrate_with_scale<F: Fn(f64) -> f64>(&self, f: F) -> (f64, f64) {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(s, a), (&x, &w)| {
                let v = w * f(x);
                (s + v, a + v.abs())
            })
    }
}

/// Integrates `f` over `[lo, hi]`, doubling the panel count until the
/// change is below `rel_tol` times the integral of `|f|`.
pub fn integrate_converged<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut panels = DEFAULT_PANELS;
    let (mut prev, _) =
        QuadratureRule::uniform(lo, hi, panels, DEFAULT_ORDER).integrate_with_scale(&f);
    while panels < MAX_PANELS {
        panels *= 2;
        let (cur, scale) =
            QuadratureRule::uniform(lo, hi, panels, DEFAULT_ORDER).integrate_with_scale(&f);
        if (cur - prev).abs() <= rel_tol * scale.max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "no convergence on [{lo}, {hi}] with {MAX_PANELS} panels"
    )))
}

/// Vector-valued version of [`integrate_converged`]: every component must
/// converge relative to its own absolute integral.
pub fn integrate_vec_converged<F: Fn(f64, &mut [f64])>(
    f: F,
    dim: usize,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let run = |panels: usize| {
        let rule = QuadratureRule::uniform(lo, hi, panels, DEFAULT_ORDER);
        let mut sum = vec![0.0; dim];
        let mut abs = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            f(x, &mut buf);
            for k in 0..dim {
                let v = w * buf[k];
                sum[k] += v;
                abs[k] += v.abs();
            }
        }
        (sum, abs)
    };
    let mut panels = DEFAULT_PANELS;
    let (mut prev, _) = run(panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let (cur, abs) = run(panels);
        let ok = (0..dim)
            .all(|k| (cur[k] - prev[k]).abs() <= rel_tol * abs[k].max(f64::MIN_POSITIVE));
        if ok {
            return Ok((cur, abs));
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "vector quadrature on [{lo}, {hi}] did not converge"
    )))
}

/// Smallest `L >= 1` with `V(+-L) - a_max L - k_max ln L >= 60`, found by
/// bracketing and bisection.
pub fn truncation_bound(pot: &Potential, a_max: f64, k_max: usize) -> f64 {
    let a = a_max.abs();
    let g = |l: f64| {
        pot.eval(l).min(pot.eval(-l)) - a * l - k_max as f64 * l.ln() - TAIL_EXPONENT
    };
    let mut lo = 1.0;
    if g(lo) >= 0.0 {
        return lo;
    }
    let mut hi = 2.0;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(10);
        // exact up to degree 19
        for k in 0..20 {
            let q: f64 = gl
                .nodes
                .iter()
                .zip(&gl.weights)
                .map(|(x, w)| w * x.powi(k))
                .sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-14, "k = {k}: {q} vs {exact}");
        }
        let sum: f64 = GaussLegendre::default_rule().weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_reproduces_polynomials() {
        let rule = QuadratureRule::symmetric(3.0, 16, DEFAULT_ORDER);
        let q = rule.integrate(|x| x.powi(6) - x);
        let exact = 2.0 * 3f64.powi(7) / 7.0;
        assert!((q - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn truncation_examples() {
        let g = Potential::gaussian();
        assert!((truncation_bound(&g, 0.0, 0) - 120f64.sqrt()).abs() < 1e-9);
        let l = truncation_bound(&g, 2.0, 0);
        assert!((l - (2.0 + 124f64.sqrt())).abs() < 1e-9);
        assert!((l - 13.1).abs() < 0.05);
        let q = Potential::quartic();
        assert!((truncation_bound(&q, 0.0, 0) - 60f64.powf(0.25)).abs() < 1e-9);
    }

    #[test]
    fn gaussian_integral_converges() {
        let l = truncation_bound(&Potential::gaussian(), 0.0, 0);
        let v = integrate_converged(|x| (-0.5 * x * x).exp(), -l, l, 1e-12).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }
}
