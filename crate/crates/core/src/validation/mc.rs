//! Monte Carlo for `M = H + A` with `H` drawn from the GUE with density
//! proportional to `exp(-Tr H^2 / 2)`.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, SourceSpectrum};
use crate::error::{Error, Result};
use crate::kernel::KernelBundle;
use crate::mops::Mops;
use crate::quadrature::integrate_converged;

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_BINS: usize = 40;

#[derive(Clone, Debug)]
pub struct McConfig {
    pub spectrum: SourceSpectrum,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub batches: usize,
    pub bins: usize,
}

impl McConfig {
    /// Rejects non-Gaussian potentials.
    pub fn for_ensemble(ens: &Ensemble, samples: usize, seed: u64, workers: usize) -> Result<Self> {
        if !ens.potential.is_gaussian() {
            return Err(Error::Unsupported(
                "Monte Carlo sampling needs the Gaussian potential x^2/2".into(),
            ));
        }
        let batches = DEFAULT_BATCHES.min(samples.max(1));
        if samples < 2 * batches {
            return Err(Error::Config(format!("need at least {} samples", 2 * batches)));
        }
        Ok(Self {
            spectrum: ens.spectrum.clone(),
            samples,
            seed,
            workers: workers.max(1),
            batches,
            bins: DEFAULT_BINS,
        })
    }

    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    /// `[min a - 4, max a + 4]`.
    pub fn histogram_range(&self) -> (f64, f64) {
        (self.spectrum.a_min() - 4.0, self.spectrum.a_max() + 4.0)
    }
}

/// Independent stream for one sample.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Ascending eigenvalues of one draw of `H + A`.
pub fn sample_m<R: Rng>(spectrum: &SourceSpectrum, rng: &mut R) -> Vec<f64> {
    let n = spectrum.n();
    let diag: Vec<f64> = spectrum
        .pairs()
        .iter()
        .flat_map(|&(a, k)| std::iter::repeat_n(a, k))
        .collect();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        m[(i, i)] = Complex64::new(g + diag[i], 0.0);
        for j in i + 1..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let v = Complex64::new(re * half, im * half);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Ascending coefficients of `prod (z - x_i)`.
pub fn charpoly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= r * ck;
        }
        c = next;
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub power: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub analytic: f64,
    /// `|estimate - analytic| / std_error`.
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
        }
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    fn add(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
        } else if x >= self.hi {
            self.above += 1;
        } else {
            let last = self.counts.len() - 1;
            let b = ((x - self.lo) / self.width()) as usize;
            self.counts[b.min(last)] += 1;
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * bin as f64, self.lo + w * (bin + 1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub batches: usize,
    /// Non-trivial coefficients, powers `0..n`; the leading one is exactly 1.
    pub coefficients: Vec<CoefficientEstimate>,
    pub histogram: Histogram,
    pub eigenvalue_mean: f64,
}

impl McReport {
    pub fn max_z_score(&self) -> f64 {
        self.coefficients.iter().map(|c| c.z_score).fold(0.0, f64::max)
    }
}

struct BatchSums {
    coeffs: Vec<f64>,
    eig_sum: f64,
    hist: Histogram,
}

fn run_batch(cfg: &McConfig, range: std::ops::Range<usize>) -> BatchSums {
    let n = cfg.n();
    let (lo, hi) = cfg.histogram_range();
    let mut out = BatchSums {
        coeffs: vec![0.0; n],
        eig_sum: 0.0,
        hist: Histogram::new(lo, hi, cfg.bins),
    };
    for i in range {
        let mut rng = sample_rng(cfg.seed, i as u64);
        let eig = sample_m(&cfg.spectrum, &mut rng);
        let c = charpoly_from_roots(&eig);
        for (acc, v) in out.coeffs.iter_mut().zip(&c) {
            *acc += v;
        }
        for &x in &eig {
            out.eig_sum += x;
            out.hist.add(x);
        }
    }
    out
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Averages charpoly coefficients over `cfg.samples` draws and compares
/// them with the type II polynomial from the moment solver.
///
/// Batches are reduced in index order, so the report does not depend on
/// the number of workers.
pub fn mc_avg_charpoly(cfg: &McConfig, mops: &Mops) -> Result<McReport> {
    let n = cfg.n();
    let b = cfg.batches;
    let bounds: Vec<_> = (0..b)
        .map(|k| (k * cfg.samples / b)..((k + 1) * cfg.samples / b))
        .collect();
    let sums: Vec<BatchSums> =
        pool(cfg.workers)?.install(|| bounds.par_iter().map(|r| run_batch(cfg, r.clone())).collect());

    let analytic = mops.solve_p(&cfg.spectrum.multiplicities())?;
    let (lo, hi) = cfg.histogram_range();
    let mut hist = Histogram::new(lo, hi, cfg.bins);
    let mut eig_sum = 0.0;
    let mut totals = vec![0.0; n];
    for s in &sums {
        hist.merge(&s.hist);
        eig_sum += s.eig_sum;
        for (t, v) in totals.iter_mut().zip(&s.coeffs) {
            *t += v;
        }
    }
    let coefficients = (0..n)
        .map(|power| {
            let mean = totals[power] / cfg.samples as f64;
            let batch_means: Vec<f64> = sums
                .iter()
                .zip(&bounds)
                .map(|(s, r)| s.coeffs[power] / r.len() as f64)
                .collect();
            let bm = batch_means.iter().sum::<f64>() / b as f64;
            let var = batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
            let std_error = (var / b as f64).sqrt();
            let target = analytic.poly.coeff(power);
            CoefficientEstimate {
                power,
                estimate: mean,
                std_error,
                analytic: target,
                z_score: (mean - target).abs() / std_error,
            }
        })
        .collect();
    Ok(McReport {
        n,
        samples: cfg.samples,
        seed: cfg.seed,
        batches: b,
        coefficients,
        histogram: hist,
        eigenvalue_mean: eig_sum / (n * cfg.samples) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub expected: f64,
    /// `|count - expected| / sigma`, `sigma^2 = max(expected (1 - p), 1)`.
    pub deviation: f64,
}

/// Histogram of the report against `samples * int_bin K_n(x, x) dx`.
pub fn mc_density_check(report: &McReport, bundle: &KernelBundle) -> Result<Vec<DensityBin>> {
    let trials = (report.n * report.samples) as f64;
    let h = &report.histogram;
    (0..h.counts.len())
        .map(|bin| {
            let (lo, hi) = h.edges(bin);
            let mass = integrate_converged(|x| bundle.kernel_sum(x, x), lo, hi, 1e-12)?;
            let expected = report.samples as f64 * mass;
            let p = expected / trials;
            let sigma = (expected * (1.0 - p)).max(1.0).sqrt();
            let count = h.counts[bin];
            Ok(DensityBin {
                bin_lo: lo,
                bin_hi: hi,
                count,
                expected,
                deviation: (count as f64 - expected).abs() / sigma,
            })
        })
        .collect()
}

pub fn max_deviation(bins: &[DensityBin]) -> f64 {
    bins.iter().map(|b| b.deviation).fold(0.0, f64::max)
}

pub fn write_histogram_csv<W: Write>(bins: &[DensityBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count", "expected"])?;
    for b in bins {
        w.write_record([
            b.bin_lo.to_string(),
            b.bin_hi.to_string(),
            b.count.to_string(),
            b.expected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Potential;

    fn ens(pairs: Vec<(f64, usize)>) -> Ensemble {
        Ensemble::new(Potential::gaussian(), SourceSpectrum::new(pairs).unwrap(), None).unwrap()
    }

    #[test]
    fn scalar_means() {
        for a in [0.0, 1.5] {
            let e = ens(vec![(a, 1)]);
            let cfg = McConfig::for_ensemble(&e, 20_000, 7, 2).unwrap();
            let r = mc_avg_charpoly(&cfg, &Mops::new(e)).unwrap();
            assert!((r.eigenvalue_mean - a).abs() < 4.0 / (cfg.samples as f64).sqrt());
            assert_eq!(r.histogram.total(), cfg.samples as u64);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let spec = SourceSpectrum::new(vec![(-1.0, 1), (1.0, 2)]).unwrap();
        let a = sample_m(&spec, &mut sample_rng(3, 41));
        let b = sample_m(&spec, &mut sample_rng(3, 41));
        assert_eq!(a, b);
        assert_ne!(a, sample_m(&spec, &mut sample_rng(3, 42)));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));

        let e = ens(vec![(-1.0, 1), (1.0, 1)]);
        let mops = Mops::new(e.clone());
        let one = mc_avg_charpoly(&McConfig::for_ensemble(&e, 2_000, 5, 1).unwrap(), &mops).unwrap();
        let four = mc_avg_charpoly(&McConfig::for_ensemble(&e, 2_000, 5, 4).unwrap(), &mops).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn charpoly_coefficients() {
        assert_eq!(charpoly_from_roots(&[1.0, 2.0]), vec![2.0, -3.0, 1.0]);
        assert_eq!(charpoly_from_roots(&[]), vec![1.0]);
    }

    #[test]
    fn small_gue_density() {
        let e = ens(vec![(0.0, 1)]);
        let cfg = McConfig::for_ensemble(&e, 20_000, 11, 2).unwrap();
        let r = mc_avg_charpoly(&cfg, &Mops::new(e.clone())).unwrap();
        let bins = mc_density_check(&r, &KernelBundle::new(e).unwrap()).unwrap();
        assert_eq!(bins.len(), DEFAULT_BINS);
        assert!(max_deviation(&bins) <= 4.0);
        assert!(r.coefficients.iter().all(|c| c.std_error > 0.0));
        let mut buf = Vec::new();
        write_histogram_csv(&bins, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin_lo,bin_hi,count,expected\n"));
        assert_eq!(text.lines().count(), DEFAULT_BINS + 1);
    }

    #[test]
    fn rejects_non_gaussian() {
        let e = Ensemble::new(
            Potential::quartic(),
            SourceSpectrum::new(vec![(0.0, 1)]).unwrap(),
            None,
        )
        .unwrap();
        assert!(McConfig::for_ensemble(&e, 1000, 1, 1).is_err());
    }
}
