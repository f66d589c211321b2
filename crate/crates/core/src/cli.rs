//! Command-line pipelines: each subcommand writes its artifacts and a
//! `summary.json` of checks into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::checks::{self, Check, Suite, Tolerances, OFF_AXIS};
use crate::ensemble::{ConfigFile, Ensemble};
use crate::error::{Error, Result};
use crate::kernel::{Grid, KernelBundle};
use crate::moments::{moment_matrix, ztilde};
use crate::mops::Mops;
use crate::rhp::{ComplexMatrix3, RhSolver};
use crate::validation::mc::{write_histogram_csv, McConfig};
use crate::validation::oracle::MAX_ORACLE_N;

#[derive(Debug, Parser)]
#[command(name = "extsource", version, about = "Random matrices with an external source: polynomials, kernels and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads for grid evaluation and Monte Carlo.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Evaluation grid `XMIN:XMAX:STEPS`; defaults to 21 points over
    /// `[min a - 4, max a + 4]`.
    #[arg(long, global = true)]
    pub grid: Option<String>,

    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,

    /// Tolerance override `NAME=VALUE`, repeatable.
    #[arg(long = "tol", global = true)]
    pub tol: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Moment table `moments.csv`.
    Moments,
    /// Type II / type I coefficients and h-numbers, `polys.csv`.
    Polys,
    /// Kernel on the grid and its diagonal.
    Kernel,
    /// One- and two-point correlation functions on the grid.
    Correlations,
    /// Christoffel-Darboux, recurrence and ladder identities.
    CdCheck,
    /// Riemann-Hilbert duality, jump, asymptotics and compact kernel.
    RhCheck,
    /// Monte Carlo comparison (Gaussian potential only).
    McValidate,
    /// Joint-density oracle comparison (n <= 3).
    OracleCheck,
    /// Every applicable check.
    FullReport,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Moments => "moments",
            Self::Polys => "polys",
            Self::Kernel => "kernel",
            Self::Correlations => "correlations",
            Self::CdCheck => "cd-check",
            Self::RhCheck => "rh-check",
            Self::McValidate => "mc-validate",
            Self::OracleCheck => "oracle-check",
            Self::FullReport => "full-report",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub config: ConfigFile,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Seconds since the Unix epoch; excluded from reproducibility
    /// comparisons.
    pub timestamp: u64,
}

/// Writes through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

struct Run<'a> {
    cli: &'a Cli,
    ens: Ensemble,
    grid: Grid,
    workers: usize,
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn moments(&self, suite: &mut Suite) -> Result<()> {
        let mops = Mops::new(self.ens.clone());
        let n = self.ens.n();
        let table = moment_matrix(&self.ens, mops.cache(), n, 2 * n)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_atomic(&self.out("moments.csv"), &buf)?;
        let z = ztilde(&table, n, &self.ens.spectrum.multiplicities().0)?;
        suite.record("moments.condition", z.condition);
        Ok(())
    }

    fn polys(&self, suite: &mut Suite, mops: &Mops) -> Result<()> {
        let p = self.ens.p();
        let n = self.ens.n();
        let bytes = csv_bytes(|w| {
            let mut header: Vec<String> = (1..=p).map(|i| format!("k{i}")).collect();
            header.extend(["side".to_string(), "value".to_string()]);
            w.write_record(&header)?;
            for k in 0..=n {
                let idx = self.ens.prefix_counts(k)?;
                let prefix: Vec<String> = idx.0.iter().map(usize::to_string).collect();
                let mut row = |side: String, v: f64| {
                    let mut r = prefix.clone();
                    r.extend([side, v.to_string()]);
                    w.write_record(&r)
                };
                for (pow, c) in mops.solve_p(&idx)?.poly.coeffs().iter().enumerate() {
                    row(format!("P{pow}"), *c)?;
                }
                if k > 0 {
                    let q = mops.solve_q(&idx)?;
                    for (slot, part) in q.parts.iter().enumerate() {
                        let letter = char::from(b'A' + slot as u8);
                        for (pow, c) in part.coeffs().iter().enumerate() {
                            row(format!("{letter}{pow}"), *c)?;
                        }
                    }
                }
                for slot in 0..p {
                    row(format!("h{}", slot + 1), mops.h_number(&idx, slot)?)?;
                }
            }
            Ok(())
        })?;
        write_atomic(&self.out("polys.csv"), &bytes)?;
        checks::mops_checks(suite, mops)
    }

    fn kernel(&self, bundle: &KernelBundle) -> Result<()> {
        let grid = bundle.grid_values(&self.grid);
        let bytes = csv_bytes(|w| {
            w.write_record(["x", "y", "K"])?;
            for (x, y, k) in grid {
                w.serialize((x, y, k))?;
            }
            Ok(())
        })?;
        write_atomic(&self.out("kernel_grid.csv"), &bytes)?;
        self.diagonal(bundle, "kernel_diag.csv")
    }

    fn diagonal(&self, bundle: &KernelBundle, name: &str) -> Result<()> {
        let bytes = csv_bytes(|w| {
            w.write_record(["x", "R1"])?;
            for x in self.grid.points() {
                w.serialize((x, bundle.correlation(&[x])))?;
            }
            Ok(())
        })?;
        write_atomic(&self.out(name), &bytes)
    }

    fn correlations(&self, bundle: &KernelBundle) -> Result<()> {
        self.diagonal(bundle, "correlations_r1.csv")?;
        let bytes = csv_bytes(|w| {
            w.write_record(["x", "y", "R2"])?;
            for (x, y) in self.grid.pairs() {
                w.serialize((x, y, bundle.correlation(&[x, y])))?;
            }
            Ok(())
        })?;
        write_atomic(&self.out("correlations_r2.csv"), &bytes)
    }

    fn rh(&self, suite: &mut Suite, bundle: &KernelBundle) -> Result<()> {
        let solver = RhSolver::for_ensemble(bundle.mops().clone())?;
        checks::rh_checks(suite, &solver, bundle, &self.grid)?;
        let dump = |m: fn(&RhSolver, Complex64) -> Result<ComplexMatrix3>| {
            csv_bytes(|w| {
                w.write_record(["z_re", "z_im", "entry", "value_re", "value_im"])?;
                for (re, im) in OFF_AXIS {
                    let v = m(&solver, Complex64::new(re, im))?;
                    for r in 0..3 {
                        for c in 0..3 {
                            let e = v[(r, c)];
                            w.serialize((re, im, format!("{}{}", r + 1, c + 1), e.re, e.im))?;
                        }
                    }
                }
                Ok(())
            })
        };
        write_atomic(&self.out("y_matrix.csv"), &dump(RhSolver::assemble_y)?)?;
        write_atomic(&self.out("x_matrix.csv"), &dump(RhSolver::assemble_x)?)?;
        let c = 0.5 * (self.grid.lo + self.grid.hi);
        let bytes = csv_bytes(|w| {
            w.write_record(["x", "eps", "residual"])?;
            for (eps, r) in solver.jump_ladder(c)? {
                w.serialize((c, eps, r))?;
            }
            Ok(())
        })?;
        write_atomic(&self.out("jumps.csv"), &bytes)
    }

    fn mc(&self, suite: &mut Suite, bundle: &KernelBundle) -> Result<()> {
        let cfg = McConfig::for_ensemble(&self.ens, self.cli.samples, self.cli.seed, self.workers)?;
        let (report, bins) = checks::mc_checks(suite, &cfg, bundle)?;
        write_atomic(&self.out("mc_report.json"), &serde_json::to_vec_pretty(&report)?)?;
        let mut buf = Vec::new();
        write_histogram_csv(&bins, &mut buf)?;
        write_atomic(&self.out("histogram.csv"), &buf)
    }

    fn execute(&self, command: Command, suite: &mut Suite) -> Result<()> {
        let bundle = || KernelBundle::from_mops(Arc::new(Mops::new(self.ens.clone())));
        match command {
            Command::Moments => self.moments(suite),
            Command::Polys => self.polys(suite, &Mops::new(self.ens.clone())),
            Command::Kernel => {
                let b = bundle()?;
                self.kernel(&b)?;
                checks::kernel_checks(suite, &b, &self.grid)
            }
            Command::Correlations => {
                let b = bundle()?;
                self.correlations(&b)?;
                checks::kernel_checks(suite, &b, &self.grid)
            }
            Command::CdCheck => checks::cd_checks(suite, &bundle()?, &self.grid),
            Command::RhCheck => self.rh(suite, &bundle()?),
            Command::McValidate => self.mc(suite, &bundle()?),
            Command::OracleCheck => checks::oracle_checks(suite, &bundle()?),
            Command::FullReport => {
                self.moments(suite)?;
                let b = bundle()?;
                self.polys(suite, b.mops())?;
                self.kernel(&b)?;
                self.correlations(&b)?;
                checks::kernel_checks(suite, &b, &self.grid)?;
                let p = self.ens.p();
                if p <= 2 {
                    checks::cd_checks(suite, &b, &self.grid)?;
                }
                if p == 2 {
                    self.rh(suite, &b)?;
                }
                if self.ens.potential.is_gaussian() {
                    self.mc(suite, &b)?;
                }
                if self.ens.n() <= MAX_ORACLE_N {
                    checks::oracle_checks(suite, &b)?;
                }
                Ok(())
            }
        }
    }
}

/// Runs one subcommand; returns the summary that was written.
pub fn run(cli: &Cli) -> Result<Summary> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let config = ConfigFile::load(path)?;
    let ens = Ensemble::from_config(&config)?;
    let mut tol = Tolerances::default();
    for t in &cli.tol {
        tol.apply(t)?;
    }
    let grid = match &cli.grid {
        Some(g) => Grid::parse(g)?,
        None => Grid::standard(&ens),
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
        .max(1);
    fs::create_dir_all(&cli.out)?;
    let run = Run {
        cli,
        ens,
        grid,
        workers,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut suite = Suite::new(&tol);
    pool.install(|| run.execute(cli.command, &mut suite))?;
    let summary = Summary {
        command: cli.command.name().to_string(),
        config: run.ens.to_config(),
        seed: cli.seed,
        samples: cli.samples,
        pass: suite.all_pass(),
        checks: suite.checks,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write_atomic(&cli.out.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
