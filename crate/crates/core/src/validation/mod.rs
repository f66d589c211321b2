//! Independent reference computations: Monte Carlo over `H + A` and a
//! brute-force joint-density oracle.

pub mod mc;
pub mod oracle;

pub use mc::{mc_avg_charpoly, mc_density_check, sample_m, McConfig, McReport};
pub use oracle::JpdfOracle;
