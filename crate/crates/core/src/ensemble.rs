//! Static data of the ensemble: the confining potential `V`, the spectrum of
//! the external source and an ordering of its eigenvalues.
//!
//! Everything here is immutable once validated, so an [`Ensemble`] can be
//! shared freely between worker threads.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real polynomial potential `V(x) = sum_k c_k x^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    coeffs: Vec<f64>,
}

impl Potential {
    /// Builds a potential from ascending coefficients. Trailing zeros are
    /// dropped; the remaining degree must be even, at least two, with a
    /// positive leading coefficient so that every weight is integrable.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential("non-finite coefficient".into()));
        }
        let degree = coeffs.len().saturating_sub(1);
        if degree < 2 {
            return Err(Error::InvalidPotential(format!(
                "degree {degree} is below 2"
            )));
        }
        if degree % 2 == 1 {
            return Err(Error::InvalidPotential(format!(
                "odd-degree potential (degree {degree})"
            )));
        }
        if coeffs[degree] <= 0.0 {
            return Err(Error::InvalidPotential(
                "leading coefficient must be positive".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// `V(x) = x^2 / 2`.
    pub fn gaussian() -> Self {
        Self {
            coeffs: vec![0.0, 0.0, 0.5],
        }
    }

    /// `V(x) = x^4`.
    pub fn quartic() -> Self {
        Self {
            coeffs: vec![0.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_gaussian(&self) -> bool {
        self.coeffs == [0.0, 0.0, 0.5]
    }

    pub fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Distinct eigenvalues `a_i` of the source with multiplicities `n_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpectrum {
    pairs: Vec<(f64, usize)>,
}

impl SourceSpectrum {
    pub fn new(pairs: Vec<(f64, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        for (i, &(a, m)) in pairs.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("non-finite eigenvalue {a}")));
            }
            if m == 0 {
                return Err(Error::ZeroMultiplicity(a));
            }
            if pairs[..i].iter().any(|&(b, _)| b == a) {
                return Err(Error::DuplicateEigenvalue(a));
            }
        }
        Ok(Self { pairs })
    }

    /// Number of distinct eigenvalues.
    pub fn p(&self) -> usize {
        self.pairs.len()
    }

    /// Matrix size `n = sum n_i`.
    pub fn n(&self) -> usize {
        self.pairs.iter().map(|&(_, m)| m).sum()
    }

    pub fn eigenvalue(&self, slot: usize) -> f64 {
        self.pairs[slot].0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|&(a, _)| a).collect()
    }

    pub fn multiplicity(&self, slot: usize) -> usize {
        self.pairs[slot].1
    }

    pub fn multiplicities(&self) -> MultiIndex {
        MultiIndex(self.pairs.iter().map(|&(_, m)| m).collect())
    }

    pub fn pairs(&self) -> &[(f64, usize)] {
        &self.pairs
    }

    pub fn slot_of(&self, a: f64) -> Option<usize> {
        self.pairs.iter().position(|&(b, _)| b == a)
    }

    pub fn a_min(&self) -> f64 {
        self.pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min)
    }

    pub fn a_max(&self) -> f64 {
        self.pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn abs_max(&self) -> f64 {
        self.pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max)
    }
}

/// Counts `(k_1, .., k_p)`, one per distinct eigenvalue in spectrum order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zeros(p: usize) -> Self {
        Self(vec![0; p])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, slot: usize) -> usize {
        self.0[slot]
    }

    /// Copy with `counts[slot] += 1`.
    pub fn incremented(&self, slot: usize) -> Self {
        let mut out = self.clone();
        out.0[slot] += 1;
        out
    }

    /// Copy with `counts[slot] -= 1`, or `None` when that count is zero.
    pub fn decremented(&self, slot: usize) -> Option<Self> {
        let mut out = self.clone();
        out.0[slot] = out.0[slot].checked_sub(1)?;
        Some(out)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// A sequence `alpha_1..alpha_n` realizing the spectrum, stored as slot
/// indices into the [`SourceSpectrum`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering {
    slots: Vec<usize>,
}

impl Ordering {
    /// Builds the ordering from eigenvalue values, checking that the
    /// multiset matches the spectrum exactly.
    pub fn from_values(spectrum: &SourceSpectrum, alpha: &[f64]) -> Result<Self> {
        let slots = alpha
            .iter()
            .map(|&a| {
                spectrum.slot_of(a).ok_or_else(|| {
                    Error::OrderingMismatch(format!("{a} is not an eigenvalue of the source"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_slots(spectrum, slots)
    }

    pub fn from_slots(spectrum: &SourceSpectrum, slots: Vec<usize>) -> Result<Self> {
        if slots.len() != spectrum.n() {
            return Err(Error::OrderingMismatch(format!(
                "length {} but n = {}",
                slots.len(),
                spectrum.n()
            )));
        }
        let mut counts = vec![0usize; spectrum.p()];
        for &s in &slots {
            if s >= spectrum.p() {
                return Err(Error::OrderingMismatch(format!("slot {s} out of range")));
            }
            counts[s] += 1;
        }
        for (slot, &c) in counts.iter().enumerate() {
            if c != spectrum.multiplicity(slot) {
                return Err(Error::OrderingMismatch(format!(
                    "eigenvalue {} appears {c} times, multiplicity is {}",
                    spectrum.eigenvalue(slot),
                    spectrum.multiplicity(slot)
                )));
            }
        }
        Ok(Self { slots })
    }

    /// Block ordering `a_1 (n_1 times), a_2 (n_2 times), ...`. For two
    /// eigenvalues the tail is rearranged to end in `(a_1, a_2)`.
    pub fn canonical(spectrum: &SourceSpectrum) -> Self {
        let mut slots = Vec::with_capacity(spectrum.n());
        if spectrum.p() == 2 {
            let (n1, n2) = (spectrum.multiplicity(0), spectrum.multiplicity(1));
            slots.extend(std::iter::repeat_n(0, n1 - 1));
            slots.extend(std::iter::repeat_n(1, n2 - 1));
            slots.push(0);
            slots.push(1);
        } else {
            for slot in 0..spectrum.p() {
                slots.extend(std::iter::repeat_n(slot, spectrum.multiplicity(slot)));
            }
        }
        Self { slots }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn values(&self, spectrum: &SourceSpectrum) -> Vec<f64> {
        self.slots.iter().map(|&s| spectrum.eigenvalue(s)).collect()
    }
}

/// Counts of each distinct eigenvalue among the first `k` ordering entries.
pub fn prefix_counts(slots: &[usize], p: usize, k: usize) -> Result<MultiIndex> {
    if k > slots.len() {
        return Err(Error::OutOfRange(format!(
            "prefix length {k} exceeds ordering length {}",
            slots.len()
        )));
    }
    let mut counts = vec![0; p];
    for &s in &slots[..k] {
        counts[s] += 1;
    }
    Ok(MultiIndex(counts))
}

/// `exp(-(V(x) - a x))`, formed as a single exponential of the combined
/// exponent. Underflows to zero far in the tail.
pub fn weight_eval(pot: &Potential, a: f64, x: f64) -> f64 {
    (a * x - pot.eval(x)).exp()
}

/// Validated configuration: potential, spectrum and ordering.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub potential: Potential,
    pub spectrum: SourceSpectrum,
    pub ordering: Ordering,
}

impl Ensemble {
    pub fn new(
        potential: Potential,
        spectrum: SourceSpectrum,
        ordering: Option<&[f64]>,
    ) -> Result<Self> {
        let ordering = match ordering {
            Some(alpha) => Ordering::from_values(&spectrum, alpha)?,
            None => Ordering::canonical(&spectrum),
        };
        Ok(Self {
            potential,
            spectrum,
            ordering,
        })
    }

    /// Same potential and spectrum under a different ordering.
    pub fn with_ordering(&self, slots: Vec<usize>) -> Result<Self> {
        Ok(Self {
            potential: self.potential.clone(),
            spectrum: self.spectrum.clone(),
            ordering: Ordering::from_slots(&self.spectrum, slots)?,
        })
    }

    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    pub fn p(&self) -> usize {
        self.spectrum.p()
    }

    /// The ordering, extended by `(a_1, a_2)` when there are two eigenvalues.
    pub fn extended_slots(&self) -> Vec<usize> {
        let mut slots = self.ordering.slots().to_vec();
        if self.p() == 2 {
            slots.extend([0, 1]);
        }
        slots
    }

    pub fn prefix_counts(&self, k: usize) -> Result<MultiIndex> {
        prefix_counts(self.ordering.slots(), self.p(), k)
    }

    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let potential = Potential::new(cfg.potential.clone())?;
        let spectrum = SourceSpectrum::new(cfg.spectrum.clone())?;
        Self::new(potential, spectrum, cfg.ordering.as_deref())
    }

    pub fn to_config(&self) -> ConfigFile {
        ConfigFile {
            potential: self.potential.coeffs().to_vec(),
            spectrum: self.spectrum.pairs().to_vec(),
            ordering: Some(self.ordering.values(&self.spectrum)),
        }
    }

    /// Symmetric window `[min a - 4, max a + 4]` used for grids and histograms.
    pub fn default_window(&self) -> (f64, f64) {
        (self.spectrum.a_min() - 4.0, self.spectrum.a_max() + 4.0)
    }
}

/// On-disk configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub potential: Vec<f64>,
    pub spectrum: Vec<(f64, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            let context = text
                .lines()
                .nth(e.line().saturating_sub(1))
                .unwrap_or_default()
                .trim();
            Error::Config(format!(
                "{}: {e} (near `{context}`)",
                path.display()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_eig(n1: usize, n2: usize) -> SourceSpectrum {
        SourceSpectrum::new(vec![(-1.0, n1), (1.0, n2)]).unwrap()
    }

    #[test]
    fn weight_values() {
        let g = Potential::gaussian();
        assert_eq!(weight_eval(&g, 0.0, 0.0), 1.0);
        assert!((weight_eval(&g, 1.0, 1.0) - 1.648_721_270_700_128).abs() < 1e-14);
        let q = Potential::quartic();
        assert!((weight_eval(&q, 0.0, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn weight_far_tail_is_finite() {
        let g = Potential::gaussian();
        assert_eq!(weight_eval(&g, 0.0, 1e4), 0.0);
        assert!(weight_eval(&g, 20.0, 30.0).is_finite());
    }

    #[test]
    fn prefix_counts_examples() {
        let slots = [0, 1, 0];
        assert_eq!(prefix_counts(&slots, 2, 0).unwrap().0, vec![0, 0]);
        assert_eq!(prefix_counts(&slots, 2, 2).unwrap().0, vec![1, 1]);
        assert_eq!(prefix_counts(&slots, 2, 3).unwrap().0, vec![2, 1]);
        assert!(matches!(
            prefix_counts(&slots, 2, 4),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn single_eigenvalue_default_ordering() {
        let spec = SourceSpectrum::new(vec![(0.0, 2)]).unwrap();
        let ens = Ensemble::new(Potential::gaussian(), spec, None).unwrap();
        assert_eq!(ens.ordering.values(&ens.spectrum), vec![0.0, 0.0]);
    }

    #[test]
    fn two_eigenvalue_tail() {
        let ord = Ordering::canonical(&two_eig(3, 2));
        assert_eq!(ord.slots(), &[0, 0, 1, 0, 1]);
        let ord = Ordering::canonical(&two_eig(1, 1));
        assert_eq!(ord.slots(), &[0, 1]);
    }

    #[test]
    fn rejects_bad_potentials() {
        assert!(matches!(
            Potential::new(vec![0.0, 0.0, 0.0, 1.0]),
            Err(Error::InvalidPotential(_))
        ));
        assert!(Potential::new(vec![0.0, 0.0, -1.0]).is_err());
        assert!(Potential::new(vec![1.0, 2.0]).is_err());
        assert_eq!(Potential::new(vec![0.0, 0.0, 0.5, 0.0]).unwrap(), Potential::gaussian());
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(matches!(
            SourceSpectrum::new(vec![(1.0, 1), (1.0, 1)]),
            Err(Error::DuplicateEigenvalue(_))
        ));
        assert!(matches!(
            SourceSpectrum::new(vec![(1.0, 0)]),
            Err(Error::ZeroMultiplicity(_))
        ));
        assert!(SourceSpectrum::new(vec![]).is_err());
    }

    #[test]
    fn rejects_mismatched_ordering() {
        let spec = two_eig(2, 1);
        assert!(Ordering::from_values(&spec, &[-1.0, 1.0, 1.0]).is_err());
        assert!(Ordering::from_values(&spec, &[-1.0, 1.0]).is_err());
        assert!(Ordering::from_values(&spec, &[-1.0, 0.5, 1.0]).is_err());
        assert!(Ordering::from_values(&spec, &[1.0, -1.0, -1.0]).is_ok());
    }

    #[test]
    fn config_round_trip() {
        let cfg = ConfigFile::parse(r#"{"potential": [0, 0, 0.5], "spectrum": [[-1, 1], [1, 2]]}"#)
            .unwrap();
        let ens = Ensemble::from_config(&cfg).unwrap();
        assert_eq!(ens.n(), 3);
        assert_eq!(ens.ordering.slots(), &[1, 0, 1]);
        let back = Ensemble::from_config(&ens.to_config()).unwrap();
        assert_eq!(back.ordering, ens.ordering);
    }
}
