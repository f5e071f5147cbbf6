//! Two-photon coincidence statistics.
//!
//! For photons launched into waveguides `j` and `k`, the probability of one
//! detection in `a` and one in `b` is
//!
//! ```text
//! Γ[a][b] = |U[a][j]·U[b][k] + U[a][k]·U[b][j]|² / (1 + δ_ab)
//! ```
//!
//! for indistinguishable photons, and
//!
//! ```text
//! Γ'[a][b] = p[a][j]·p[b][k] + p[a][k]·p[b][j]
//! ```
//!
//! for distinguishable ones. The witness
//!
//! ```text
//! V[a][b] = (2/3)·√(Γ[a][a]·Γ[b][b]) − Γ[a][b]
//! ```
//!
//! is nonpositive for any classical input and is defined only for `a ≠ b`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolution::UnitaryMap;

/// Unordered pair of 1-indexed input waveguides, stored with `j < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairInput {
    j: usize,
    k: usize,
}

impl PairInput {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::invalid("input pair", "waveguide labels start at 1"));
        }
        if a == b {
            return Err(Error::invalid(
                "input pair",
                format!("both photons in waveguide {a}"),
            ));
        }
        Ok(Self {
            j: a.min(b),
            k: a.max(b),
        })
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if self.k > n {
            return Err(Error::invalid(
                "input pair",
                format!("waveguide {} outside 1..={n}", self.k),
            ));
        }
        Ok(())
    }
}

impl std::fmt::Display for PairInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.j, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    /// Indistinguishable photons; unordered pairs sum to one.
    Quantum,
    /// Distinguishable photons; the diagonal counts both orderings.
    Classical,
    /// Normalised coincidence counts; unordered pairs sum to one.
    Measured,
}

/// Symmetric, nonnegative matrix of pair-detection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub gamma: DMatrix<f64>,
    pub kind: CorrelationKind,
    pub input: Option<PairInput>,
    pub z: Option<f64>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// Σ over unordered pairs `a ≤ b`.
    pub fn unordered_sum(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|a| (a..n).map(move |b| (a, b)))
            .map(|(a, b)| self.gamma[(a, b)])
            .sum()
    }

    /// Σ_{a<b} Γ + ½·Σ_a Γ_aa, the normalisation of the classical kind.
    pub fn classical_sum(&self) -> f64 {
        let n = self.dim();
        let off: f64 = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .map(|(a, b)| self.gamma[(a, b)])
            .sum();
        off + 0.5 * (0..n).map(|a| self.gamma[(a, a)]).sum::<f64>()
    }

    /// Γ at 1-indexed output labels.
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.gamma[(a - 1, b - 1)]
    }
}

/// Quantum correlations from the two relevant columns of `U`.
pub(crate) fn quantum_from_columns(uj: &[Complex64], uk: &[Complex64]) -> DMatrix<f64> {
    let n = uj.len();
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let amp = uj[a] * uk[b] + uk[a] * uj[b];
            let p = amp.norm_sqr();
            if a == b {
                g[(a, a)] = 0.5 * p;
            } else {
                g[(a, b)] = p;
                g[(b, a)] = p;
            }
        }
    }
    g
}

pub(crate) fn classical_from_columns(uj: &[Complex64], uk: &[Complex64]) -> DMatrix<f64> {
    let pj: Vec<f64> = uj.iter().map(|c| c.norm_sqr()).collect();
    let pk: Vec<f64> = uk.iter().map(|c| c.norm_sqr()).collect();
    let n = pj.len();
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = pj[a] * pk[b] + pk[a] * pj[b];
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

fn input_columns(u: &UnitaryMap, input: PairInput) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    input.check(u.dim())?;
    Ok((u.column(input.j)?, u.column(input.k)?))
}

/// Coincidence probabilities for indistinguishable photons.
pub fn quantum_correlations(u: &UnitaryMap, input: PairInput) -> Result<CorrelationMatrix> {
    let (uj, uk) = input_columns(u, input)?;
    Ok(CorrelationMatrix {
        gamma: quantum_from_columns(&uj, &uk),
        kind: CorrelationKind::Quantum,
        input: Some(input),
        z: Some(u.z()),
    })
}

/// Coincidence probabilities for distinguishable photons.
pub fn classical_correlations(u: &UnitaryMap, input: PairInput) -> Result<CorrelationMatrix> {
    let (uj, uk) = input_columns(u, input)?;
    Ok(CorrelationMatrix {
        gamma: classical_from_columns(&uj, &uk),
        kind: CorrelationKind::Classical,
        input: Some(input),
        z: Some(u.z()),
    })
}

/// Nonclassicality witness per detector pair, with optional standard
/// deviations. Entries are `None` on the diagonal, and `sigma` entries are
/// `None` where a required diagonal probability is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationMatrix {
    n: usize,
    v: Vec<Option<f64>>,
    sigma: Option<Vec<Option<f64>>>,
}

impl ViolationMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// V at 1-indexed labels; `None` when `a == b`.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.v[(a - 1) * self.n + (b - 1)]
    }

    /// Standard deviation of V at 1-indexed labels, when counts were given.
    pub fn sigma(&self, a: usize, b: usize) -> Option<f64> {
        self.sigma.as_ref()?[(a - 1) * self.n + (b - 1)]
    }

    pub fn has_sigma(&self) -> bool {
        self.sigma.is_some()
    }

    /// `V/σ` at 1-indexed labels, defined where both are defined and σ > 0.
    pub fn z_score(&self, a: usize, b: usize) -> Option<f64> {
        let v = self.get(a, b)?;
        let s = self.sigma(a, b)?;
        (s > 0.0).then(|| v / s)
    }

    /// Row-major values with `None` for undefined entries.
    pub fn values(&self) -> &[Option<f64>] {
        &self.v
    }

    pub fn z_scores(&self) -> Vec<Option<f64>> {
        (0..self.n * self.n)
            .map(|i| self.z_score(i / self.n + 1, i % self.n + 1))
            .collect()
    }
}

pub(crate) fn violation_value(gaa: f64, gbb: f64, gab: f64) -> f64 {
    2.0 / 3.0 * (gaa * gbb).sqrt() - gab
}

fn violation_grid(gamma: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = gamma.nrows();
    let mut v = vec![None; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let x = violation_value(gamma[(a, a)], gamma[(b, b)], gamma[(a, b)]);
            v[a * n + b] = Some(x);
            v[b * n + a] = Some(x);
        }
    }
    v
}

/// Witness matrix of any correlation matrix.
pub fn violations(gamma: &CorrelationMatrix) -> ViolationMatrix {
    ViolationMatrix {
        n: gamma.dim(),
        v: violation_grid(&gamma.gamma),
        sigma: None,
    }
}

/// Symmetric matrix of raw coincidence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    n: usize,
    counts: Vec<u64>,
    pub note: String,
}

impl CountMatrix {
    /// Builds from 1-indexed unordered pairs; repeated pairs are an error.
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, u64)>,
    {
        if n < 2 {
            return Err(Error::invalid("count matrix", format!("need at least 2 channels, got {n}")));
        }
        let mut counts = vec![0u64; n * n];
        let mut seen = vec![false; n * n];
        for (a, b, c) in pairs {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::invalid(
                    "count matrix",
                    format!("pair ({a}, {b}) outside 1..={n}"),
                ));
            }
            let (lo, hi) = (a.min(b) - 1, a.max(b) - 1);
            if seen[lo * n + hi] {
                return Err(Error::invalid(
                    "count matrix",
                    format!("pair ({a}, {b}) listed twice"),
                ));
            }
            seen[lo * n + hi] = true;
            counts[lo * n + hi] = c;
            counts[hi * n + lo] = c;
        }
        let m = Self {
            n,
            counts,
            note: String::new(),
        };
        if m.total() == 0 {
            return Err(Error::invalid("count matrix", "all counts are zero"));
        }
        Ok(m)
    }

    /// Expected counts `round(total·Γ)` of an unordered-normalised matrix.
    pub fn from_expected(gamma: &CorrelationMatrix, total: f64) -> Result<Self> {
        let n = gamma.dim();
        let pairs = (0..n)
            .flat_map(|a| (a..n).map(move |b| (a, b)))
            .map(|(a, b)| (a + 1, b + 1, (total * gamma.gamma[(a, b)]).round().max(0.0) as u64));
        Self::from_pairs(n, pairs)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Count at 1-indexed labels.
    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[(a - 1) * self.n + (b - 1)]
    }

    /// Total over unordered pairs.
    pub fn total(&self) -> u64 {
        (0..self.n)
            .flat_map(|a| (a..self.n).map(move |b| (a, b)))
            .map(|(a, b)| self.counts[a * self.n + b])
            .sum()
    }

    /// Same shape with every entry replaced by `f(a, b, count)` on
    /// 1-indexed unordered pairs.
    pub fn map_pairs<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, u64) -> u64,
    {
        let n = self.n;
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for a in 0..n {
            for b in a..n {
                pairs.push((a + 1, b + 1, f(a + 1, b + 1, self.counts[a * n + b])));
            }
        }
        let mut m = Self::from_pairs(n, pairs)?;
        m.note = self.note.clone();
        Ok(m)
    }

    fn corrected(&self, corrections: &CountCorrections) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n;
        if let Some(eta) = &corrections.efficiency {
            if eta.len() != n {
                return Err(Error::invalid(
                    "detector efficiencies",
                    format!("{} channels given for a {n}-channel count matrix", eta.len()),
                ));
            }
            if let Some(bad) = eta.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(Error::invalid(
                    "detector efficiencies",
                    format!("efficiency {bad} must be positive"),
                ));
            }
        }
        let mut value = DMatrix::zeros(n, n);
        let mut variance = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let raw = self.counts[a * n + b] as f64;
                let mut scale = match &corrections.efficiency {
                    Some(eta) => 1.0 / (eta[a] * eta[b]),
                    None => 1.0,
                };
                if a == b && corrections.double_diagonal {
                    scale *= 2.0;
                }
                value[(a, b)] = raw * scale;
                variance[(a, b)] = raw * scale * scale;
            }
        }
        Ok((value, variance))
    }

    /// Normalised measured correlations after corrections.
    pub fn to_correlation(&self, corrections: &CountCorrections) -> Result<CorrelationMatrix> {
        let (value, _) = self.corrected(corrections)?;
        let t = unordered_total(&value);
        Ok(CorrelationMatrix {
            gamma: value / t,
            kind: CorrelationKind::Measured,
            input: None,
            z: None,
        })
    }
}

fn unordered_total(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (0..n)
        .flat_map(|a| (a..n).map(move |b| (a, b)))
        .map(|(a, b)| m[(a, b)])
        .sum()
}

/// Optional corrections applied to raw counts before normalisation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountCorrections {
    /// Relative detector efficiency per channel; counts become
    /// `c[a][b] / (η_a·η_b)`.
    pub efficiency: Option<Vec<f64>>,
    /// Doubles diagonal counts, for photon-number resolution by a fibre
    /// splitter that catches only half of the bunched events.
    pub double_diagonal: bool,
}

/// Witness from counts with first-order Poisson error propagation.
///
/// Each normalised entry is treated as an independent Poisson estimate with
/// `var(γ_ab) = c_ab / T²`, where `T` is the unordered total. Normalisation
/// covariance is neglected.
pub fn significance(counts: &CountMatrix, corrections: &CountCorrections) -> Result<ViolationMatrix> {
    let n = counts.dim();
    let (value, variance) = counts.corrected(corrections)?;
    let t = unordered_total(&value);
    if t <= 0.0 {
        return Err(Error::invalid("count matrix", "all counts are zero"));
    }
    let gamma = &value / t;
    let var = variance / (t * t);
    let v = violation_grid(&gamma);
    let mut sigma = vec![None; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let (gaa, gbb) = (gamma[(a, a)], gamma[(b, b)]);
            if gaa == 0.0 || gbb == 0.0 {
                continue;
            }
            let da = (gbb / gaa).sqrt() / 3.0;
            let db = (gaa / gbb).sqrt() / 3.0;
            let s = (da * da * var[(a, a)] + db * db * var[(b, b)] + var[(a, b)]).sqrt();
            sigma[a * n + b] = Some(s);
            sigma[b * n + a] = Some(s);
        }
    }
    Ok(ViolationMatrix {
        n,
        v,
        sigma: Some(sigma),
    })
}
