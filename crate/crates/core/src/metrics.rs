//! Similarity between correlation matrices, maximum violation and sweeps of
//! the maximum violation over propagation length.

use nalgebra::DMatrix;

use crate::correlations::{quantum_from_columns, violation_value, PairInput, ViolationMatrix};
use crate::error::{Error, Result};
use crate::evolution::{diagonalize, Spectrum};
use crate::exec::Execution;
use crate::lattice::ArraySpec;

/// Symmetric selection of detector pairs (1-indexed in its public API).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorMask {
    n: usize,
    allowed: Vec<bool>,
    name: String,
}

impl DetectorMask {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            allowed: vec![true; n * n],
            name: "full".into(),
        }
    }

    /// One detector bank on even labels and one on odd labels, plus the
    /// splitter-resolved diagonals of the odd bank. For 21 waveguides this
    /// selects 110 cross pairs and 11 diagonals, 121 entries in total.
    pub fn even_odd(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for a in 1..=n {
            for b in 1..=n {
                let cross = (a + b) % 2 == 1;
                let odd_diag = a == b && a % 2 == 1;
                allowed[(a - 1) * n + (b - 1)] = cross || odd_diag;
            }
        }
        Self {
            n,
            allowed,
            name: "even-odd".into(),
        }
    }

    /// Mask containing exactly the listed unordered 1-indexed pairs.
    pub fn from_pairs<I>(n: usize, pairs: I, name: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut allowed = vec![false; n * n];
        for (a, b) in pairs {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::invalid(
                    "detector mask",
                    format!("pair ({a}, {b}) outside 1..={n}"),
                ));
            }
            allowed[(a - 1) * n + (b - 1)] = true;
            allowed[(b - 1) * n + (a - 1)] = true;
        }
        Ok(Self {
            n,
            allowed,
            name: name.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether the 1-indexed pair is selected.
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.allowed[(a - 1) * self.n + (b - 1)]
    }

    /// Number of selected unordered pairs, diagonal included.
    pub fn unordered_len(&self) -> usize {
        (1..=self.n)
            .flat_map(|a| (a..=self.n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.contains(a, b))
            .count()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::invalid(
                "detector mask",
                format!("mask is {}x{}, data is {n}x{n}", self.n, self.n),
            ));
        }
        Ok(())
    }
}

/// `S = (Σ√(a·b))² / (Σa · Σb)` over all entries (or the masked ones).
///
/// The matrices may be any shape; a mask requires them to be square and of
/// the mask's dimension.
pub fn similarity(a: &DMatrix<f64>, b: &DMatrix<f64>, mask: Option<&DetectorMask>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(
            "similarity",
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    if let Some(m) = mask {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("similarity", "a mask needs square matrices"));
        }
        m.check_dim(a.nrows())?;
    }
    let (mut overlap, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if mask.is_some_and(|m| !m.contains(r + 1, c + 1)) {
                continue;
            }
            let (x, y) = (a[(r, c)], b[(r, c)]);
            if !(x >= 0.0 && y >= 0.0) {
                return Err(Error::invalid(
                    "similarity",
                    format!("negative or non-finite entry at ({}, {})", r + 1, c + 1),
                ));
            }
            overlap += (x * y).sqrt();
            sa += x;
            sb += y;
        }
    }
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::invalid("similarity", "a matrix sums to zero over the compared entries"));
    }
    Ok((overlap * overlap / (sa * sb)).min(1.0))
}

/// Largest defined entry and its 1-indexed pair `(a, b)` with `a < b`.
/// Ties go to the lexicographically smallest pair.
pub fn max_violation(v: &ViolationMatrix, mask: Option<&DetectorMask>) -> Result<(f64, (usize, usize))> {
    if let Some(m) = mask {
        m.check_dim(v.dim())?;
    }
    let n = v.dim();
    let mut best: Option<(f64, (usize, usize))> = None;
    for a in 1..=n {
        for b in (a + 1)..=n {
            if mask.is_some_and(|m| !m.contains(a, b)) {
                continue;
            }
            if let Some(x) = v.get(a, b) {
                if best.is_none_or(|(bx, _)| x > bx) {
                    best = Some((x, (a, b)));
                }
            }
        }
    }
    best.ok_or_else(|| Error::invalid("violation matrix", "no defined off-diagonal entry"))
}

fn max_violation_dense(gamma: &DMatrix<f64>, mask: Option<&DetectorMask>) -> Option<(f64, (usize, usize))> {
    let n = gamma.nrows();
    let mut best: Option<(f64, (usize, usize))> = None;
    for a in 0..n {
        for b in (a + 1)..n {
            if mask.is_some_and(|m| !m.contains(a + 1, b + 1)) {
                continue;
            }
            let x = violation_value(gamma[(a, a)], gamma[(b, b)], gamma[(a, b)]);
            if best.is_none_or(|(bx, _)| x > bx) {
                best = Some((x, (a + 1, b + 1)));
            }
        }
    }
    best
}

/// Maximum violation against propagation length.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub z_values: Vec<f64>,
    pub v_max: Vec<f64>,
    /// 1-indexed detector pairs attaining each maximum.
    pub argmax_pairs: Vec<(usize, usize)>,
}

impl SweepResult {
    /// First grid point where `v_max` exceeds `threshold`.
    pub fn onset(&self, threshold: f64) -> Option<f64> {
        self.v_max
            .iter()
            .position(|&v| v > threshold)
            .map(|i| self.z_values[i])
    }

    /// First grid point after the onset where `v_max` falls back to
    /// `threshold` or below.
    pub fn first_return_to_zero(&self, threshold: f64) -> Option<f64> {
        let start = self.v_max.iter().position(|&v| v > threshold)?;
        self.v_max[start..]
            .iter()
            .position(|&v| v <= threshold)
            .map(|i| self.z_values[start + i])
    }

    /// Grid points that are strict local minima of `v_max`.
    pub fn local_minima(&self) -> Vec<f64> {
        self.extrema(|prev, x, next| x < prev && x < next)
    }

    /// Grid points that are strict local maxima of `v_max`.
    pub fn local_maxima(&self) -> Vec<f64> {
        self.extrema(|prev, x, next| x > prev && x > next)
    }

    fn extrema(&self, pick: impl Fn(f64, f64, f64) -> bool) -> Vec<f64> {
        self.v_max
            .windows(3)
            .enumerate()
            .filter(|(_, w)| pick(w[0], w[1], w[2]))
            .map(|(i, _)| self.z_values[i + 1])
            .collect()
    }
}

/// Evenly spaced grid `start, start + step, …` up to `stop` (inclusive
/// within a tenth of a step).
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start && start >= 0.0) {
        return Err(Error::invalid(
            "grid",
            format!("{start}:{stop}:{step} needs 0 ≤ start ≤ stop and step > 0"),
        ));
    }
    let count = ((stop - start) / step + 0.1).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Default sweep grid, 0 to 2000 μm in 5 μm steps.
pub fn default_grid() -> Vec<f64> {
    grid(0.0, 2000.0, 5.0).expect("static grid")
}

/// Quantum correlations, witness and its maximum at every grid length.
/// Grid lengths are total propagation lengths, not design lengths.
pub fn sweep_max_violation(
    spec: &ArraySpec,
    input: PairInput,
    z_grid: &[f64],
    mask: Option<&DetectorMask>,
    exec: Execution,
) -> Result<SweepResult> {
    let spectrum = diagonalize(&spec.hamiltonian())?;
    sweep_spectrum(&spectrum, input, z_grid, mask, exec)
}

pub(crate) fn sweep_spectrum(
    spectrum: &Spectrum,
    input: PairInput,
    z_grid: &[f64],
    mask: Option<&DetectorMask>,
    exec: Execution,
) -> Result<SweepResult> {
    input.check(spectrum.dim())?;
    if let Some(m) = mask {
        m.check_dim(spectrum.dim())?;
    }
    if z_grid.is_empty() {
        return Err(Error::invalid("grid", "empty"));
    }
    if z_grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::invalid("grid", "z values must be strictly increasing"));
    }
    let points = exec.map(z_grid, |&z| -> Result<(f64, (usize, usize))> {
        let uj = spectrum.amplitudes(z, input.j())?;
        let uk = spectrum.amplitudes(z, input.k())?;
        let gamma = quantum_from_columns(&uj, &uk);
        max_violation_dense(&gamma, mask)
            .ok_or_else(|| Error::invalid("detector mask", "selects no off-diagonal pair"))
    });
    let mut out = SweepResult {
        z_values: z_grid.to_vec(),
        v_max: Vec::with_capacity(z_grid.len()),
        argmax_pairs: Vec::with_capacity(z_grid.len()),
    };
    for p in points {
        let (v, pair) = p?;
        out.v_max.push(v);
        out.argmax_pairs.push(pair);
    }
    Ok(out)
}
