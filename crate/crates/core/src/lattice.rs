//! Waveguide-array geometry and its single-excitation Hamiltonian.
//!
//! A planar array of `N` single-mode waveguides with nearest-neighbour
//! evanescent coupling is described by one propagation constant per site and
//! one coupling constant per adjacent pair. In the single-photon subspace the
//! Hamiltonian is the real symmetric tridiagonal matrix with the propagation
//! constants on the diagonal and the couplings on the first off-diagonals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation constant of the nominal uniform array, μm⁻¹.
pub const NOMINAL_BETA: f64 = 11.40462;
/// Coupling constant of the nominal uniform array, μm⁻¹.
pub const NOMINAL_KAPPA: f64 = 0.00489;
/// Extra effective coupling length contributed by the input and output
/// spreading regions, μm.
pub const SPREADING_OFFSET: f64 = 75.0;
/// Waveguide count of the measured devices.
pub const DEVICE_SITES: usize = 21;
/// Designed coupling-region lengths of the three measured devices, μm.
pub const DEVICE_LENGTHS: [f64; 3] = [350.0, 700.0, 1050.0];

/// Geometry of a waveguide array: per-site propagation constants, per-edge
/// couplings and the effective-length offset added to every design length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    beta: Vec<f64>,
    kappa: Vec<f64>,
    z_offset: f64,
}

impl ArraySpec {
    /// Builds a spec from explicit vectors; `kappa` must have one entry
    /// fewer than `beta`.
    pub fn new(beta: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::invalid(
                "array",
                format!("need at least 2 waveguides, got {}", beta.len()),
            ));
        }
        if kappa.len() + 1 != beta.len() {
            return Err(Error::invalid(
                "array",
                format!(
                    "{} sites need {} couplings, got {}",
                    beta.len(),
                    beta.len() - 1,
                    kappa.len()
                ),
            ));
        }
        if let Some((i, b)) = beta.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::invalid(
                "propagation constant",
                format!("beta at site {} is {b}, must be positive", i + 1),
            ));
        }
        if let Some((i, k)) = kappa.iter().enumerate().find(|(_, k)| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::invalid(
                "coupling constant",
                format!("kappa between sites {} and {} is {k}, must be positive", i + 1, i + 2),
            ));
        }
        Ok(Self {
            beta,
            kappa,
            z_offset: 0.0,
        })
    }

    /// Uniform array with constant propagation and coupling constants.
    pub fn uniform(n_sites: usize, beta: f64, kappa: f64) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::invalid(
                "array",
                format!("need at least 2 waveguides, got {n_sites}"),
            ));
        }
        Self::new(vec![beta; n_sites], vec![kappa; n_sites - 1])
    }

    pub fn with_z_offset(mut self, z_offset: f64) -> Result<Self> {
        if !(z_offset.is_finite() && z_offset >= 0.0) {
            return Err(Error::invalid(
                "z offset",
                format!("{z_offset} must be finite and nonnegative"),
            ));
        }
        self.z_offset = z_offset;
        Ok(self)
    }

    pub fn n_sites(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn z_offset(&self) -> f64 {
        self.z_offset
    }

    /// Total effective propagation length for a designed coupling length.
    pub fn total_length(&self, z_design: f64) -> f64 {
        z_design + self.z_offset
    }

    /// The same array with waveguide labels reversed (`j → N + 1 − j`).
    pub fn reversed(&self) -> Self {
        let mut beta = self.beta.clone();
        let mut kappa = self.kappa.clone();
        beta.reverse();
        kappa.reverse();
        Self {
            beta,
            kappa,
            z_offset: self.z_offset,
        }
    }

    pub fn is_reversal_symmetric(&self) -> bool {
        let r = self.reversed();
        r.beta == self.beta && r.kappa == self.kappa
    }

    pub fn hamiltonian(&self) -> Hamiltonian {
        let n = self.n_sites();
        let mut m = DMatrix::zeros(n, n);
        for (i, &b) in self.beta.iter().enumerate() {
            m[(i, i)] = b;
        }
        for (i, &k) in self.kappa.iter().enumerate() {
            m[(i, i + 1)] = k;
            m[(i + 1, i)] = k;
        }
        Hamiltonian { matrix: m }
    }
}

/// Reversal-symmetric array whose two outermost sites and edges on each side
/// carry their own parameters.
///
/// Sites `1, N` take `beta_edge`, sites `2, N−1` take `beta_next`; edges
/// `1, N−1` take `kappa_edge` and edges `2, N−2` take `kappa_next`. Everything
/// else is bulk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePerturbationModel {
    pub beta_edge: f64,
    pub beta_next: f64,
    pub beta_bulk: f64,
    pub kappa_edge: f64,
    pub kappa_next: f64,
    pub kappa_bulk: f64,
}

impl EdgePerturbationModel {
    pub const MIN_SITES: usize = 5;

    pub fn uniform(beta: f64, kappa: f64) -> Self {
        Self {
            beta_edge: beta,
            beta_next: beta,
            beta_bulk: beta,
            kappa_edge: kappa,
            kappa_next: kappa,
            kappa_bulk: kappa,
        }
    }

    /// Designed uniform array (β = 11.40462 μm⁻¹, κ = 0.00489 μm⁻¹).
    pub fn nominal() -> Self {
        Self::uniform(NOMINAL_BETA, NOMINAL_KAPPA)
    }

    /// Parameters obtained by fitting the measured two-photon correlations
    /// of the fabricated 21-waveguide devices.
    pub fn fitted_device() -> Self {
        Self {
            beta_edge: 11.385,
            beta_next: 11.403,
            beta_bulk: 11.397,
            kappa_edge: 0.0049,
            kappa_next: 0.0058,
            kappa_bulk: 0.00513,
        }
    }

    pub fn expand(&self, n_sites: usize) -> Result<ArraySpec> {
        if n_sites < Self::MIN_SITES {
            return Err(Error::invalid(
                "array",
                format!(
                    "edge-perturbed arrays need at least {} sites so edge, next and bulk regions are distinct, got {n_sites}",
                    Self::MIN_SITES
                ),
            ));
        }
        let beta = (0..n_sites)
            .map(|i| match i.min(n_sites - 1 - i) {
                0 => self.beta_edge,
                1 => self.beta_next,
                _ => self.beta_bulk,
            })
            .collect();
        let n_edges = n_sites - 1;
        let kappa = (0..n_edges)
            .map(|i| match i.min(n_edges - 1 - i) {
                0 => self.kappa_edge,
                1 => self.kappa_next,
                _ => self.kappa_bulk,
            })
            .collect();
        ArraySpec::new(beta, kappa)
    }

    /// Adds `shift` to every propagation constant.
    pub fn shifted_beta(&self, shift: f64) -> Self {
        Self {
            beta_edge: self.beta_edge + shift,
            beta_next: self.beta_next + shift,
            beta_bulk: self.beta_bulk + shift,
            ..*self
        }
    }

    /// Negates the edge and next-to-edge β offsets relative to the bulk.
    ///
    /// On a chain, `H → 2β_bulk − H` followed by the alternating-sign gauge
    /// maps the model onto this one, so every `|U|`-derived quantity
    /// (distributions, correlations, similarities) is identical for both.
    pub fn mirrored_offsets(&self) -> Self {
        Self {
            beta_edge: 2.0 * self.beta_bulk - self.beta_edge,
            beta_next: 2.0 * self.beta_bulk - self.beta_next,
            ..*self
        }
    }
}

/// Real symmetric tridiagonal single-excitation Hamiltonian, μm⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    matrix: DMatrix<f64>,
}

impl Hamiltonian {
    /// Wraps a matrix after checking it is square, exactly symmetric and
    /// tridiagonal.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&matrix)?;
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) > 1 && matrix[(i, j)] != 0.0 {
                    return Err(Error::invalid(
                        "hamiltonian",
                        format!("entry ({}, {}) beyond nearest neighbours is nonzero", i + 1, j + 1),
                    ));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::invalid(
            "matrix",
            format!("expected a nonempty square matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if let Some(bad) = m.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix", format!("non-finite entry {bad}")));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::invalid(
                    "matrix",
                    format!("not symmetric at ({}, {})", i + 1, j + 1),
                ));
            }
        }
    }
    Ok(())
}

/// Coupling constant of two identical waveguides from the propagation
/// constants of the even and odd supermodes of the pair. The sign is not
/// checked.
pub fn kappa_from_normal_modes(beta_even: f64, beta_odd: f64) -> f64 {
    (beta_odd - beta_even) / 2.0
}

/// Propagation constant `n·2π/λ` for effective index `n` and vacuum
/// wavelength `λ` in μm.
pub fn propagation_constant(effective_index: f64, wavelength_um: f64) -> f64 {
    effective_index * 2.0 * std::f64::consts::PI / wavelength_um
}
