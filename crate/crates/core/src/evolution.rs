//! Unitary evolution `U(z) = exp(−i·H·z)` and single-photon distributions.
//!
//! The Hamiltonian is diagonalised once; every propagation length then costs
//! one phase per eigenvalue and an `O(N²)` (single column) or `O(N³)` (full
//! map) reconstruction. Eigenvalues are stored relative to the mean of the
//! diagonal so that the large common propagation constant only enters through
//! a single global phase factor.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{check_symmetric, Hamiltonian};

/// Orthonormal eigendecomposition of a real symmetric matrix, eigenvalues
/// ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    shift: f64,
    /// Eigenvalues of `H − shift·I`, ascending.
    relative: Vec<f64>,
    /// Columns are eigenvectors.
    vectors: DMatrix<f64>,
}

impl Spectrum {
    /// Diagonalises any real symmetric matrix.
    pub fn from_symmetric(matrix: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(matrix)?;
        let n = matrix.nrows();
        let shift = matrix.diagonal().iter().sum::<f64>() / n as f64;
        let mut centred = matrix.clone();
        for i in 0..n {
            centred[(i, i)] -= shift;
        }
        let eig = SymmetricEigen::try_new(centred, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

        // stable sort keeps solver order among exact ties
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let relative = order.iter().map(|&m| eig.eigenvalues[m]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &m) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(m);
            // fix the sign: largest-magnitude component positive
            let mut pivot = 0;
            for i in 1..n {
                if v[i].abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                vectors[(i, col)] = sign * v[i];
            }
        }
        Ok(Self {
            shift,
            relative,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.relative.len()
    }

    /// Eigenvalues of `H`, ascending, μm⁻¹.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.relative.iter().map(|l| l + self.shift).collect()
    }

    /// Orthonormal eigenvectors as matrix columns, matching
    /// [`Spectrum::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues()));
        &self.vectors * lambda * self.vectors.transpose()
    }

    fn phases(&self, z: f64) -> Vec<Complex64> {
        let global = Complex64::from_polar(1.0, -self.shift * z);
        self.relative
            .iter()
            .map(|l| global * Complex64::from_polar(1.0, -l * z))
            .collect()
    }

    /// Full evolution operator at propagation length `z` (μm).
    pub fn evolve(&self, z: f64) -> Result<UnitaryMap> {
        check_length(z)?;
        let n = self.dim();
        let phases = self.phases(z);
        let v = &self.vectors;
        let mut u = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for a in 0..n {
            for b in a..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, p) in phases.iter().enumerate() {
                    acc += p * (v[(a, m)] * v[(b, m)]);
                }
                u[(a, b)] = acc;
                u[(b, a)] = acc;
            }
        }
        Ok(UnitaryMap { z, u })
    }

    /// Output amplitudes `U(z)[·, input]` for a photon launched into the
    /// 1-indexed waveguide `input_site`.
    pub fn amplitudes(&self, z: f64, input_site: usize) -> Result<Vec<Complex64>> {
        check_length(z)?;
        let col = site_index(input_site, self.dim())?;
        let v = &self.vectors;
        let weighted: Vec<Complex64> = self
            .phases(z)
            .iter()
            .enumerate()
            .map(|(m, p)| p * v[(col, m)])
            .collect();
        Ok((0..self.dim())
            .map(|a| {
                weighted
                    .iter()
                    .enumerate()
                    .fold(Complex64::new(0.0, 0.0), |acc, (m, w)| acc + w * v[(a, m)])
            })
            .collect())
    }
}

/// Diagonalises a lattice Hamiltonian.
pub fn diagonalize(h: &Hamiltonian) -> Result<Spectrum> {
    Spectrum::from_symmetric(h.matrix())
}

fn check_length(z: f64) -> Result<()> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::invalid(
            "propagation length",
            format!("z = {z} must be finite and nonnegative"),
        ));
    }
    Ok(())
}

/// 1-indexed label to storage index.
pub(crate) fn site_index(label: usize, n: usize) -> Result<usize> {
    if label == 0 || label > n {
        return Err(Error::invalid(
            "waveguide label",
            format!("{label} outside 1..={n}"),
        ));
    }
    Ok(label - 1)
}

/// Evolution operator at a fixed propagation length.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMap {
    z: f64,
    u: DMatrix<Complex64>,
}

impl UnitaryMap {
    pub fn identity(n: usize) -> Self {
        Self {
            z: 0.0,
            u: DMatrix::identity(n, n),
        }
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Amplitude from 1-indexed input `from` to output `to`.
    pub fn amplitude(&self, to: usize, from: usize) -> Result<Complex64> {
        let n = self.dim();
        Ok(self.u[(site_index(to, n)?, site_index(from, n)?)])
    }

    pub(crate) fn column(&self, input_site: usize) -> Result<Vec<Complex64>> {
        let col = site_index(input_site, self.dim())?;
        Ok(self.u.column(col).iter().copied().collect())
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        (self.u.adjoint() * &self.u - DMatrix::<Complex64>::identity(n, n)).norm()
    }

    /// `‖Uᵀ − U‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        (self.u.transpose() - &self.u).norm()
    }
}

/// Output probabilities of a single photon launched into one waveguide.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleParticleDistribution {
    pub p: Vec<f64>,
    /// 1-indexed.
    pub input_site: usize,
    pub z: f64,
}

impl SingleParticleDistribution {
    pub fn from_amplitudes(amplitudes: &[Complex64], input_site: usize, z: f64) -> Self {
        Self {
            p: amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            input_site,
            z,
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// `p_{j'} = |U_{j', input}|²`.
pub fn single_particle(u: &UnitaryMap, input_site: usize) -> Result<SingleParticleDistribution> {
    let col = u.column(input_site)?;
    Ok(SingleParticleDistribution::from_amplitudes(&col, input_site, u.z()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ArraySpec, EdgePerturbationModel};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn spectrum(spec: &ArraySpec) -> Spectrum {
        diagonalize(&spec.hamiltonian()).unwrap()
    }

    #[test]
    fn two_site_spectrum() {
        let (b, k) = (11.4, 0.3);
        let s = spectrum(&ArraySpec::uniform(2, b, k).unwrap());
        let ev = s.eigenvalues();
        assert!((ev[0] - (b - k)).abs() < 1e-14);
        assert!((ev[1] - (b + k)).abs() < 1e-14);
        let v = s.eigenvectors();
        let r = 1.0 / SQRT_2;
        // columns (1, -1)/√2 and (1, 1)/√2 up to sign
        assert!((v[(0, 0)].abs() - r).abs() < 1e-14);
        assert!((v[(0, 0)] + v[(1, 0)]).abs() < 1e-14);
        assert!((v[(0, 1)] - v[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn three_site_spectrum_matches_cosine_formula() {
        let (b, k) = (2.0, 0.7);
        let ev = spectrum(&ArraySpec::uniform(3, b, k).unwrap()).eigenvalues();
        let expected = [b - SQRT_2 * k, b, b + SQRT_2 * k];
        for (e, x) in ev.iter().zip(expected) {
            assert!((e - x).abs() < 1e-14, "{ev:?}");
        }
    }

    #[test]
    fn diagonal_matrix_has_identity_eigenvectors() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let s = Spectrum::from_symmetric(&m).unwrap();
        assert_eq!(s.eigenvalues(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s.eigenvectors(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn rejects_non_symmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            Spectrum::from_symmetric(&m),
            Err(Error::Validation { .. })
        ));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(Spectrum::from_symmetric(&rect).is_err());
    }

    #[test]
    fn spectrum_invariants_on_device() {
        let spec = EdgePerturbationModel::fitted_device().expand(21).unwrap();
        let h = spec.hamiltonian();
        let s = spectrum(&spec);
        let rel = (s.reconstruct() - h.matrix()).norm() / h.matrix().norm();
        assert!(rel < 1e-12, "{rel}");
        let v = s.eigenvectors();
        let ortho = (v.transpose() * v - DMatrix::identity(21, 21)).norm();
        assert!(ortho < 1e-12, "{ortho}");
        let ev = s.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_length_is_identity() {
        let s = spectrum(&EdgePerturbationModel::fitted_device().expand(21).unwrap());
        let u = s.evolve(0.0).unwrap();
        let id = DMatrix::<Complex64>::identity(21, 21);
        assert!((u.matrix() - id).norm() < 1e-14);
        let p = single_particle(&u, 11).unwrap();
        for (i, &x) in p.p.iter().enumerate() {
            let want = if i == 10 { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_length_rejected() {
        let s = spectrum(&ArraySpec::uniform(3, 1.0, 0.1).unwrap());
        assert!(s.evolve(-1.0).is_err());
        assert!(s.amplitudes(f64::NAN, 1).is_err());
    }

    #[test]
    fn directional_coupler_transfer() {
        let kappa = 0.005;
        let s = spectrum(&ArraySpec::uniform(2, 11.4, kappa).unwrap());
        let full = s.evolve(FRAC_PI_2 / kappa).unwrap();
        assert!((full.amplitude(1, 2).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
        let half = s.evolve(FRAC_PI_4 / kappa).unwrap();
        assert!((half.amplitude(1, 1).unwrap().norm_sqr() - 0.5).abs() < 1e-12);
        assert!((half.amplitude(1, 2).unwrap().norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_input() {
        let s = spectrum(&ArraySpec::uniform(4, 1.0, 0.1).unwrap());
        let u = s.evolve(3.0).unwrap();
        assert!(single_particle(&u, 0).is_err());
        assert!(single_particle(&u, 5).is_err());
        assert!(s.amplitudes(3.0, 5).is_err());
    }

    #[test]
    fn column_route_matches_full_map() {
        let s = spectrum(&EdgePerturbationModel::fitted_device().expand(21).unwrap());
        let u = s.evolve(775.0).unwrap();
        let col = s.amplitudes(775.0, 10).unwrap();
        for (a, c) in col.iter().enumerate() {
            assert!((u.matrix()[(a, 9)] - c).norm() < 1e-13);
        }
    }

    #[test]
    fn device_profiles_are_ballistic() {
        let s = spectrum(&EdgePerturbationModel::fitted_device().expand(21).unwrap());
        for z in [425.0, 775.0, 1125.0] {
            let p = SingleParticleDistribution::from_amplitudes(&s.amplitudes(z, 11).unwrap(), 11, z);
            assert!((p.total() - 1.0).abs() < 1e-10);
            // two outer lobes dominate the centre
            let left = p.p[..10].iter().cloned().fold(0.0, f64::max);
            let right = p.p[11..].iter().cloned().fold(0.0, f64::max);
            assert!(left > p.p[10] && right > p.p[10], "z={z}: {:?}", p.p);
            assert!((left - right).abs() < 1e-10);
        }
    }
}
