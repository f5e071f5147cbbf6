//! Fitting edge-perturbation parameters to measured two-photon data.
//!
//! The objective is the mean similarity between each dataset's normalised
//! coincidences and the quantum correlations predicted by a candidate model
//! at that dataset's total propagation length. Only `|U|` enters, so the
//! bulk propagation constant is a global phase and stays fixed at the
//! initial model's value. Five parameters are fitted:
//!
//! | index | parameter                  |
//! |-------|----------------------------|
//! | 0     | `beta_edge − beta_bulk`    |
//! | 1     | `beta_next − beta_bulk`    |
//! | 2     | `kappa_edge`               |
//! | 3     | `kappa_next`               |
//! | 4     | `kappa_bulk`               |
//!
//! Negating both β offsets leaves every correlation unchanged (see
//! [`EdgePerturbationModel::mirrored_offsets`]). By default the fit reports
//! the representative with a non-positive edge offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::correlations::{quantum_from_columns, CorrelationKind, CorrelationMatrix, CountCorrections, CountMatrix, PairInput};
use crate::error::{Error, Result};
use crate::evolution::diagonalize;
use crate::exec::Execution;
use crate::lattice::{EdgePerturbationModel, NOMINAL_KAPPA};
use crate::metrics::{similarity, DetectorMask};
use crate::simplex::{maximize, SimplexOptions, SimplexOutcome};

pub const FREE_PARAMETERS: [&str; 5] = [
    "beta_edge_offset",
    "beta_next_offset",
    "kappa_edge",
    "kappa_next",
    "kappa_bulk",
];

/// One measured device length and input combination.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub z_design: f64,
    pub input: PairInput,
    /// Normalised so unordered pairs sum to one.
    pub target: CorrelationMatrix,
    pub counts: Option<CountMatrix>,
    pub corrections: CountCorrections,
    pub mask: Option<DetectorMask>,
}

impl Dataset {
    pub fn from_counts(
        z_design: f64,
        input: PairInput,
        counts: CountMatrix,
        corrections: CountCorrections,
        mask: Option<DetectorMask>,
    ) -> Result<Self> {
        let mut target = counts.to_correlation(&corrections)?;
        target.input = Some(input);
        target.z = Some(z_design);
        Ok(Self {
            z_design,
            input,
            target,
            counts: Some(counts),
            corrections,
            mask,
        })
    }

    /// Dataset from an exact correlation matrix (no count statistics).
    pub fn from_correlation(z_design: f64, input: PairInput, gamma: CorrelationMatrix, mask: Option<DetectorMask>) -> Self {
        let total = gamma.unordered_sum();
        let target = CorrelationMatrix {
            gamma: gamma.gamma / total,
            kind: CorrelationKind::Measured,
            input: Some(input),
            z: Some(z_design),
        };
        Self {
            z_design,
            input,
            target,
            counts: None,
            corrections: CountCorrections::default(),
            mask,
        }
    }
}

/// Box constraints on the five free parameters, μm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterBounds {
    pub lower: [f64; 5],
    pub upper: [f64; 5],
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            lower: [-0.05, -0.05, 0.001, 0.001, 0.001],
            upper: [0.05, 0.05, 0.015, 0.015, 0.015],
        }
    }
}

impl ParameterBounds {
    fn contains(&self, p: &[f64; 5]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| (*lo..=*hi).contains(x))
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub datasets: Vec<Dataset>,
    pub n_sites: usize,
    /// Added to every design length, μm.
    pub z_offset: f64,
    /// Starting point; its `beta_bulk` is held fixed.
    pub initial: EdgePerturbationModel,
    pub bounds: ParameterBounds,
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::invalid("calibration problem", "no datasets"));
        }
        if self.n_sites < EdgePerturbationModel::MIN_SITES {
            return Err(Error::invalid(
                "calibration problem",
                format!("need at least {} sites", EdgePerturbationModel::MIN_SITES),
            ));
        }
        if !(self.z_offset.is_finite() && self.z_offset >= 0.0) {
            return Err(Error::invalid("calibration problem", "z offset must be nonnegative"));
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if d.target.dim() != self.n_sites {
                return Err(Error::invalid(
                    "calibration problem",
                    format!("dataset {} has {} channels, problem has {} sites", i + 1, d.target.dim(), self.n_sites),
                ));
            }
            d.input.check(self.n_sites)?;
            if !(d.z_design.is_finite() && d.z_design >= 0.0) {
                return Err(Error::invalid("calibration problem", format!("dataset {} has negative length", i + 1)));
            }
            if let Some(m) = &d.mask {
                if m.dim() != self.n_sites {
                    return Err(Error::invalid("calibration problem", format!("dataset {} mask has wrong size", i + 1)));
                }
            }
        }
        let b = &self.bounds;
        if b.lower.iter().zip(&b.upper).any(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::invalid("parameter bounds", "every lower bound must be below its upper bound"));
        }
        if b.lower[2..].iter().any(|&k| k <= 0.0) {
            return Err(Error::invalid("parameter bounds", "coupling bounds must be positive"));
        }
        if !b.contains(&self.free_parameters(&self.initial)) {
            return Err(Error::invalid("calibration problem", "initial model outside bounds"));
        }
        Ok(())
    }

    /// Free-parameter vector of `model` relative to the fixed bulk β.
    pub fn free_parameters(&self, model: &EdgePerturbationModel) -> [f64; 5] {
        [
            model.beta_edge - model.beta_bulk,
            model.beta_next - model.beta_bulk,
            model.kappa_edge,
            model.kappa_next,
            model.kappa_bulk,
        ]
    }

    /// Model for a free-parameter vector, with β re-expressed around the
    /// fixed bulk value.
    pub fn model(&self, p: &[f64]) -> EdgePerturbationModel {
        let bulk = self.initial.beta_bulk;
        EdgePerturbationModel {
            beta_edge: bulk + p[0],
            beta_next: bulk + p[1],
            beta_bulk: bulk,
            kappa_edge: p[2],
            kappa_next: p[3],
            kappa_bulk: p[4],
        }
    }
}

/// Similarity of every dataset with the model's predictions.
pub fn dataset_similarities(model: &EdgePerturbationModel, problem: &CalibrationProblem) -> Result<Vec<f64>> {
    let spec = model.expand(problem.n_sites)?;
    let spectrum = diagonalize(&spec.hamiltonian())?;
    problem
        .datasets
        .iter()
        .map(|d| {
            let z = d.z_design + problem.z_offset;
            let uj = spectrum.amplitudes(z, d.input.j())?;
            let uk = spectrum.amplitudes(z, d.input.k())?;
            let theory = quantum_from_columns(&uj, &uk);
            similarity(&d.target.gamma, &theory, d.mask.as_ref())
        })
        .collect()
}

/// Mean similarity over datasets, equally weighted.
pub fn objective(model: &EdgePerturbationModel, problem: &CalibrationProblem) -> Result<f64> {
    let s = dataset_similarities(model, problem)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_evaluations: usize,
    /// Simplex spread in parameter units, μm⁻¹.
    pub tolerance: f64,
    /// Report the mirror image with a non-positive edge β offset.
    pub canonical_sign: bool,
    /// Extra starting points drawn uniformly inside the bounds.
    pub restarts: usize,
    /// Seed for the extra starting points.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 5000,
            tolerance: 1e-7,
            canonical_sign: true,
            restarts: 8,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub fitted: EdgePerturbationModel,
    pub similarity_per_dataset: Vec<f64>,
    /// Mean of `similarity_per_dataset`.
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective seen after each evaluation.
    pub trace: Vec<f64>,
    /// Whether the mirror-image offsets were reported.
    pub mirrored: bool,
}

/// Starting points: the problem's initial model, the nominal uniform array
/// and `restarts` seeded uniform draws inside the bounds.
fn starting_points(problem: &CalibrationProblem, options: &FitOptions) -> Vec<[f64; 5]> {
    let bounds = problem.bounds;
    let start = problem.free_parameters(&problem.initial);
    let mut nominal = [0.0, 0.0, NOMINAL_KAPPA, NOMINAL_KAPPA, NOMINAL_KAPPA];
    for (x, (lo, hi)) in nominal.iter_mut().zip(bounds.lower.iter().zip(&bounds.upper)) {
        *x = x.clamp(*lo, *hi);
    }
    let mut points = vec![start];
    if nominal != start {
        points.push(nominal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        let mut p = [0.0; 5];
        for (i, x) in p.iter_mut().enumerate() {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            *x = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
        points.push(p);
    }
    points
}

/// Appends one local search to the running trace and best point; returns
/// whether it converged.
fn record(out: SimplexOutcome, trace: &mut Vec<f64>, evaluations: &mut usize, best: &mut Option<(Vec<f64>, f64)>) -> bool {
    let floor = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
    trace.extend(out.trace.iter().map(|v| v.max(floor)));
    *evaluations += out.evaluations;
    if best.as_ref().is_none_or(|(_, v)| out.value > *v) {
        *best = Some((out.best, out.value));
    }
    out.converged
}

/// Bounded simplex maximisation of [`objective`].
///
/// Every starting point (see [`FitOptions::restarts`]) gets an equal share of
/// the evaluation budget; the best result is then polished with a fresh,
/// smaller simplex using whatever budget remains. Starting points are
/// searched concurrently when the execution mode allows, and the result does
/// not depend on it.
pub fn fit(problem: &CalibrationProblem, options: &FitOptions) -> Result<CalibrationResult> {
    problem.validate()?;
    let bounds = problem.bounds;
    let f = |p: &[f64]| objective(&problem.model(p), problem);
    let search = |from: &[f64], budget: usize, step: f64, execution: Execution| {
        maximize(
            &f,
            from,
            &bounds.lower,
            &bounds.upper,
            SimplexOptions {
                max_evaluations: budget,
                tolerance: options.tolerance,
                initial_step: step,
                execution,
            },
        )
    };

    let points = starting_points(problem, options);
    let share = (options.max_evaluations / (points.len() + 1)).max(1);
    let runs = options
        .execution
        .map(&points, |p| search(p, share, 0.1, Execution::Sequential))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut trace: Vec<f64> = Vec::new();
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    for out in runs {
        converged |= record(out, &mut trace, &mut evaluations, &mut best);
    }
    let remaining = options.max_evaluations.saturating_sub(evaluations);
    if let (true, Some((from, _))) = (remaining > 0, best.clone()) {
        let out = search(&from, remaining, 0.02, options.execution)?;
        converged = record(out, &mut trace, &mut evaluations, &mut best);
    }

    let (params, _) = best.ok_or_else(|| Error::Numerical("no objective evaluations".into()))?;
    let mut fitted = problem.model(&params);
    let mut mirrored = false;
    if options.canonical_sign {
        let edge = fitted.beta_edge - fitted.beta_bulk;
        let next = fitted.beta_next - fitted.beta_bulk;
        if edge > 0.0 || (edge == 0.0 && next > 0.0) {
            let candidate = fitted.mirrored_offsets();
            if bounds.contains(&problem.free_parameters(&candidate)) {
                fitted = candidate;
                mirrored = true;
            }
        }
    }
    let similarity_per_dataset = dataset_similarities(&fitted, problem)?;
    let objective = similarity_per_dataset.iter().sum::<f64>() / similarity_per_dataset.len() as f64;
    Ok(CalibrationResult {
        fitted,
        similarity_per_dataset,
        objective,
        evaluations,
        converged,
        trace,
        mirrored,
    })
}

/// Poisson resample of a count matrix: every entry `c` becomes a draw from
/// `Poisson(c)`.
pub fn poisson_resample(counts: &CountMatrix, rng: &mut ChaCha8Rng) -> Result<CountMatrix> {
    counts.map_pairs(|_, _, c| poisson_draw(c as f64, rng))
}

fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Independent Poisson counts with means `total·Γ[a][b]` over unordered
/// pairs of an unordered-normalised matrix.
pub fn poisson_counts(gamma: &CorrelationMatrix, total: f64, rng: &mut ChaCha8Rng) -> Result<CountMatrix> {
    let n = gamma.dim();
    let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            pairs.push((a + 1, b + 1, poisson_draw(total * gamma.gamma[(a, b)], rng)));
        }
    }
    CountMatrix::from_pairs(n, pairs)
}

/// Standard deviation of each dataset's similarity under Poisson bootstrap
/// of its counts; `None` for datasets without counts.
pub fn bootstrap_similarity_sd(
    model: &EdgePerturbationModel,
    problem: &CalibrationProblem,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Option<f64>>> {
    let spec = model.expand(problem.n_sites)?;
    let spectrum = diagonalize(&spec.hamiltonian())?;
    let mut out = Vec::with_capacity(problem.datasets.len());
    for (di, d) in problem.datasets.iter().enumerate() {
        let Some(counts) = &d.counts else {
            out.push(None);
            continue;
        };
        if resamples < 2 {
            out.push(None);
            continue;
        }
        let z = d.z_design + problem.z_offset;
        let theory = quantum_from_columns(&spectrum.amplitudes(z, d.input.j())?, &spectrum.amplitudes(z, d.input.k())?);
        let values = exec
            .map_range(resamples, |r| -> Result<f64> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((di * resamples + r) as u64);
                let resampled = poisson_resample(counts, &mut rng)?;
                let g = resampled.to_correlation(&d.corrections)?;
                similarity(&g.gamma, &theory, d.mask.as_ref())
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        out.push(Some(var.sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::quantum_correlations;
    use crate::lattice::{DEVICE_LENGTHS, DEVICE_SITES, SPREADING_OFFSET};

    fn exact_problem(truth: &EdgePerturbationModel, lengths: &[f64], inputs: &[(usize, usize)]) -> CalibrationProblem {
        let spec = truth.expand(DEVICE_SITES).unwrap();
        let s = diagonalize(&spec.hamiltonian()).unwrap();
        let mut datasets = Vec::new();
        for &z in lengths {
            let u = s.evolve(z + SPREADING_OFFSET).unwrap();
            for &(j, k) in inputs {
                let input = PairInput::new(j, k).unwrap();
                let g = quantum_correlations(&u, input).unwrap();
                datasets.push(Dataset::from_correlation(z, input, g, None));
            }
        }
        CalibrationProblem {
            datasets,
            n_sites: DEVICE_SITES,
            z_offset: SPREADING_OFFSET,
            initial: EdgePerturbationModel::nominal(),
            bounds: ParameterBounds::default(),
        }
    }

    #[test]
    fn self_consistent_objective_is_one() {
        let truth = EdgePerturbationModel::fitted_device();
        let p = exact_problem(&truth, &DEVICE_LENGTHS, &[(10, 12), (11, 12)]);
        let o = objective(&truth, &p).unwrap();
        assert!((o - 1.0).abs() < 1e-12, "{o}");
        let other = objective(&EdgePerturbationModel::nominal(), &p).unwrap();
        assert!(other < 1.0 - 1e-4, "{other}");
    }

    #[test]
    fn objective_ignores_global_beta_shift() {
        let truth = EdgePerturbationModel::fitted_device();
        let p = exact_problem(&truth, &DEVICE_LENGTHS, &[(10, 12), (11, 12)]);
        let m = EdgePerturbationModel::nominal();
        let base = objective(&m, &p).unwrap();
        for c in [-3.0, 0.25, 7.5] {
            let shifted = objective(&m.shifted_beta(c), &p).unwrap();
            assert!((shifted - base).abs() < 1e-12, "{c}: {shifted} vs {base}");
        }
    }

    #[test]
    fn objective_ignores_offset_mirror() {
        let truth = EdgePerturbationModel::fitted_device();
        let p = exact_problem(&truth, &DEVICE_LENGTHS, &[(10, 12), (11, 12)]);
        let mirrored = objective(&truth.mirrored_offsets(), &p).unwrap();
        assert!((mirrored - 1.0).abs() < 1e-12, "{mirrored}");
    }

    #[test]
    fn validation() {
        let truth = EdgePerturbationModel::fitted_device();
        let mut p = exact_problem(&truth, &[350.0], &[(10, 12)]);
        assert!(p.validate().is_ok());
        p.initial.kappa_bulk = 0.5;
        assert!(p.validate().is_err());
        p.initial = EdgePerturbationModel::nominal();
        p.bounds.lower[4] = 0.02;
        assert!(p.validate().is_err());
        p.bounds = ParameterBounds::default();
        p.datasets.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn unidentifiable_edges_stay_in_bounds() {
        // light has not reached the edges at this length
        let truth = EdgePerturbationModel::fitted_device();
        let p = exact_problem(&truth, &[0.0], &[(10, 12)]);
        let r = fit(&p, &FitOptions::default()).unwrap();
        assert!(r.converged);
        let free = p.free_parameters(&r.fitted);
        assert!(p.bounds.contains(&free), "{free:?}");
        assert!((r.objective - 1.0).abs() < 1e-9);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.trace.len(), r.evaluations);
    }

    #[test]
    fn fit_does_not_depend_on_execution_mode() {
        let truth = EdgePerturbationModel::fitted_device();
        let p = exact_problem(&truth, &[700.0], &[(10, 12)]);
        let run = |execution| {
            let o = FitOptions {
                max_evaluations: 600,
                restarts: 3,
                seed: 5,
                execution,
                ..FitOptions::default()
            };
            fit(&p, &o).unwrap()
        };
        let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
        assert_eq!(a.fitted, b.fitted);
        assert_eq!(a.trace, b.trace);
        assert!(a.evaluations <= 600);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let truth = EdgePerturbationModel::fitted_device();
        let spec = truth.expand(DEVICE_SITES).unwrap();
        let u = diagonalize(&spec.hamiltonian()).unwrap().evolve(775.0).unwrap();
        let input = PairInput::new(10, 12).unwrap();
        let g = quantum_correlations(&u, input).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = poisson_counts(&g, 1e4, &mut rng).unwrap();
        let d = Dataset::from_counts(700.0, input, counts, CountCorrections::default(), None).unwrap();
        let p = CalibrationProblem {
            datasets: vec![d],
            n_sites: DEVICE_SITES,
            z_offset: SPREADING_OFFSET,
            initial: EdgePerturbationModel::nominal(),
            bounds: ParameterBounds::default(),
        };
        let a = bootstrap_similarity_sd(&truth, &p, 50, 11, Execution::Parallel).unwrap();
        let b = bootstrap_similarity_sd(&truth, &p, 50, 11, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let sd = a[0].unwrap();
        assert!(sd > 0.0 && sd < 0.05, "{sd}");
    }
}
