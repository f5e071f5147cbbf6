use qwalk_core::correlations::{quantum_correlations, significance, violations, CorrelationMatrix, CountCorrections, CountMatrix, PairInput};
use qwalk_core::evolution::diagonalize;
use qwalk_core::lattice::{ArraySpec, EdgePerturbationModel, SPREADING_OFFSET};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn hom() -> CorrelationMatrix {
    let kappa = 0.005;
    let s = diagonalize(&ArraySpec::uniform(2, 11.4, kappa).unwrap().hamiltonian()).unwrap();
    let u = s.evolve(std::f64::consts::FRAC_PI_4 / kappa).unwrap();
    quantum_correlations(&u, PairInput::new(1, 2).unwrap()).unwrap()
}

/// Empirical spread of `V_ab` over independent Poisson draws of every
/// entry, normalised by the nominal total.
fn empirical_sd(gamma: &CorrelationMatrix, total: f64, a: usize, b: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |mean: f64, rng: &mut ChaCha8Rng| if mean > 0.0 { Poisson::new(mean).unwrap().sample(rng) } else { 0.0 };
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let gaa = sample(total * gamma.at(a, a), &mut rng) / total;
            let gbb = sample(total * gamma.at(b, b), &mut rng) / total;
            let gab = sample(total * gamma.at(a, b), &mut rng) / total;
            2.0 / 3.0 * (gaa * gbb).sqrt() - gab
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt()
}

#[test]
fn hom_significance_matches_closed_form() {
    let counts = CountMatrix::from_expected(&hom(), 1e4).unwrap();
    assert_eq!((counts.get(1, 1), counts.get(1, 2), counts.get(2, 2)), (5000, 0, 5000));
    let v = significance(&counts, &CountCorrections::default()).unwrap();
    // σ² = 2·(1/3)²·(½/T) for γ_11 = γ_22 = ½, γ_12 = 0
    let sigma = (2.0 / 9.0 * 0.5 / 1e4f64).sqrt();
    assert!((v.get(1, 2).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((v.sigma(1, 2).unwrap() - sigma).abs() < 1e-15);
    assert!((v.z_score(1, 2).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn hom_sigma_agrees_with_monte_carlo() {
    let gamma = hom();
    let counts = CountMatrix::from_expected(&gamma, 1e4).unwrap();
    let sigma = significance(&counts, &CountCorrections::default()).unwrap().sigma(1, 2).unwrap();
    let sd = empirical_sd(&gamma, 1e4, 1, 2, 1000, 17);
    assert!((sd / sigma - 1.0).abs() < 0.1, "empirical {sd}, propagated {sigma}");
}

#[test]
fn device_sigma_agrees_with_monte_carlo() {
    let spec = EdgePerturbationModel::fitted_device().expand(21).unwrap();
    let s = diagonalize(&spec.hamiltonian()).unwrap();
    let u = s.evolve(700.0 + SPREADING_OFFSET).unwrap();
    let gamma = quantum_correlations(&u, PairInput::new(10, 12).unwrap()).unwrap();
    let total = 1e5;
    let v = significance(&CountMatrix::from_expected(&gamma, total).unwrap(), &CountCorrections::default()).unwrap();
    let exact = violations(&gamma);
    let (a, b) = (1..=21)
        .flat_map(|a| ((a + 1)..=21).map(move |b| (a, b)))
        .max_by(|x, y| exact.get(x.0, x.1).partial_cmp(&exact.get(y.0, y.1)).unwrap())
        .unwrap();
    let sd = empirical_sd(&gamma, total, a, b, 1000, 23);
    let sigma = v.sigma(a, b).unwrap();
    assert!((sd / sigma - 1.0).abs() < 0.1, "pair ({a}, {b}): empirical {sd}, propagated {sigma}");
}

#[test]
fn device_peak_significance_scales_with_counts() {
    let spec = EdgePerturbationModel::fitted_device().expand(21).unwrap();
    let s = diagonalize(&spec.hamiltonian()).unwrap();
    let u = s.evolve(700.0 + SPREADING_OFFSET).unwrap();
    let gamma = quantum_correlations(&u, PairInput::new(10, 12).unwrap()).unwrap();
    let peak = |total: f64| {
        let v = significance(&CountMatrix::from_expected(&gamma, total).unwrap(), &CountCorrections::default()).unwrap();
        v.z_scores().into_iter().flatten().fold(f64::NEG_INFINITY, f64::max)
    };
    let probe = 1e7;
    let total = probe * (128.0 / peak(probe)).powi(2);
    let reached = peak(total);
    assert!((reached / 128.0 - 1.0).abs() < 0.02, "T = {total:.3e}: peak V/σ = {reached}");
}
