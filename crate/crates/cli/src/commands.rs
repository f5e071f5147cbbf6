use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use qwalk_core::calibration::{bootstrap_similarity_sd, fit as run_fit, CalibrationProblem, Dataset, FitOptions, FREE_PARAMETERS};
use qwalk_core::correlations::{classical_correlations, quantum_correlations, significance, violations as witness, CountCorrections, PairInput};
use qwalk_core::evolution::{diagonalize, SingleParticleDistribution, Spectrum};
use qwalk_core::io::config::{parse_grid, MaskChoice};
use qwalk_core::io::formats::{self, format_float};
use qwalk_core::io::RunConfig;
use qwalk_core::metrics::{max_violation, similarity as similarity_score, sweep_max_violation, DetectorMask};
use qwalk_core::{Error, Execution, Result};

use crate::RunArgs;

struct Run {
    config: RunConfig,
    spectrum: Spectrum,
    mask: DetectorMask,
}

fn load(args: &RunArgs) -> Result<Run> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(m) = &args.mask {
        config.mask = MaskChoice::parse(m, Path::new("."))?;
    }
    if let Some(g) = &args.grid {
        config.grid = parse_grid(g)?;
    }
    let mask = config.mask.resolve(config.spec.n_sites())?;
    let spectrum = diagonalize(&config.spec.hamiltonian())?;
    fs::create_dir_all(&config.out)?;
    Ok(Run { config, spectrum, mask })
}

fn z_label(z: f64) -> String {
    format!("{z}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn require_lengths(config: &RunConfig) -> Result<()> {
    if config.z_design.is_empty() {
        return Err(Error::Config("[run] z_design lists no device lengths".into()));
    }
    Ok(())
}

fn require_inputs(config: &RunConfig) -> Result<()> {
    if config.inputs.is_empty() {
        return Err(Error::Config("[run] inputs lists no photon pairs".into()));
    }
    Ok(())
}

pub fn simulate(args: &RunArgs) -> Result<()> {
    let run = load(args)?;
    let c = &run.config;
    require_lengths(c)?;
    let sites: Vec<usize> = if c.single_inputs.is_empty() {
        vec![c.spec.n_sites().div_ceil(2)]
    } else {
        c.single_inputs.clone()
    };
    for &site in &sites {
        for &z in &c.z_design {
            let z_tot = c.spec.total_length(z);
            let d = SingleParticleDistribution::from_amplitudes(&run.spectrum.amplitudes(z_tot, site)?, site, z_tot);
            let name = format!("single_in{site}_z{}.csv", z_label(z));
            formats::write_single_particle(create(&c.out, &name)?, &d)?;
            println!("{name}: input {site}, z_tot = {z_tot} um");
        }
    }
    Ok(())
}

pub fn correlations(args: &RunArgs) -> Result<()> {
    let run = load(args)?;
    let c = &run.config;
    require_lengths(c)?;
    require_inputs(c)?;
    for &input in &c.inputs {
        for &z in &c.z_design {
            let u = run.spectrum.evolve(c.spec.total_length(z))?;
            let tag = format!("in{input}_z{}", z_label(z));
            let q = quantum_correlations(&u, input)?;
            formats::write_matrix(create(&c.out, &format!("quantum_{tag}.csv"))?, &q.gamma)?;
            let cl = classical_correlations(&u, input)?;
            formats::write_matrix(create(&c.out, &format!("classical_{tag}.csv"))?, &cl.gamma)?;
            println!("quantum_{tag}.csv, classical_{tag}.csv");
        }
    }
    Ok(())
}

fn corrections(config: &RunConfig) -> Result<CountCorrections> {
    let Some(fit) = &config.fit else {
        return Ok(CountCorrections::default());
    };
    Ok(CountCorrections {
        efficiency: fit.efficiency.as_deref().map(formats::read_efficiency_file).transpose()?,
        double_diagonal: fit.double_diagonal,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "counts".into())
}

pub fn violations(args: &RunArgs) -> Result<()> {
    let run = load(args)?;
    let c = &run.config;
    let n = c.spec.n_sites();
    if !args.counts.is_empty() {
        let corr = corrections(c)?;
        for path in &args.counts {
            let counts = formats::read_counts_file(path, Some(n))?;
            let v = significance(&counts, &corr)?;
            let s = stem(path);
            formats::write_violations(create(&c.out, &format!("violations_{s}.csv"))?, &v)?;
            formats::write_z_scores(create(&c.out, &format!("zscore_{s}.csv"))?, &v)?;
            let (vmax, (a, b)) = max_violation(&v, Some(&run.mask))?;
            let best_z = (1..=n)
                .flat_map(|a| ((a + 1)..=n).map(move |b| (a, b)))
                .filter(|&(a, b)| run.mask.contains(a, b))
                .filter_map(|(a, b)| v.z_score(a, b).map(|z| (z, (a, b))))
                .fold(None, |best: Option<(f64, (usize, usize))>, x| match best {
                    Some(b) if b.0 >= x.0 => Some(b),
                    _ => Some(x),
                });
            match best_z {
                Some((z, (za, zb))) => println!(
                    "{s}: max V = {} at ({a}, {b}); max V/sigma = {} at ({za}, {zb})",
                    format_float(vmax),
                    format_float(z)
                ),
                None => println!("{s}: max V = {} at ({a}, {b}); V/sigma undefined", format_float(vmax)),
            }
        }
        return Ok(());
    }
    require_lengths(c)?;
    require_inputs(c)?;
    for &input in &c.inputs {
        for &z in &c.z_design {
            let u = run.spectrum.evolve(c.spec.total_length(z))?;
            let v = witness(&quantum_correlations(&u, input)?);
            let name = format!("violations_in{input}_z{}.csv", z_label(z));
            formats::write_violations(create(&c.out, &name)?, &v)?;
            let (vmax, (a, b)) = max_violation(&v, Some(&run.mask))?;
            println!("{name}: max V = {} at ({a}, {b}), mask {}", format_float(vmax), run.mask.name());
        }
    }
    Ok(())
}

pub fn sweep(args: &RunArgs) -> Result<()> {
    let run = load(args)?;
    let c = &run.config;
    require_inputs(c)?;
    for &input in &c.inputs {
        let r = sweep_max_violation(&c.spec, input, &c.grid, Some(&run.mask), Execution::Parallel)?;
        let name = format!("sweep_in{input}.csv");
        formats::write_sweep(create(&c.out, &name)?, &r)?;
        println!("{name}: {} points, mask {}", r.z_values.len(), run.mask.name());
    }
    Ok(())
}

pub fn fit(args: &RunArgs) -> Result<()> {
    let run = load(args)?;
    let c = &run.config;
    let fc = c
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no [fit] section".into()))?;
    if fc.datasets.is_empty() {
        return Err(Error::Config("[fit] lists no datasets".into()));
    }
    if !args.counts.is_empty() && args.counts.len() != fc.datasets.len() {
        return Err(Error::Config(format!(
            "{} counts files given for {} datasets",
            args.counts.len(),
            fc.datasets.len()
        )));
    }
    let n = c.spec.n_sites();
    let corr = corrections(c)?;
    let mut datasets = Vec::with_capacity(fc.datasets.len());
    let mut sources: Vec<PathBuf> = Vec::new();
    let mut mask_labels = Vec::new();
    for (i, d) in fc.datasets.iter().enumerate() {
        let path = match (args.counts.get(i), &d.counts) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => p.clone(),
            (None, None) => {
                return Err(Error::Config(format!("dataset {} has no counts file", i + 1)));
            }
        };
        let counts = formats::read_counts_file(&path, Some(n))?;
        let mask_choice = d.mask.clone().unwrap_or_else(|| c.mask.clone());
        let mask = mask_choice.resolve(n)?;
        datasets.push(Dataset::from_counts(d.z_design, d.input, counts, corr.clone(), Some(mask))?);
        sources.push(path);
        mask_labels.push(mask_choice.label());
    }
    let problem = CalibrationProblem {
        datasets,
        n_sites: n,
        z_offset: c.spec.z_offset(),
        initial: fc.initial,
        bounds: fc.bounds,
    };
    let options = FitOptions {
        max_evaluations: fc.max_evaluations,
        tolerance: fc.tolerance,
        canonical_sign: fc.canonical_sign,
        restarts: fc.restarts,
        seed: fc.seed,
        execution: Execution::Parallel,
    };
    let result = run_fit(&problem, &options)?;
    let sd = bootstrap_similarity_sd(&result.fitted, &problem, fc.bootstrap, fc.seed, Execution::Parallel)?;

    let mut text = String::new();
    let q = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    let _ = writeln!(text, "[units]\nlength = \"um\"\nwavenumber = \"1/um\"\n");
    let _ = writeln!(text, "[provenance]");
    let _ = writeln!(text, "config = {}", q(&c.source.display().to_string()));
    if let Some(p) = &c.preset {
        let _ = writeln!(text, "preset = {}", q(p));
    }
    let _ = writeln!(text, "n_sites = {n}");
    let _ = writeln!(text, "z_offset = {}", format_float(problem.z_offset));
    let _ = writeln!(text, "fixed_beta_bulk = {}", format_float(problem.initial.beta_bulk));
    let _ = writeln!(text, "free_parameters = [{}]", FREE_PARAMETERS.map(&q).join(", "));
    let _ = writeln!(text, "lower_bounds = [{}]", problem.bounds.lower.map(format_float).join(", "));
    let _ = writeln!(text, "upper_bounds = [{}]", problem.bounds.upper.map(format_float).join(", "));
    let _ = writeln!(text, "max_evaluations = {}", fc.max_evaluations);
    let _ = writeln!(text, "tolerance = {}", format_float(fc.tolerance));
    let _ = writeln!(text, "restarts = {}", fc.restarts);
    let _ = writeln!(text, "bootstrap_resamples = {}", fc.bootstrap);
    let _ = writeln!(text, "seed = {}", fc.seed);
    let _ = writeln!(text, "double_diagonal = {}", fc.double_diagonal);
    if let Some(e) = &fc.efficiency {
        let _ = writeln!(text, "efficiency = {}", q(&e.display().to_string()));
    }
    let _ = writeln!(text, "\n[result]");
    let _ = writeln!(text, "converged = {}", result.converged);
    let _ = writeln!(text, "evaluations = {}", result.evaluations);
    let _ = writeln!(text, "objective = {}", format_float(result.objective));
    let _ = writeln!(text, "mirrored_offsets = {}", result.mirrored);
    let f = &result.fitted;
    let _ = writeln!(text, "\n[fitted]");
    for (k, v) in [
        ("beta_edge", f.beta_edge),
        ("beta_next", f.beta_next),
        ("beta_bulk", f.beta_bulk),
        ("kappa_edge", f.kappa_edge),
        ("kappa_next", f.kappa_next),
        ("kappa_bulk", f.kappa_bulk),
    ] {
        let _ = writeln!(text, "{k} = {}", format_float(v));
    }
    for (i, d) in problem.datasets.iter().enumerate() {
        let _ = writeln!(text, "\n[[dataset]]");
        let _ = writeln!(text, "z_design = {}", format_float(d.z_design));
        let _ = writeln!(text, "z_total = {}", format_float(d.z_design + problem.z_offset));
        let _ = writeln!(text, "input = [{}, {}]", d.input.j(), d.input.k());
        let _ = writeln!(text, "counts = {}", q(&sources[i].display().to_string()));
        let _ = writeln!(text, "mask = {}", q(&mask_labels[i]));
        let _ = writeln!(text, "similarity = {}", format_float(result.similarity_per_dataset[i]));
        if let Some(s) = sd[i] {
            let _ = writeln!(text, "similarity_sd = {}", format_float(s));
        }
    }
    fs::write(c.out.join("fit_result.toml"), text)?;

    // one row per design length, one column pair per input
    let mut inputs: Vec<PairInput> = Vec::new();
    let mut lengths: Vec<f64> = Vec::new();
    for d in &problem.datasets {
        if !inputs.contains(&d.input) {
            inputs.push(d.input);
        }
        if !lengths.contains(&d.z_design) {
            lengths.push(d.z_design);
        }
    }
    let mut table = String::from("z_design_um,z_total_um");
    for i in &inputs {
        let _ = write!(table, ",S_{i},S_sd_{i}");
    }
    table.push('\n');
    for &z in &lengths {
        let _ = write!(table, "{},{}", format_float(z), format_float(z + problem.z_offset));
        for i in &inputs {
            match problem.datasets.iter().position(|d| d.z_design == z && d.input == *i) {
                Some(k) => {
                    let s = result.similarity_per_dataset[k];
                    let e = sd[k].map(format_float).unwrap_or_default();
                    let _ = write!(table, ",{},{e}", format_float(s));
                }
                None => table.push_str(",,"),
            }
        }
        table.push('\n');
    }
    fs::write(c.out.join("similarity_table.csv"), table)?;

    println!(
        "fit: objective {} after {} evaluations (converged: {})",
        format_float(result.objective),
        result.evaluations,
        result.converged
    );
    Ok(())
}

/// Reads a dense matrix file, or a counts file (header `j,k,counts`) as its
/// normalised symmetric correlation matrix.
fn read_any_matrix(path: &Path) -> Result<qwalk_core::nalgebra::DMatrix<f64>> {
    let mut text = String::new();
    File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_string(&mut text)?;
    let source = path.display().to_string();
    let is_counts = text
        .lines()
        .find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .is_some_and(|l| l.replace(' ', "") == "j,k,counts");
    if is_counts {
        let counts = formats::read_counts(text.as_bytes(), &source, None)?;
        Ok(counts.to_correlation(&CountCorrections::default())?.gamma)
    } else {
        formats::read_matrix(text.as_bytes(), &source)
    }
}

pub fn similarity(file_a: &Path, file_b: &Path, mask: Option<&str>) -> Result<()> {
    let a = read_any_matrix(file_a)?;
    let b = read_any_matrix(file_b)?;
    let mask = match mask {
        Some(m) => {
            if a.nrows() != a.ncols() {
                return Err(Error::Config("a mask needs square matrices".into()));
            }
            Some(MaskChoice::parse(m, Path::new("."))?.resolve(a.nrows())?)
        }
        None => None,
    };
    let s = similarity_score(&a, &b, mask.as_ref())?;
    println!("{s:.6}");
    Ok(())
}
