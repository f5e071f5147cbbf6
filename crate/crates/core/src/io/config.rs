//! TOML run configuration.
//!
//! ```toml
//! [units]
//! length = "um"
//! wavenumber = "1/um"
//!
//! [array]
//! preset = "paper-21-fitted"   # or n_sites + beta/kappa, or n_sites + [array.perturbation]
//! z_offset = 75.0              # optional, overrides the preset
//!
//! [run]
//! z_design = [350.0, 700.0, 1050.0]
//! inputs = [[10, 12], [11, 12]]
//! single_inputs = [11]
//! mask = "full"                # "full", "even-odd" or a path to a `j,k` CSV
//! grid = "0:2000:5"
//! out = "out"
//!
//! [fit]
//! max_evaluations = 5000
//! bootstrap = 200
//! restarts = 8                 # seeded random starting points
//! seed = 0
//!
//! [[fit.dataset]]
//! z_design = 350.0
//! input = [10, 12]
//! counts = "counts_350_10-12.csv"
//! ```
//!
//! Relative paths resolve against the configuration file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::calibration::ParameterBounds;
use crate::correlations::PairInput;
use crate::error::{Error, Result};
use crate::io::formats::read_mask_file;
use crate::lattice::{ArraySpec, EdgePerturbationModel};
use crate::metrics::{default_grid, grid, DetectorMask};

pub const PRESET_NAMES: [&str; 2] = ["paper-21-nominal", "paper-21-fitted"];

fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "paper-21-nominal" => Some(include_str!("../../presets/paper-21-nominal.toml")),
        "paper-21-fitted" => Some(include_str!("../../presets/paper-21-fitted.toml")),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    units: Option<UnitsSection>,
    array: ArraySection,
    #[serde(default)]
    run: RunSection,
    fit: Option<FitSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsSection {
    length: String,
    wavenumber: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArraySection {
    preset: Option<String>,
    n_sites: Option<usize>,
    beta: Option<ScalarOrList>,
    kappa: Option<ScalarOrList>,
    perturbation: Option<EdgePerturbationModel>,
    z_offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default)]
    z_design: Vec<f64>,
    #[serde(default)]
    inputs: Vec<[usize; 2]>,
    #[serde(default)]
    single_inputs: Vec<usize>,
    mask: Option<String>,
    grid: Option<String>,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSection {
    max_evaluations: Option<usize>,
    tolerance: Option<f64>,
    bootstrap: Option<usize>,
    restarts: Option<usize>,
    seed: Option<u64>,
    canonical_sign: Option<bool>,
    efficiency: Option<PathBuf>,
    #[serde(default)]
    double_diagonal: bool,
    initial: Option<EdgePerturbationModel>,
    bounds: Option<BoundsSection>,
    #[serde(default)]
    dataset: Vec<DatasetSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    lower: [f64; 5],
    upper: [f64; 5],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSection {
    z_design: f64,
    input: [usize; 2],
    counts: Option<PathBuf>,
    mask: Option<String>,
}

/// How the array was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayModel {
    Explicit,
    Perturbed(EdgePerturbationModel),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskChoice {
    Full,
    EvenOdd,
    File(PathBuf),
}

impl MaskChoice {
    /// Parses `full`, `even-odd`, or a path resolved against `base`.
    pub fn parse(s: &str, base: &Path) -> Result<Self> {
        match s {
            "full" => Ok(MaskChoice::Full),
            "even-odd" => Ok(MaskChoice::EvenOdd),
            path => {
                let p = base.join(path);
                if !p.is_file() {
                    return Err(Error::Config(format!("mask file {} does not exist", p.display())));
                }
                Ok(MaskChoice::File(p))
            }
        }
    }

    pub fn resolve(&self, n_sites: usize) -> Result<DetectorMask> {
        match self {
            MaskChoice::Full => Ok(DetectorMask::full(n_sites)),
            MaskChoice::EvenOdd => Ok(DetectorMask::even_odd(n_sites)),
            MaskChoice::File(p) => read_mask_file(p, n_sites),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MaskChoice::Full => "full".into(),
            MaskChoice::EvenOdd => "even-odd".into(),
            MaskChoice::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub z_design: f64,
    pub input: PairInput,
    pub counts: Option<PathBuf>,
    pub mask: Option<MaskChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_evaluations: usize,
    pub tolerance: f64,
    pub bootstrap: usize,
    pub restarts: usize,
    pub seed: u64,
    pub canonical_sign: bool,
    pub efficiency: Option<PathBuf>,
    pub double_diagonal: bool,
    pub initial: EdgePerturbationModel,
    pub bounds: ParameterBounds,
    pub datasets: Vec<DatasetConfig>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: PathBuf,
    pub preset: Option<String>,
    pub model: ArrayModel,
    /// Array including its z offset.
    pub spec: ArraySpec,
    pub z_design: Vec<f64>,
    pub inputs: Vec<PairInput>,
    pub single_inputs: Vec<usize>,
    pub mask: MaskChoice,
    pub grid: Vec<f64>,
    pub out: PathBuf,
    pub fit: Option<FitConfig>,
}

fn config_err(source: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{source}: {e}"))
}

fn check_units(units: Option<&UnitsSection>, source: &str) -> Result<()> {
    let u = units.ok_or_else(|| config_err(source, "missing [units] block (length = \"um\", wavenumber = \"1/um\")"))?;
    if !matches!(u.length.as_str(), "um" | "μm" | "micrometre" | "micrometer") {
        return Err(config_err(source, format!("unsupported length unit `{}`, use \"um\"", u.length)));
    }
    if !matches!(u.wavenumber.as_str(), "1/um" | "um^-1" | "μm⁻¹" | "1/μm") {
        return Err(config_err(source, format!("unsupported wavenumber unit `{}`, use \"1/um\"", u.wavenumber)));
    }
    Ok(())
}

fn vector(v: ScalarOrList, len: usize, what: &str, source: &str) -> Result<Vec<f64>> {
    match v {
        ScalarOrList::Scalar(x) => Ok(vec![x; len]),
        ScalarOrList::List(xs) if xs.len() == len => Ok(xs),
        ScalarOrList::List(xs) => Err(config_err(
            source,
            format!("{what} has {} entries, expected {len}", xs.len()),
        )),
    }
}

fn resolve_array(section: ArraySection, source: &str) -> Result<(Option<String>, ArrayModel, ArraySpec)> {
    let ArraySection {
        preset,
        n_sites,
        beta,
        kappa,
        perturbation,
        z_offset,
    } = section;
    let (model, spec) = if let Some(name) = &preset {
        if n_sites.is_some() || beta.is_some() || kappa.is_some() || perturbation.is_some() {
            return Err(config_err(source, "a preset cannot be combined with explicit array parameters"));
        }
        let text = preset_source(name).ok_or_else(|| {
            config_err(source, format!("unknown preset `{name}` (available: {})", PRESET_NAMES.join(", ")))
        })?;
        let file: ConfigFile = toml::from_str(text).map_err(|e| config_err(name, e))?;
        let (_, model, spec) = resolve_array(file.array, name)?;
        (model, spec)
    } else {
        let n = n_sites.ok_or_else(|| config_err(source, "[array] needs `preset` or `n_sites`"))?;
        match (perturbation, beta, kappa) {
            (Some(p), None, None) => (ArrayModel::Perturbed(p), p.expand(n)?),
            (None, Some(b), Some(k)) => {
                if n < 2 {
                    return Err(config_err(source, "need at least 2 waveguides"));
                }
                let spec = ArraySpec::new(vector(b, n, "beta", source)?, vector(k, n - 1, "kappa", source)?)?;
                (ArrayModel::Explicit, spec)
            }
            _ => {
                return Err(config_err(
                    source,
                    "[array] needs either both `beta` and `kappa` or an [array.perturbation] table",
                ))
            }
        }
    };
    let offset = z_offset.unwrap_or(spec.z_offset());
    Ok((preset, model, spec.with_z_offset(offset)?))
}

/// Parses a `start:stop:step` grid specification in μm.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("grid `{s}` must be start:stop:step in μm")))?;
    if nums.len() != 3 {
        return Err(Error::Config(format!("grid `{s}` must be start:stop:step in μm")));
    }
    grid(nums[0], nums[1], nums[2]).map_err(|e| Error::Config(e.to_string()))
}

fn pair(p: [usize; 2], source: &str) -> Result<PairInput> {
    PairInput::new(p[0], p[1]).map_err(|e| config_err(source, e))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_with_base(&text, &path.display().to_string(), base)
    }

    /// Parses configuration text; relative paths resolve against `base`.
    pub fn from_str_with_base(text: &str, source: &str, base: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| config_err(source, e))?;
        check_units(file.units.as_ref(), source)?;
        let (preset, model, spec) = resolve_array(file.array, source)?;
        let n = spec.n_sites();

        let run = file.run;
        for z in &run.z_design {
            if !(z.is_finite() && *z >= 0.0) {
                return Err(config_err(source, format!("design length {z} must be nonnegative")));
            }
        }
        let inputs = run.inputs.iter().map(|&p| pair(p, source)).collect::<Result<Vec<_>>>()?;
        for p in &inputs {
            if p.k() > n {
                return Err(config_err(source, format!("input {p} outside 1..={n}")));
            }
        }
        for &s in &run.single_inputs {
            if s == 0 || s > n {
                return Err(config_err(source, format!("single input {s} outside 1..={n}")));
            }
        }
        let mask = match &run.mask {
            Some(m) => MaskChoice::parse(m, base)?,
            None => MaskChoice::Full,
        };
        let grid = match &run.grid {
            Some(g) => parse_grid(g)?,
            None => default_grid(),
        };
        let out = base.join(run.out.unwrap_or_else(|| PathBuf::from("out")));

        let fit = file.fit.map(|f| resolve_fit(f, &spec, base, source)).transpose()?;

        Ok(Self {
            source: PathBuf::from(source),
            preset,
            model,
            spec,
            z_design: run.z_design,
            inputs,
            single_inputs: run.single_inputs,
            mask,
            grid,
            out,
            fit,
        })
    }
}

fn resolve_fit(f: FitSection, spec: &ArraySpec, base: &Path, source: &str) -> Result<FitConfig> {
    let existing = |p: &Path| -> Result<PathBuf> {
        let full = base.join(p);
        if !full.is_file() {
            return Err(config_err(source, format!("file {} does not exist", full.display())));
        }
        Ok(full)
    };
    let datasets = f
        .dataset
        .into_iter()
        .map(|d| {
            Ok(DatasetConfig {
                z_design: d.z_design,
                input: pair(d.input, source)?,
                counts: d.counts.as_deref().map(existing).transpose()?,
                mask: d.mask.as_deref().map(|m| MaskChoice::parse(m, base)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for d in &datasets {
        if d.input.k() > spec.n_sites() {
            return Err(config_err(source, format!("dataset input {} outside 1..={}", d.input, spec.n_sites())));
        }
        if !(d.z_design.is_finite() && d.z_design >= 0.0) {
            return Err(config_err(source, "dataset design lengths must be nonnegative"));
        }
    }
    let bounds = f
        .bounds
        .map(|b| ParameterBounds {
            lower: b.lower,
            upper: b.upper,
        })
        .unwrap_or_default();
    Ok(FitConfig {
        max_evaluations: f.max_evaluations.unwrap_or(5000),
        tolerance: f.tolerance.unwrap_or(1e-7),
        bootstrap: f.bootstrap.unwrap_or(200),
        restarts: f.restarts.unwrap_or(8),
        seed: f.seed.unwrap_or(0),
        canonical_sign: f.canonical_sign.unwrap_or(true),
        efficiency: f.efficiency.as_deref().map(existing).transpose()?,
        double_diagonal: f.double_diagonal,
        initial: f.initial.unwrap_or_else(EdgePerturbationModel::nominal),
        bounds,
        datasets,
    })
}
