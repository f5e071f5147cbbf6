//! CSV readers and writers.
//!
//! - counts: header `j,k,counts`, one 1-indexed unordered pair per row.
//! - efficiencies: header `channel,efficiency`.
//! - masks: header `j,k`.
//! - dense matrices: a header row of column labels, then one row per
//!   waveguide label. Floats use 9 significant digits; undefined entries
//!   are empty fields.
//!
//! Lines starting with `#` are comments. Readers report 1-indexed line
//! numbers in [`Error::Parse`].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::correlations::{CountMatrix, ViolationMatrix};
use crate::error::{Error, Result};
use crate::evolution::SingleParticleDistribution;
use crate::metrics::{DetectorMask, SweepResult};

/// Fixed-width float rendering used by every writer.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(r)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads all records, converting CSV syntax errors to line-numbered parse
/// errors.
fn records<R: Read>(r: R, source: &str) -> Result<Vec<csv::StringRecord>> {
    reader(r)
        .into_records()
        .map(|rec| {
            rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(source, line, e.to_string())
            })
        })
        .collect()
}

fn expect_header(records: &[csv::StringRecord], source: &str, header: &[&str]) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| Error::parse(source, 1, format!("empty file, expected header `{}`", header.join(","))))?;
    let got: Vec<&str> = first.iter().collect();
    if got != header {
        return Err(Error::parse(
            source,
            line_of(first),
            format!("expected header `{}`, got `{}`", header.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, source: &str) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::parse(source, line_of(rec), format!("missing `{name}` field")))?;
    raw.parse()
        .map_err(|_| Error::parse(source, line_of(rec), format!("invalid `{name}` value `{raw}`")))
}

fn check_width(rec: &csv::StringRecord, width: usize, source: &str) -> Result<()> {
    if rec.len() != width {
        return Err(Error::parse(
            source,
            line_of(rec),
            format!("expected {width} fields, got {}", rec.len()),
        ));
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Coincidence counts. The channel count is the largest label seen unless
/// `n_sites` is given.
pub fn read_counts<R: Read>(r: R, source: &str, n_sites: Option<usize>) -> Result<CountMatrix> {
    let recs = records(r, source)?;
    expect_header(&recs, source, &["j", "k", "counts"])?;
    let mut pairs = Vec::with_capacity(recs.len());
    for rec in &recs[1..] {
        check_width(rec, 3, source)?;
        let j: usize = field(rec, 0, "j", source)?;
        let k: usize = field(rec, 1, "k", source)?;
        let c: u64 = field(rec, 2, "counts", source)?;
        if j == 0 || k == 0 {
            return Err(Error::parse(source, line_of(rec), "waveguide labels start at 1"));
        }
        if j > k {
            return Err(Error::parse(source, line_of(rec), format!("pair ({j}, {k}) must be listed with j <= k")));
        }
        if let Some(n) = n_sites {
            if k > n {
                return Err(Error::parse(source, line_of(rec), format!("label {k} exceeds {n} waveguides")));
            }
        }
        pairs.push((j, k, c, line_of(rec)));
    }
    let n = n_sites.unwrap_or_else(|| pairs.iter().map(|p| p.1).max().unwrap_or(0));
    let mut seen = std::collections::HashSet::new();
    for &(j, k, _, line) in &pairs {
        if !seen.insert((j, k)) {
            return Err(Error::parse(source, line, format!("pair ({j}, {k}) listed twice")));
        }
    }
    let mut m = CountMatrix::from_pairs(n, pairs.iter().map(|&(j, k, c, _)| (j, k, c)))
        .map_err(|e| Error::parse(source, 0, e.to_string()))?;
    m.note = format!("read from {source}");
    Ok(m)
}

pub fn read_counts_file(path: &Path, n_sites: Option<usize>) -> Result<CountMatrix> {
    read_counts(open(path)?, &path.display().to_string(), n_sites)
}

pub fn write_counts<W: Write>(w: W, counts: &CountMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["j", "k", "counts"]).map_err(csv_io)?;
    let n = counts.dim();
    for a in 1..=n {
        for b in a..=n {
            out.write_record([a.to_string(), b.to_string(), counts.get(a, b).to_string()])
                .map_err(csv_io)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-channel relative detector efficiencies; every channel `1..=n` must
/// appear exactly once.
pub fn read_efficiency<R: Read>(r: R, source: &str) -> Result<Vec<f64>> {
    let recs = records(r, source)?;
    expect_header(&recs, source, &["channel", "efficiency"])?;
    let mut entries: Vec<(usize, f64, u64)> = Vec::new();
    for rec in &recs[1..] {
        check_width(rec, 2, source)?;
        let ch: usize = field(rec, 0, "channel", source)?;
        let eta: f64 = field(rec, 1, "efficiency", source)?;
        if ch == 0 {
            return Err(Error::parse(source, line_of(rec), "channels start at 1"));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::parse(source, line_of(rec), format!("efficiency {eta} must be positive")));
        }
        entries.push((ch, eta, line_of(rec)));
    }
    let n = entries.iter().map(|e| e.0).max().unwrap_or(0);
    let mut eta = vec![None; n];
    for (ch, e, line) in entries {
        if eta[ch - 1].replace(e).is_some() {
            return Err(Error::parse(source, line, format!("channel {ch} listed twice")));
        }
    }
    eta.into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or_else(|| Error::parse(source, 0, format!("channel {} missing", i + 1))))
        .collect()
}

pub fn read_efficiency_file(path: &Path) -> Result<Vec<f64>> {
    read_efficiency(open(path)?, &path.display().to_string())
}

pub fn read_mask<R: Read>(r: R, source: &str, n_sites: usize) -> Result<DetectorMask> {
    let recs = records(r, source)?;
    expect_header(&recs, source, &["j", "k"])?;
    let mut pairs = Vec::new();
    for rec in &recs[1..] {
        check_width(rec, 2, source)?;
        let j: usize = field(rec, 0, "j", source)?;
        let k: usize = field(rec, 1, "k", source)?;
        if j == 0 || k == 0 || j > n_sites || k > n_sites {
            return Err(Error::parse(source, line_of(rec), format!("pair ({j}, {k}) outside 1..={n_sites}")));
        }
        pairs.push((j, k));
    }
    DetectorMask::from_pairs(n_sites, pairs, source)
}

pub fn read_mask_file(path: &Path, n_sites: usize) -> Result<DetectorMask> {
    read_mask(open(path)?, &path.display().to_string(), n_sites)
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv writer: {other:?}")),
    }
}

fn write_grid<W: Write>(w: W, rows: usize, cols: usize, value: impl Fn(usize, usize) -> Option<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["waveguide".to_string()];
    header.extend((1..=cols).map(|c| c.to_string()));
    out.write_record(&header).map_err(csv_io)?;
    for r in 0..rows {
        let mut row = vec![(r + 1).to_string()];
        row.extend((0..cols).map(|c| value(r, c).map(format_float).unwrap_or_default()));
        out.write_record(&row).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

/// Dense matrix with waveguide labels as row and column headers.
pub fn write_matrix<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    write_grid(w, m.nrows(), m.ncols(), |r, c| Some(m[(r, c)]))
}

/// Witness values, undefined entries empty.
pub fn write_violations<W: Write>(w: W, v: &ViolationMatrix) -> Result<()> {
    let n = v.dim();
    write_grid(w, n, n, |r, c| v.get(r + 1, c + 1))
}

/// `V/σ` values, undefined entries empty.
pub fn write_z_scores<W: Write>(w: W, v: &ViolationMatrix) -> Result<()> {
    let n = v.dim();
    write_grid(w, n, n, |r, c| v.z_score(r + 1, c + 1))
}

/// Dense grid with optional entries, as written by the matrix writers.
pub fn read_grid<R: Read>(r: R, source: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let recs = records(r, source)?;
    let header = recs
        .first()
        .ok_or_else(|| Error::parse(source, 1, "empty matrix file"))?;
    let cols = header.len().saturating_sub(1);
    if cols == 0 {
        return Err(Error::parse(source, line_of(header), "header has no column labels"));
    }
    let mut rows = Vec::with_capacity(recs.len() - 1);
    for rec in &recs[1..] {
        check_width(rec, cols + 1, source)?;
        let row = (1..=cols)
            .map(|i| {
                let raw = &rec[i];
                if raw.is_empty() {
                    Ok(None)
                } else {
                    raw.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(source, line_of(rec), format!("invalid number `{raw}` in column {i}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(source, line_of(header), "matrix has no rows"));
    }
    Ok(rows)
}

/// Dense matrix where every entry must be present.
pub fn read_matrix<R: Read>(r: R, source: &str) -> Result<DMatrix<f64>> {
    let grid = read_grid(r, source)?;
    let (rows, cols) = (grid.len(), grid[0].len());
    let mut m = DMatrix::zeros(rows, cols);
    for (i, row) in grid.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = x.ok_or_else(|| Error::parse(source, 0, format!("undefined entry at row {}, column {}", i + 1, j + 1)))?;
        }
    }
    Ok(m)
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(open(path)?, &path.display().to_string())
}

pub fn write_single_particle<W: Write>(w: W, d: &SingleParticleDistribution) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["waveguide", "probability"]).map_err(csv_io)?;
    for (i, p) in d.p.iter().enumerate() {
        out.write_record([(i + 1).to_string(), format_float(*p)]).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(w: W, s: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["z_um", "v_max", "a", "b"]).map_err(csv_io)?;
    for ((z, v), (a, b)) in s.z_values.iter().zip(&s.v_max).zip(&s.argmax_pairs) {
        out.write_record([format_float(*z), format_float(*v), a.to_string(), b.to_string()])
            .map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}
