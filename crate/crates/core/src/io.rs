//! On-disk formats: the binary field container, CSV time series and JSON
//! documents for profiles and spectra.
//!
//! A field container is a header of little-endian `f64` values (`dim`, then
//! `n` per axis, then `length` per axis) followed by the samples as
//! interleaved `re, im` pairs in row-major order. Several containers may be
//! concatenated in one file; a pair is stored as two consecutive containers.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ControlRow, Referenced, RunReport};
use crate::field::{ComplexField, FieldPair};
use crate::functionals::SystemInvariants;
use crate::grid::{Grid, C64};
use crate::linops::{CoercivityEstimate, SpectralReport};
use crate::profiles::{Profile, ProfileKind};

fn put(w: &mut impl Write, x: f64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

/// Reads one `f64`; `Ok(None)` on a clean end of input.
fn take(r: &mut impl Read) -> Result<Option<f64>> {
    let mut buf = [0u8; 8];
    let mut got = 0;
    while got < 8 {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Format("truncated value".into())),
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(f64::from_le_bytes(buf)))
}

fn need(r: &mut impl Read, what: &str) -> Result<f64> {
    take(r)?.ok_or_else(|| Error::Format(format!("unexpected end of input reading {what}")))
}

fn as_count(x: f64, what: &str) -> Result<usize> {
    if x.is_finite() && x >= 1.0 && x.fract() == 0.0 && x < 1e12 {
        Ok(x as usize)
    } else {
        Err(Error::Format(format!("{what} = {x} is not a positive integer")))
    }
}

pub fn write_field(w: &mut impl Write, f: &ComplexField) -> Result<()> {
    let g = &f.grid;
    put(w, g.dim() as f64)?;
    for &n in g.n() {
        put(w, n as f64)?;
    }
    for &l in g.length() {
        put(w, l)?;
    }
    for z in &f.values {
        put(w, z.re)?;
        put(w, z.im)?;
    }
    Ok(())
}

/// Next container in the stream, or `None` at a clean end of input.
pub fn read_field(r: &mut impl Read) -> Result<Option<ComplexField>> {
    let dim = match take(r)? {
        None => return Ok(None),
        Some(d) => as_count(d, "dim")?,
    };
    if dim > 3 {
        return Err(Error::Format(format!("dim = {dim}")));
    }
    let mut n = Vec::with_capacity(dim);
    for _ in 0..dim {
        n.push(as_count(need(r, "n")?, "n")?);
    }
    let mut length = Vec::with_capacity(dim);
    for _ in 0..dim {
        length.push(need(r, "length")?);
    }
    let grid = Grid::new(dim, &n, &length).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = need(r, "samples")?;
        let im = need(r, "samples")?;
        values.push(C64::new(re, im));
    }
    ComplexField::new(grid, values).map(Some)
}

pub fn save_fields(path: &Path, fields: &[&ComplexField]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in fields {
        write_field(&mut w, f)?;
    }
    w.flush()?;
    Ok(())
}

/// Every container in the file.
pub fn load_fields(path: &Path) -> Result<Vec<ComplexField>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(f) = read_field(&mut r)? {
        out.push(f);
    }
    Ok(out)
}

pub fn save_pair(path: &Path, p: &FieldPair) -> Result<()> {
    save_fields(path, &[&p.first, &p.second])
}

pub fn load_pair(path: &Path) -> Result<FieldPair> {
    let mut fields = load_fields(path)?;
    if fields.len() != 2 {
        return Err(Error::Format(format!("expected 2 fields, found {}", fields.len())));
    }
    let second = fields.pop().unwrap();
    FieldPair::new(fields.pop().unwrap(), second)
}

/// Samples along the first axis through the centre of the others:
/// `x, re, im, abs` per component.
pub fn write_slice_csv(w: impl Write, fields: &[&ComplexField]) -> Result<()> {
    let Some(first) = fields.first() else {
        return Err(Error::InvalidParams("no fields to write".into()));
    };
    let g = &first.grid;
    for f in fields {
        f.check_grid(first)?;
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string()];
    for k in 1..=fields.len() {
        header.extend(["re", "im", "abs"].iter().map(|c| format!("{c}{k}")));
    }
    out.write_record(&header).map_err(csv_error)?;
    let offset: usize = (1..g.dim()).map(|a| (g.n()[a] / 2) * g.n()[a + 1..].iter().product::<usize>()).sum();
    let stride: usize = g.n()[1..].iter().product();
    for (j, x) in g.coords(0).into_iter().enumerate() {
        let idx = offset + j * stride;
        let mut row = vec![x];
        for f in fields {
            let z = f.values[idx];
            row.extend([z.re, z.im, z.norm()]);
        }
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("{other:?}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSidecar {
    pub kind: ProfileKind,
    pub residual: f64,
    pub tolerance: f64,
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn save_profile(dir: &Path, stem: &str, p: &Profile) -> Result<(PathBuf, PathBuf)> {
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    save_fields(&bin, &[&p.field])?;
    let side = ProfileSidecar { kind: p.kind, residual: p.residual, tolerance: p.tolerance };
    write_json(&json, &side)?;
    Ok((bin, json))
}

pub fn load_profile(dir: &Path, stem: &str) -> Result<Profile> {
    let mut fields = load_fields(&dir.join(format!("{stem}.bin")))?;
    if fields.len() != 1 {
        return Err(Error::Format(format!("expected 1 field, found {}", fields.len())));
    }
    let side: ProfileSidecar = read_json(&dir.join(format!("{stem}.json")))?;
    Ok(Profile { field: fields.pop().unwrap(), residual: side.residual, kind: side.kind, tolerance: side.tolerance })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// Streams `t, E1, E2, Etot, M1, M2, Px_tot[, Py_tot[, Pz_tot]], overlap`.
pub struct InvariantsCsv<W: Write> {
    out: csv::Writer<W>,
    dim: usize,
}

impl<W: Write> InvariantsCsv<W> {
    pub fn new(w: W, dim: usize) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["t", "E1", "E2", "Etot", "M1", "M2"].iter().map(|s| s.to_string()).collect();
        header.extend(AXES[..dim].iter().map(|a| format!("P{a}_tot")));
        header.push("overlap".into());
        out.write_record(&header).map_err(csv_error)?;
        Ok(InvariantsCsv { out, dim })
    }

    pub fn row(&mut self, t: f64, s: &SystemInvariants) -> Result<()> {
        if s.total_momentum.len() != self.dim {
            return Err(Error::InvalidParams("momentum has the wrong dimension".into()));
        }
        let mut row = vec![t, s.energies[0], s.energies[1], s.total_energy, s.masses[0], s.masses[1]];
        row.extend(&s.total_momentum);
        row.push(s.coupling_overlap);
        self.out.serialize(row).map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub const CONSTRUCTION_COLUMNS: [&str; 11] = [
    "t",
    "err_H1",
    "bound",
    "err_L2",
    "action_drift",
    "interaction_plain",
    "interaction_grad",
    "overlap",
    "tail_mass",
    "source_norm",
    "bootstrap_flag",
];

/// One run's rows under [`CONSTRUCTION_COLUMNS`], followed by the raw verdict,
/// the control floor and, when a control ran, the control-referenced distances.
pub fn write_construction_csv(w: impl Write, run: &RunReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let with_control = run.referenced.len() == run.rows.len() && !run.rows.is_empty() && !run.control.is_empty();
    let mut header: Vec<&str> = CONSTRUCTION_COLUMNS.to_vec();
    header.extend(["bootstrap_raw", "floor_H1"]);
    if with_control {
        header.extend(["control_err_H1", "control_err_L2", "control_action_drift", "ref_H1", "ref_L2", "ref_action"]);
    }
    out.write_record(&header).map_err(csv_error)?;
    for (i, r) in run.rows.iter().enumerate() {
        let mut rec: Vec<String> = [
            r.t,
            r.err_h1,
            r.bound,
            r.err_l2,
            r.action_drift,
            r.interaction_plain,
            r.interaction_grad,
            r.overlap,
            r.tail_mass,
            r.source_norm,
        ]
        .iter()
        .map(|x| x.to_string())
        .collect();
        rec.push(r.bootstrap.as_str().into());
        rec.push(r.bootstrap_raw.as_str().into());
        rec.push(r.floor_h1.to_string());
        if with_control {
            let ControlRow { err_h1, err_l2, action_drift, .. } = &run.control[i];
            let Referenced { h1, l2, action } = &run.referenced[i];
            rec.extend([err_h1, err_l2, action_drift, h1, l2, action].iter().map(|x| x.to_string()));
        }
        out.write_record(&rec).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Scalars of a [`SpectralReport`]; eigenfunctions go to binary containers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub plus_eigenvalues: Vec<f64>,
    pub minus_eigenvalues: Vec<f64>,
    pub plus_residuals: Vec<f64>,
    pub minus_residuals: Vec<f64>,
    pub nu0: usize,
    pub zero_tol: f64,
    pub unstable: bool,
    pub eig_tol: f64,
    pub coercivity: Option<CoercivityEstimate>,
}

impl SpectrumSummary {
    pub fn new(report: &SpectralReport, eig_tol: f64) -> Self {
        SpectrumSummary {
            plus_eigenvalues: report.plus.eigenvalues.clone(),
            minus_eigenvalues: report.minus.eigenvalues.clone(),
            plus_residuals: report.plus.residuals.clone(),
            minus_residuals: report.minus.residuals.clone(),
            nu0: report.count.nu0,
            zero_tol: report.count.zero_tol,
            unstable: report.count.unstable,
            eig_tol,
            coercivity: report.coercivity.clone(),
        }
    }
}

/// Writes `spectrum.json`, `lplus_eigenfunctions.bin` and `lminus_eigenfunctions.bin`.
pub fn save_spectrum(dir: &Path, report: &SpectralReport, eig_tol: f64) -> Result<Vec<PathBuf>> {
    let json = dir.join("spectrum.json");
    write_json(&json, &SpectrumSummary::new(report, eig_tol))?;
    let plus = dir.join("lplus_eigenfunctions.bin");
    save_fields(&plus, &report.plus.eigenfunctions.iter().collect::<Vec<_>>())?;
    let minus = dir.join("lminus_eigenfunctions.bin");
    save_fields(&minus, &report.minus.eigenfunctions.iter().collect::<Vec<_>>())?;
    Ok(vec![json, plus, minus])
}
