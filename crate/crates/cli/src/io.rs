//! CSV and JSON emitters with matching readers.
//!
//! Reals are written with 17 significant digits so every file re-parses to
//! the values that produced it.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use refphase::{CompareRow, Series, Spectrum};

use crate::CliResult;

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: DeserializeOwned>(path: &Path) -> CliResult<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<R>, _>>()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyRow {
    pub n: usize,
    pub tau: f64,
    pub probability: f64,
}

pub fn write_ramsey(path: &Path, series: &Series) -> CliResult<()> {
    let rows = series
        .taus
        .iter()
        .zip(&series.probabilities)
        .enumerate()
        .map(|(n, (t, p))| vec![n.to_string(), real(*t), real(*p)]);
    write_rows(path, &["n", "tau", "probability"], rows)
}

pub fn read_ramsey(path: &Path) -> CliResult<Vec<RamseyRow>> {
    read_rows(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

pub fn spectrum_rows(spec: &Spectrum) -> Vec<SpectrumRow> {
    spec.omega
        .iter()
        .zip(&spec.values)
        .map(|(&omega, z)| SpectrumRow {
            omega,
            re: z.re,
            im: z.im,
            abs: z.norm(),
        })
        .collect()
}

pub fn write_spectrum(path: &Path, spec: &Spectrum) -> CliResult<()> {
    let rows = spectrum_rows(spec)
        .into_iter()
        .map(|r| vec![real(r.omega), real(r.re), real(r.im), real(r.abs)]);
    write_rows(path, &["omega", "re", "im", "abs"], rows)
}

pub fn read_spectrum(path: &Path) -> CliResult<Vec<SpectrumRow>> {
    read_rows(path)
}

pub fn write_compare(path: &Path, rows: &[CompareRow]) -> CliResult<()> {
    let rows = rows.iter().map(|r| {
        vec![
            real(r.total_runtime),
            real(r.proposed_estimate),
            real(r.conventional_estimate),
            real(r.exact),
        ]
    });
    write_rows(path, &["total_runtime", "proposed_estimate", "conventional_estimate", "exact"], rows)
}

pub fn read_compare(path: &Path) -> CliResult<Vec<CompareRow>> {
    read_rows(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub level: usize,
    pub gap: f64,
}

pub fn write_levels(path: &Path, energies: &[f64]) -> CliResult<()> {
    let rows = energies.iter().enumerate().map(|(k, e)| vec![k.to_string(), real(*e)]);
    write_rows(path, &["level", "energy"], rows)
}

pub fn read_levels(path: &Path) -> CliResult<Vec<LevelRow>> {
    read_rows(path)
}

pub fn write_gaps(path: &Path, gaps: &[(usize, f64)]) -> CliResult<()> {
    let rows = gaps.iter().map(|(k, g)| vec![k.to_string(), real(*g)]);
    write_rows(path, &["level", "gap"], rows)
}

pub fn read_gaps(path: &Path) -> CliResult<Vec<GapRow>> {
    read_rows(path)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> CliResult<D> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
