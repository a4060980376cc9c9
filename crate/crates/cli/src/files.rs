//! Artifact writers and the parsers that read them back.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so parsing
//! a file and rewriting it reproduces the exact bytes. Comment lines of the
//! form `# key = value` carry metadata; the data block is plain CSV.

use std::fs;
use std::path::{Path, PathBuf};

use phononwalk::{Matrix, MeasurementModel, ObservationDataset};

use crate::error::{CliError, Result};

pub fn fmt_float(x: f64) -> String {
    format!("{x}")
}

fn meta_block(meta: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

fn meta_get<'a>(meta: &'a [(String, String)], key: &str, path: &Path) -> Result<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| {
            CliError::input(format!("{}: missing metadata key `{key}`", path.display()))
        })
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &Path, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| {
        CliError::input(format!("{}: line {line}: cannot parse `{field}`", path.display()))
    })
}

type MetaPairs = Vec<(String, String)>;
type DataLines = Vec<(usize, String)>;

/// Splits a file into metadata pairs and data lines (1-based line numbers).
fn read_blocks(path: &Path) -> Result<(MetaPairs, DataLines)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut meta = Vec::new();
    let mut data = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else if !line.trim().is_empty() {
            data.push((idx + 1, line.to_string()));
        }
    }
    Ok((meta, data))
}

/// Writes each file whole; on any failure everything written so far is
/// removed, so a command never leaves partial artifacts behind.
pub fn persist(files: &[(PathBuf, String)]) -> Result<()> {
    let mut written: Vec<&Path> = Vec::new();
    for (path, contents) in files {
        if let Some(parent) = path.parent() {
            if let Err(e) = fs::create_dir_all(parent) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(CliError::io(parent, e));
            }
        }
        if let Err(e) = fs::write(path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(CliError::io(path, e));
        }
        written.push(path);
    }
    Ok(())
}

/// `t_us,p1,...,pN` rows under the metadata header.
pub fn trace_csv(meta: &[(String, String)], times_us: &[f64], p: &Matrix) -> String {
    let mut s = meta_block(meta);
    s.push_str("t_us");
    for m in 0..p.cols() {
        s.push_str(&format!(",p{}", m + 1));
    }
    s.push('\n');
    for (k, &t) in times_us.iter().enumerate() {
        s.push_str(&fmt_float(t));
        for m in 0..p.cols() {
            s.push(',');
            s.push_str(&fmt_float(p[(k, m)]));
        }
        s.push('\n');
    }
    s
}

pub struct ParsedTrace {
    pub meta: Vec<(String, String)>,
    pub times_us: Vec<f64>,
    pub populations: Matrix,
}

pub fn read_trace_csv(path: &Path) -> Result<ParsedTrace> {
    let (meta, data) = read_blocks(path)?;
    let Some(((_, header), rows)) = data.split_first() else {
        return Err(CliError::input(format!("{}: empty trace file", path.display())));
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"t_us") || columns.len() < 2 {
        return Err(CliError::input(format!(
            "{}: expected header `t_us,p1,...`, got `{header}`",
            path.display()
        )));
    }
    let n_sites = columns.len() - 1;
    let mut times_us = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * n_sites);
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != n_sites + 1 {
            return Err(CliError::input(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                n_sites + 1,
                fields.len()
            )));
        }
        times_us.push(parse_field(fields[0], path, *line)?);
        for f in &fields[1..] {
            values.push(parse_field::<f64>(f, path, *line)?);
        }
    }
    let populations = Matrix::from_fn(times_us.len(), n_sites, |k, m| values[k * n_sites + m]);
    Ok(ParsedTrace { meta, times_us, populations })
}

/// `t_us,c1,...,cN,shots` rows under the metadata header.
pub fn dataset_csv(meta: &[(String, String)], times_us: &[f64], ds: &ObservationDataset) -> String {
    let mut s = meta_block(meta);
    s.push_str("t_us");
    for m in 0..ds.n_sites() {
        s.push_str(&format!(",c{}", m + 1));
    }
    s.push_str(",shots\n");
    for (k, &t) in times_us.iter().enumerate() {
        s.push_str(&fmt_float(t));
        for m in 0..ds.n_sites() {
            s.push_str(&format!(",{}", ds.count(k, m)));
        }
        s.push_str(&format!(",{}\n", ds.shots()));
    }
    s
}

pub struct ParsedDataset {
    pub meta: Vec<(String, String)>,
    pub times_us: Vec<f64>,
    pub dataset: ObservationDataset,
}

pub fn read_dataset_csv(path: &Path) -> Result<ParsedDataset> {
    let (meta, data) = read_blocks(path)?;
    let Some(((_, header), rows)) = data.split_first() else {
        return Err(CliError::input(format!("{}: empty dataset file", path.display())));
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"t_us") || columns.last() != Some(&"shots") || columns.len() < 3 {
        return Err(CliError::input(format!(
            "{}: expected header `t_us,c1,...,shots`, got `{header}`",
            path.display()
        )));
    }
    let n_sites = columns.len() - 2;
    let mut times_us = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len() * n_sites);
    let mut shots: Option<u32> = None;
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != n_sites + 2 {
            return Err(CliError::input(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                n_sites + 2,
                fields.len()
            )));
        }
        times_us.push(parse_field::<f64>(fields[0], path, *line)?);
        for f in &fields[1..=n_sites] {
            counts.push(parse_field::<u32>(f, path, *line)?);
        }
        let row_shots: u32 = parse_field(fields[n_sites + 1], path, *line)?;
        match shots {
            None => shots = Some(row_shots),
            Some(s) if s == row_shots => {}
            Some(s) => {
                return Err(CliError::input(format!(
                    "{}: line {line}: shot number {row_shots} differs from {s}",
                    path.display()
                )))
            }
        }
    }
    let shots = shots
        .ok_or_else(|| CliError::input(format!("{}: no data rows", path.display())))?;
    let source: usize = parse_field(meta_get(&meta, "run.source", path)?, path, 0)?;
    if !(1..=n_sites).contains(&source) {
        return Err(CliError::input(format!(
            "{}: run.source {source} out of range for {n_sites} sites",
            path.display()
        )));
    }
    let model = MeasurementModel::new(
        parse_field(meta_get(&meta, "measurement.scale", path)?, path, 0)?,
        parse_field::<f64>(meta_get(&meta, "measurement.t_offset_us", path)?, path, 0)? * 1e-6,
        parse_field(meta_get(&meta, "measurement.heating_rate", path)?, path, 0)?,
        shots,
        parse_field(meta_get(&meta, "run.seed", path)?, path, 0)?,
    )?;
    let flagged = meta_get(&meta, "flags.regime_violation", path)? == "true";
    let times_s: Vec<f64> = times_us.iter().map(|&u| u * 1e-6).collect();
    let dataset =
        ObservationDataset::from_parts(times_s, counts, n_sites, source - 1, model, flagged)?;
    Ok(ParsedDataset { meta, times_us, dataset })
}

/// Generic float table: metadata block, one header row, then the rows.
pub fn table_csv(meta: &[(String, String)], header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = meta_block(meta);
    s.push_str(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_float(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Square matrix dump, one CSV row per matrix row.
pub fn matrix_csv(meta: &[(String, String)], m: &Matrix) -> String {
    let mut s = meta_block(meta);
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| fmt_float(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Plain graymap of a population record: one image row per ion, one column
/// per time step, populations mapped linearly onto 0..=255.
pub fn trace_pgm(p: &Matrix) -> String {
    let (steps, sites) = (p.rows(), p.cols());
    let mut s = format!("P2\n{steps} {sites}\n255\n");
    for m in 0..sites {
        let row: Vec<String> = (0..steps)
            .map(|k| ((p[(k, m)].clamp(0.0, 1.0) * 255.0).round() as u32).to_string())
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// `key = value` report, one pair per line.
pub fn report(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

pub fn read_report(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(pairs)
}
