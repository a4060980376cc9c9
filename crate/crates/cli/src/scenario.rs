//! Flat `key = value` scenario files.
//!
//! Dotted keys group related settings (`trap.omega_y_mhz`, `run.dt_us`, ...)
//! without any nesting in the format itself: every non-comment line is one
//! assignment. Unknown and duplicate keys are hard errors so typos cannot
//! silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use phononwalk::{MeasurementModel, TrapConfig};

use crate::error::{CliError, Result};

/// Artifact families selected by `output.formats`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_ions: usize,
    pub mass_amu: f64,
    pub omega_x_mhz: f64,
    pub omega_y_mhz: f64,
    pub omega_z_mhz: f64,
    /// 1-based index of the initially excited ion.
    pub source: usize,
    pub t_end_ms: f64,
    pub dt_us: f64,
    pub shots: u32,
    pub seed: Option<u64>,
    pub scale: f64,
    pub t_offset_us: f64,
    pub heating_rate: f64,
    pub out_dir: String,
    pub formats: Vec<Format>,
}

/// Four calcium ions in the reference trap, walked for 10 ms at the usual
/// acquisition settings.
impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_ions: 4,
            mass_amu: 40.0,
            omega_x_mhz: 3.1,
            omega_y_mhz: 2.9,
            omega_z_mhz: 0.09,
            source: 2,
            t_end_ms: 10.0,
            dt_us: 12.5,
            shots: 50,
            seed: None,
            scale: 0.66,
            t_offset_us: 0.0,
            heating_rate: 5.0,
            out_dir: "out".into(),
            formats: vec![Format::Csv, Format::Pgm],
        }
    }
}

const REQUIRED: [&str; 9] = [
    "trap.n_ions",
    "trap.mass_amu",
    "trap.omega_x_mhz",
    "trap.omega_y_mhz",
    "trap.omega_z_mhz",
    "run.source",
    "run.t_end_ms",
    "run.dt_us",
    "run.shots",
];

const OPTIONAL: [&str; 6] = [
    "run.seed",
    "measurement.scale",
    "measurement.t_offset_us",
    "measurement.heating_rate",
    "output.dir",
    "output.formats",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        CliError::input(format!("line {line}: cannot parse `{value}` for key `{key}`"))
    })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut seen: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                CliError::input(format!("line {line}: expected `key = value`, got `{trimmed}`"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
                return Err(CliError::input(format!(
                    "line {line}: unknown scenario key `{key}`"
                )));
            }
            if let Some((_, first)) = seen.get(&key) {
                return Err(CliError::input(format!(
                    "line {line}: key `{key}` already set on line {first}"
                )));
            }
            seen.insert(key, (value, line));
        }
        let missing: Vec<&str> =
            REQUIRED.iter().filter(|k| !seen.contains_key(**k)).copied().collect();
        if !missing.is_empty() {
            return Err(CliError::input(format!(
                "missing required scenario keys: {}",
                missing.join(", ")
            )));
        }

        let mut scenario = Scenario {
            scale: 1.0,
            t_offset_us: 0.0,
            heating_rate: 0.0,
            seed: None,
            ..Scenario::default()
        };
        for (key, (value, line)) in &seen {
            let line = *line;
            match key.as_str() {
                "trap.n_ions" => scenario.n_ions = parse_num(key, value, line)?,
                "trap.mass_amu" => scenario.mass_amu = parse_num(key, value, line)?,
                "trap.omega_x_mhz" => scenario.omega_x_mhz = parse_num(key, value, line)?,
                "trap.omega_y_mhz" => scenario.omega_y_mhz = parse_num(key, value, line)?,
                "trap.omega_z_mhz" => scenario.omega_z_mhz = parse_num(key, value, line)?,
                "run.source" => scenario.source = parse_num(key, value, line)?,
                "run.t_end_ms" => scenario.t_end_ms = parse_num(key, value, line)?,
                "run.dt_us" => scenario.dt_us = parse_num(key, value, line)?,
                "run.shots" => scenario.shots = parse_num(key, value, line)?,
                "run.seed" => scenario.seed = Some(parse_num(key, value, line)?),
                "measurement.scale" => scenario.scale = parse_num(key, value, line)?,
                "measurement.t_offset_us" => scenario.t_offset_us = parse_num(key, value, line)?,
                "measurement.heating_rate" => scenario.heating_rate = parse_num(key, value, line)?,
                "output.dir" => scenario.out_dir = value.clone(),
                "output.formats" => {
                    let mut formats = Vec::new();
                    for part in value.split(',') {
                        match part.trim() {
                            "csv" => formats.push(Format::Csv),
                            "pgm" => formats.push(Format::Pgm),
                            other => {
                                return Err(CliError::input(format!(
                                    "line {line}: unknown output format `{other}`"
                                )))
                            }
                        }
                    }
                    scenario.formats = formats;
                }
                _ => unreachable!("key membership checked above"),
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Scenario::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(CliError::input("trap.n_ions must be at least 1"));
        }
        if !(1..=self.n_ions).contains(&self.source) {
            return Err(CliError::input(format!(
                "run.source must be in 1..={}, got {}",
                self.n_ions, self.source
            )));
        }
        if !(self.t_end_ms > 0.0 && self.t_end_ms.is_finite()) {
            return Err(CliError::input("run.t_end_ms must be positive"));
        }
        if !(self.dt_us > 0.0 && self.dt_us.is_finite()) {
            return Err(CliError::input("run.dt_us must be positive"));
        }
        if self.n_steps() == 0 {
            return Err(CliError::input("run window shorter than one time step"));
        }
        Ok(())
    }

    pub fn source_index(&self) -> usize {
        self.source - 1
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end_ms * 1000.0 / self.dt_us).round() as usize
    }

    /// Sample times in microseconds. This is the canonical grid; seconds are
    /// always derived as `t_us * 1e-6` so files and memory agree bit for bit.
    pub fn times_us(&self) -> Vec<f64> {
        (0..self.n_steps()).map(|k| k as f64 * self.dt_us).collect()
    }

    pub fn times_s(&self) -> Vec<f64> {
        self.times_us().into_iter().map(|u| u * 1e-6).collect()
    }

    pub fn trap_config(&self) -> phononwalk::Result<TrapConfig> {
        TrapConfig::from_lab_units(
            self.n_ions,
            self.mass_amu,
            self.omega_x_mhz,
            self.omega_y_mhz,
            self.omega_z_mhz,
        )
    }

    pub fn model(&self, seed: u64) -> phononwalk::Result<MeasurementModel> {
        MeasurementModel::new(
            self.scale,
            self.t_offset_us * 1e-6,
            self.heating_rate,
            self.shots,
            seed,
        )
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    /// Header pairs echoed into every artifact this scenario produces.
    pub fn meta_pairs(&self, seed: u64) -> Vec<(String, String)> {
        vec![
            ("trap.n_ions".into(), self.n_ions.to_string()),
            ("trap.mass_amu".into(), format!("{}", self.mass_amu)),
            ("trap.omega_x_mhz".into(), format!("{}", self.omega_x_mhz)),
            ("trap.omega_y_mhz".into(), format!("{}", self.omega_y_mhz)),
            ("trap.omega_z_mhz".into(), format!("{}", self.omega_z_mhz)),
            ("run.source".into(), self.source.to_string()),
            ("run.dt_us".into(), format!("{}", self.dt_us)),
            ("run.shots".into(), self.shots.to_string()),
            ("run.seed".into(), seed.to_string()),
            ("measurement.scale".into(), format!("{}", self.scale)),
            ("measurement.t_offset_us".into(), format!("{}", self.t_offset_us)),
            ("measurement.heating_rate".into(), format!("{}", self.heating_rate)),
        ]
    }
}
