//! The five subcommands. Each returns the text it prints on success and
//! stages its artifacts through [`files::persist`] in one batch, so a failed
//! command leaves no half-written output behind.

use std::path::{Path, PathBuf};

use phononwalk::spectral::{self, Window};
use phononwalk::{coupling, crystal, dynamics, fitting};
use phononwalk::{ChainShape, FitBounds, FitOptions, PropagationTrace};

use crate::error::{CliError, Result};
use crate::files::{self, fmt_float};
use crate::scenario::{Format, Scenario};

const TAU: f64 = std::f64::consts::TAU;

fn pair(key: impl Into<String>, value: impl Into<String>) -> (String, String) {
    (key.into(), value.into())
}

fn wrote(staged: &[(PathBuf, String)]) -> String {
    staged.iter().map(|(p, _)| format!("wrote {}\n", p.display())).collect()
}

/// Solves the chain geometry and reports positions, gaps, and the central
/// gap that sets the hopping scale.
pub fn positions(scn: &Scenario) -> Result<String> {
    scn.validate()?;
    let chain = crystal::equilibrium_positions(&scn.trap_config()?)?;
    let mut pairs = vec![
        pair("n_ions", chain.n_ions().to_string()),
        pair("length_scale_um", fmt_float(chain.length_scale() * 1e6)),
    ];
    for (i, &u) in chain.u().iter().enumerate() {
        pairs.push(pair(format!("u_{}", i + 1), fmt_float(u)));
    }
    for (i, &z) in chain.z0().iter().enumerate() {
        pairs.push(pair(format!("z_um_{}", i + 1), fmt_float(z * 1e6)));
    }
    for (i, &g) in chain.adjacent_gaps().iter().enumerate() {
        pairs.push(pair(format!("gap_um_{}_{}", i + 1, i + 2), fmt_float(g * 1e6)));
    }
    if chain.n_ions() >= 2 {
        pairs.push(pair("d0_um", fmt_float(chain.central_gap()? * 1e6)));
    }
    let text = files::report(&pairs);
    let staged = vec![(Path::new(&scn.out_dir).join("positions.txt"), text.clone())];
    files::persist(&staged)?;
    Ok(format!("{text}{}", wrote(&staged)))
}

/// Propagates the walk on the scenario grid, synthesizes the measured
/// dataset, and writes the trace, counts, Hamiltonian, and summary.
pub fn simulate(scn: &Scenario, seed: u64) -> Result<String> {
    scn.validate()?;
    let config = scn.trap_config()?;
    let chain = crystal::equilibrium_positions(&config)?;
    let hopping = coupling::hopping_matrix(&chain, &config)?;
    let basis = dynamics::mode_decomposition(&hopping);
    let times_us = scn.times_us();
    let source = scn.source_index();
    let trace = dynamics::propagate(&basis, source, &scn.times_s())?;
    let dataset = dynamics::simulate_dataset(&basis, source, &scn.times_s(), &scn.model(seed)?)?;

    let meta = scn.meta_pairs(seed);
    let mut dataset_meta = meta.clone();
    dataset_meta.push(pair("flags.regime_violation", dataset.regime_violation().to_string()));

    let out = Path::new(&scn.out_dir);
    let mut staged = Vec::new();
    if scn.wants(Format::Csv) {
        staged.push((out.join("trace.csv"), files::trace_csv(&meta, &times_us, trace.populations())));
        staged.push((out.join("dataset.csv"), files::dataset_csv(&dataset_meta, &times_us, &dataset)));
        let rad_meta = vec![pair("units", "rad/s"), pair("kappa0_rad_s", fmt_float(hopping.kappa0()))];
        staged.push((out.join("hopping_rad_s.csv"), files::matrix_csv(&rad_meta, hopping.matrix())));
        if chain.n_ions() >= 2 {
            let norm_meta = vec![pair("units", "kappa0/2")];
            staged.push((out.join("hopping_normalized.csv"), files::matrix_csv(&norm_meta, &hopping.normalized()?)));
        }
    }
    if scn.wants(Format::Pgm) {
        staged.push((out.join("trace.pgm"), files::trace_pgm(trace.populations())));
    }

    let mut summary = vec![
        pair("kappa0_rad_s", fmt_float(hopping.kappa0())),
        pair("kappa0_khz", fmt_float(hopping.kappa0() / TAU / 1e3)),
    ];
    if chain.n_ions() >= 2 {
        summary.push(pair("hop_time_us", fmt_float(coupling::max_adjacent_hopping_time(&hopping)? * 1e6)));
        summary.push(pair("d0_um", fmt_float(chain.central_gap()? * 1e6)));
    }
    summary.push(pair("length_scale_um", fmt_float(chain.length_scale() * 1e6)));
    summary.push(pair("steps", scn.n_steps().to_string()));
    summary.push(pair("regime_violation", dataset.regime_violation().to_string()));
    let summary_text = files::report(&summary);
    staged.push((out.join("summary.txt"), summary_text.clone()));

    files::persist(&staged)?;
    Ok(format!("{summary_text}{}", wrote(&staged)))
}

/// Fourier-analyzes a trace (from a file, or an ideal propagation of the
/// scenario) and matches each predicted beat note to a DFT peak.
pub fn spectrum(scn: &Scenario, window: Window, trace_path: Option<&Path>) -> Result<String> {
    scn.validate()?;
    let config = scn.trap_config()?;
    let chain = crystal::equilibrium_positions(&config)?;
    let hopping = coupling::hopping_matrix(&chain, &config)?;
    let basis = dynamics::mode_decomposition(&hopping);
    let n = basis.n_sites();

    let trace = match trace_path {
        Some(path) => {
            let parsed = files::read_trace_csv(path)?;
            if parsed.populations.cols() != n {
                return Err(CliError::input(format!(
                    "{}: trace has {} sites but the scenario chain has {n}",
                    path.display(),
                    parsed.populations.cols()
                )));
            }
            // The file's own source index wins when recorded; analytic lines
            // depend on it.
            let source = match parsed.meta.iter().find(|(k, _)| k == "run.source") {
                Some((_, v)) => {
                    let s: usize = v.parse().map_err(|_| {
                        CliError::input(format!("{}: cannot parse run.source `{v}`", path.display()))
                    })?;
                    if !(1..=n).contains(&s) {
                        return Err(CliError::input(format!(
                            "{}: run.source {s} out of range for {n} sites",
                            path.display()
                        )));
                    }
                    s - 1
                }
                None => scn.source_index(),
            };
            let times_s: Vec<f64> = parsed.times_us.iter().map(|&u| u * 1e-6).collect();
            PropagationTrace::new(times_s, parsed.populations, source)?
        }
        None => dynamics::propagate(&basis, scn.source_index(), &scn.times_s())?,
    };
    let source = trace.source();
    let dft = spectral::dft_trace(&trace, window)?;

    let mut lines_csv = String::from("site,freq_khz,amplitude,mode_p,mode_q\n");
    let mut match_text = String::new();
    let mut line_total = 0;
    let mut matched_total = 0;
    let mut stdout = String::new();
    for m in 0..n {
        let analytic = spectral::analytic_spectrum(&basis, source, m)?;
        let report = spectral::match_peaks(&dft, m, &analytic.lines, 1)?;
        for line in &analytic.lines {
            lines_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                m + 1,
                fmt_float(line.freq_hz() / 1e3),
                fmt_float(line.amplitude),
                line.mode_pair.0 + 1,
                line.mode_pair.1 + 1
            ));
        }
        for entry in &report.entries {
            match_text.push_str(&format!("site = {}\n", m + 1));
            match_text.push_str(&format!("line_khz = {}\n", fmt_float(entry.line.freq_hz() / 1e3)));
            match_text.push_str(&format!("amplitude = {}\n", fmt_float(entry.line.amplitude)));
            match &entry.peak {
                Some(pk) => {
                    match_text.push_str("matched = true\n");
                    match_text.push_str(&format!("bin = {}\n", pk.bin));
                    match_text.push_str(&format!("peak_hz = {}\n", fmt_float(pk.freq_hz)));
                    match_text.push_str(&format!("peak_magnitude = {}\n", fmt_float(pk.magnitude)));
                    match_text.push_str(&format!("ratio = {}\n", fmt_float(pk.ratio)));
                }
                None => match_text.push_str("matched = false\n"),
            }
            match_text.push('\n');
        }
        stdout.push_str(&format!(
            "site {}: matched {} of {} lines\n",
            m + 1,
            report.matched(),
            report.entries.len()
        ));
        line_total += report.entries.len();
        matched_total += report.matched();
    }
    let all_matched = matched_total == line_total;
    match_text.push_str(&format!("matched_total = {matched_total}\n"));
    match_text.push_str(&format!("line_total = {line_total}\n"));
    match_text.push_str(&format!("all_matched = {all_matched}\n"));
    stdout.push_str(&format!("all_matched = {all_matched}\n"));

    let mut dft_meta = vec![
        pair("window", match window {
            Window::Rectangular => "rect",
            Window::Hann => "hann",
        }),
        pair("bin_hz", fmt_float(dft.bin_hz())),
    ];
    for (m, &dc) in dft.dc().iter().enumerate() {
        dft_meta.push(pair(format!("dc_{}", m + 1), fmt_float(dc)));
    }
    let mut dft_header = String::from("freq_hz");
    for m in 0..n {
        dft_header.push_str(&format!(",s{}", m + 1));
    }
    let dft_rows: Vec<Vec<f64>> = (0..dft.n_bins())
        .map(|i| {
            let mut row = Vec::with_capacity(1 + n);
            row.push(dft.freqs_hz()[i]);
            for m in 0..n {
                row.push(dft.magnitudes()[(i, m)]);
            }
            row
        })
        .collect();

    let out = Path::new(&scn.out_dir);
    let staged = vec![
        (out.join("dft.csv"), files::table_csv(&dft_meta, &dft_header, &dft_rows)),
        (out.join("lines.csv"), lines_csv),
        (out.join("match.txt"), match_text),
    ];
    files::persist(&staged)?;
    Ok(format!("{stdout}{}", wrote(&staged)))
}

fn parse_bounds(args: &[String]) -> Result<FitBounds> {
    let mut bounds = FitBounds::default();
    for arg in args {
        let split = arg
            .split_once('=')
            .and_then(|(k, r)| r.split_once(':').map(|(lo, hi)| (k, lo, hi)));
        let Some((key, lo, hi)) = split else {
            return Err(CliError::input(format!("bound `{arg}` is not of the form key=lo:hi")));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| {
            CliError::input(format!("bound `{arg}`: cannot parse `{lo}`"))
        })?;
        let hi: f64 = hi.trim().parse().map_err(|_| {
            CliError::input(format!("bound `{arg}`: cannot parse `{hi}`"))
        })?;
        match key.trim() {
            "kappa0_khz" => bounds.kappa0 = (lo * TAU * 1e3, hi * TAU * 1e3),
            "t_offset_us" => bounds.t_offset = (lo * 1e-6, hi * 1e-6),
            "scale" => bounds.scale = (lo, hi),
            "heating" => bounds.heating_rate = (lo, hi),
            other => {
                return Err(CliError::input(format!(
                    "unknown bound `{other}`, expected kappa0_khz, t_offset_us, scale, or heating"
                )))
            }
        }
    }
    Ok(bounds)
}

/// Recovers the four measurement parameters from a dataset file and writes
/// the fitted model next to the data for point-vs-curve comparison.
pub fn fit(dataset_path: &Path, out_dir: &Path, bounds_args: &[String]) -> Result<String> {
    let parsed = files::read_dataset_csv(dataset_path)?;
    let dataset = &parsed.dataset;
    let bounds = parse_bounds(bounds_args)?;
    let result = fitting::fit_observation(dataset, &bounds, &FitOptions::default())?;
    let shape = ChainShape::for_n_ions(dataset.n_sites())?;
    let overlay = fitting::model_populations(&shape, dataset.source(), &result.params(), dataset.times())?;

    let pinned = if result.pinned.is_empty() { "none".to_string() } else { result.pinned.join(",") };
    let fit_text = files::report(&[
        pair("kappa0_rad_s", fmt_float(result.kappa0)),
        pair("kappa0_khz", fmt_float(result.kappa0 / TAU / 1e3)),
        pair("t_offset_us", fmt_float(result.t_offset * 1e6)),
        pair("scale", fmt_float(result.scale)),
        pair("heating_rate", fmt_float(result.heating_rate)),
        pair("rss", fmt_float(result.rss)),
        pair("grid_rss", fmt_float(result.grid_rss)),
        pair("n_evals", result.n_evals.to_string()),
        pair("converged", result.converged.to_string()),
        pair("pinned", pinned),
    ]);

    let n = dataset.n_sites();
    let mut header = String::from("t_us");
    for m in 0..n {
        header.push_str(&format!(",d{}", m + 1));
    }
    for m in 0..n {
        header.push_str(&format!(",f{}", m + 1));
    }
    let rows: Vec<Vec<f64>> = (0..dataset.n_steps())
        .map(|k| {
            let mut row = Vec::with_capacity(1 + 2 * n);
            row.push(parsed.times_us[k]);
            for m in 0..n {
                row.push(dataset.rate(k, m));
            }
            for m in 0..n {
                row.push(overlay[(k, m)]);
            }
            row
        })
        .collect();
    let overlay_meta = vec![pair("run.source", (dataset.source() + 1).to_string())];

    let staged = vec![
        (out_dir.join("fit.txt"), fit_text.clone()),
        (out_dir.join("overlay.csv"), files::table_csv(&overlay_meta, &header, &rows)),
    ];
    files::persist(&staged)?;
    Ok(format!("{fit_text}{}", wrote(&staged)))
}

fn sweep_values(values: Option<&str>, range: Option<&str>) -> Result<Vec<f64>> {
    match (values, range) {
        (Some(_), Some(_)) => Err(CliError::input("pass either --values or --range, not both")),
        (None, None) => Err(CliError::input("sweep needs --values a,b,... or --range lo:hi:count")),
        (Some(list), None) => list
            .split(',')
            .map(|field| {
                field.trim().parse().map_err(|_| {
                    CliError::input(format!("cannot parse sweep value `{field}`"))
                })
            })
            .collect(),
        (None, Some(text)) => {
            let parts: Vec<&str> = text.split(':').collect();
            let &[lo, hi, count] = parts.as_slice() else {
                return Err(CliError::input(format!("range `{text}` is not of the form lo:hi:count")));
            };
            let lo: f64 = lo.trim().parse().map_err(|_| {
                CliError::input(format!("range `{text}`: cannot parse `{lo}`"))
            })?;
            let hi: f64 = hi.trim().parse().map_err(|_| {
                CliError::input(format!("range `{text}`: cannot parse `{hi}`"))
            })?;
            let count: usize = count.trim().parse().map_err(|_| {
                CliError::input(format!("range `{text}`: cannot parse `{count}`"))
            })?;
            if count < 2 {
                return Err(CliError::input("range count must be at least 2"));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::input(format!("range `{text}` must satisfy lo < hi")));
            }
            let step = (hi - lo) / (count - 1) as f64;
            Ok((0..count).map(|i| lo + step * i as f64).collect())
        }
    }
}

/// Re-solves the chain for each value of one swept parameter and tabulates
/// the hopping scale against the geometry.
pub fn sweep(scn: &Scenario, param: &str, values: Option<&str>, range: Option<&str>) -> Result<String> {
    scn.validate()?;
    let values = sweep_values(values, range)?;
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let mut varied = scn.clone();
        match param {
            "omega_y" => varied.omega_y_mhz = v,
            "omega_z" => varied.omega_z_mhz = v,
            "n_ions" => {
                if v.fract() != 0.0 || v < 2.0 {
                    return Err(CliError::input(format!(
                        "n_ions values must be integers >= 2, got {v}"
                    )));
                }
                varied.n_ions = v as usize;
            }
            other => return Err(CliError::input(format!("unknown sweep parameter `{other}`"))),
        }
        let config = varied.trap_config()?;
        let chain = crystal::equilibrium_positions(&config)?;
        let hopping = coupling::hopping_matrix(&chain, &config)?;
        rows.push(vec![
            v,
            hopping.kappa0(),
            chain.central_gap()? * 1e6,
            coupling::max_adjacent_hopping_time(&hopping)? * 1e6,
        ]);
    }
    let table = files::table_csv(
        &[pair("param", param)],
        "value,kappa0_rad_s,d0_um,hop_time_us",
        &rows,
    );
    let staged = vec![(Path::new(&scn.out_dir).join("sweep.csv"), table.clone())];
    files::persist(&staged)?;
    Ok(format!("{table}{}", wrote(&staged)))
}
