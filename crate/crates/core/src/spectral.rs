//! Interference spectra of walk traces.
//!
//! The population `P_nm(t)` is a sum of beats between mode pairs:
//!
//! ```text
//! P_nm(t) = dc + sum_{p<q} 2 a_pq cos((omega_q - omega_p) t)
//! a_pq    = (b_n^(q) b_m^(q)) (b_n^(p) b_m^(p))
//! dc      = sum_p (b_n^(p) b_m^(p))^2
//! ```
//!
//! [`analytic_spectrum`] lists those lines; [`dft_trace`] /
//! [`dft_dataset`] compute a one-sided discrete transform of a sampled
//! trace; [`match_peaks`] pairs the two up.

use crate::dynamics::{ModeBasis, ObservationDataset, PropagationTrace};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

/// One beat note: mode pair `(p, q)` with `p < q` (ascending-frequency mode
/// indices), angular frequency `omega_q - omega_p`, and signed amplitude.
/// The time-domain cosine coefficient is `2 * amplitude`, so an ideal DFT
/// magnitude at the line equals `|amplitude|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumLine<F> {
    pub freq: F,
    pub amplitude: F,
    pub mode_pair: (usize, usize),
}

impl<F: Float> SpectrumLine<F> {
    pub fn freq_hz(&self) -> F {
        self.freq / F::TAU()
    }
}

/// Beat-note decomposition of one site pair, lines sorted by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSpectrum<F> {
    pub lines: Vec<SpectrumLine<F>>,
    pub dc: F,
}

/// Predicts the interference spectrum of `P_nm`.
pub fn analytic_spectrum<F: Float>(basis: &ModeBasis<F>, n: usize, m: usize) -> Result<AnalyticSpectrum<F>> {
    let sites = basis.n_sites();
    if n >= sites || m >= sites {
        return Err(Error::domain(format!(
            "site pair ({n}, {m}) out of range for {sites} sites"
        )));
    }
    let modes = basis.n_modes();
    let b = basis.vectors();
    // Per-mode weights grouped as (b_n b_m) so that swapping n and m gives
    // bit-identical amplitudes.
    let w: Vec<F> = (0..modes).map(|p| b[(n, p)] * b[(m, p)]).collect();
    let dc = w.iter().map(|&x| x * x).sum();
    let mut lines = Vec::with_capacity(modes * (modes - 1) / 2);
    for p in 0..modes {
        for q in p + 1..modes {
            lines.push(SpectrumLine {
                freq: basis.omega()[q] - basis.omega()[p],
                amplitude: w[q] * w[p],
                mode_pair: (p, q),
            });
        }
    }
    lines.sort_by(|a, b| {
        a.freq
            .partial_cmp(&b.freq)
            .unwrap()
            .then(a.mode_pair.cmp(&b.mode_pair))
    });
    Ok(AnalyticSpectrum { lines, dc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

/// One-sided DFT magnitudes of a sampled trace, all sites at once.
///
/// Bin `k` (1-based, `k <= T/2`) sits at `k / (T dt)` Hz. Magnitudes are
/// normalized by the summed window, so a full-scale cosine of amplitude `A`
/// lands at `A/2` in its bin. Bin 0 is the (signed) windowed mean, kept
/// separately in `dc`; the transform itself runs on the mean-removed signal
/// so a constant trace has identically empty bins under either window.
#[derive(Debug, Clone, PartialEq)]
pub struct DftSpectrum<F> {
    freqs_hz: Vec<F>,
    mags: Matrix<F>,
    dc: Vec<F>,
    window: Window,
    bin_hz: F,
}

impl<F: Float> DftSpectrum<F> {
    /// Bin center frequencies in Hz, ascending, excluding bin 0.
    pub fn freqs_hz(&self) -> &[F] {
        &self.freqs_hz
    }

    /// Magnitudes, one row per bin, one column per site.
    pub fn magnitudes(&self) -> &Matrix<F> {
        &self.mags
    }

    pub fn magnitude(&self, bin: usize, site: usize) -> F {
        self.mags[(bin - 1, site)]
    }

    /// Windowed mean per site (bin 0).
    pub fn dc(&self) -> &[F] {
        &self.dc
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn bin_hz(&self) -> F {
        self.bin_hz
    }

    pub fn n_bins(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn n_sites(&self) -> usize {
        self.mags.cols()
    }
}

fn dft_core<F: Float>(dt: F, data: &Matrix<F>, window: Window) -> DftSpectrum<F> {
    let t_len = data.rows();
    let sites = data.cols();
    let weights: Vec<F> = match window {
        Window::Rectangular => vec![F::one(); t_len],
        Window::Hann => (0..t_len)
            .map(|t| {
                let phase = F::TAU() * F::of_usize(t) / F::of_usize(t_len);
                F::of(0.5) * (F::one() - phase.cos())
            })
            .collect(),
    };
    let norm: F = weights.iter().copied().sum();
    // Twiddle lookup keeps the direct transform exact in phase: the angle for
    // (bin k, sample t) is -2 pi (k t mod T) / T.
    let twiddle: Vec<(F, F)> = (0..t_len)
        .map(|j| {
            let phase = F::TAU() * F::of_usize(j) / F::of_usize(t_len);
            phase.sin_cos()
        })
        .collect();
    let n_bins = t_len / 2;
    let mut mags = Matrix::zeros(n_bins, sites);
    let mut dc = vec![F::zero(); sites];
    for site in 0..sites {
        let mean = (0..t_len).map(|t| weights[t] * data[(t, site)]).sum::<F>() / norm;
        dc[site] = mean;
        // The windowed mean is removed before transforming; otherwise the
        // window's own spectral shoulder (Hann puts a quarter of the mean
        // into bin 1) masquerades as signal.
        let series: Vec<F> = (0..t_len).map(|t| weights[t] * (data[(t, site)] - mean)).collect();
        for k in 1..=n_bins {
            let mut re = F::zero();
            let mut im = F::zero();
            for (t, &x) in series.iter().enumerate() {
                let (s, c) = twiddle[(k * t) % t_len];
                re += x * c;
                im -= x * s;
            }
            mags[(k - 1, site)] = (re * re + im * im).sqrt() / norm;
        }
    }
    let bin_hz = (dt * F::of_usize(t_len)).recip();
    let freqs_hz = (1..=n_bins).map(|k| F::of_usize(k) * bin_hz).collect();
    DftSpectrum { freqs_hz, mags, dc, window, bin_hz }
}

/// Transforms an ideal trace. The time grid must be uniform with at least
/// two samples.
pub fn dft_trace<F: Float>(trace: &PropagationTrace<F>, window: Window) -> Result<DftSpectrum<F>> {
    if trace.len() < 2 {
        return Err(Error::domain("transform needs at least two samples"));
    }
    let dt = trace.uniform_step()?;
    Ok(dft_core(dt, trace.populations(), window))
}

/// Transforms observed rates `count / shots` from a dataset.
pub fn dft_dataset<F: Float>(dataset: &ObservationDataset<F>, window: Window) -> Result<DftSpectrum<F>> {
    let rates = Matrix::from_fn(dataset.n_steps(), dataset.n_sites(), |k, m| dataset.rate(k, m));
    let trace = PropagationTrace::new(dataset.times().to_vec(), rates, dataset.source())?;
    dft_trace(&trace, window)
}

/// A DFT local maximum paired to an analytic line.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakMatch<F> {
    /// 1-based bin index.
    pub bin: usize,
    pub freq_hz: F,
    pub magnitude: F,
    /// `magnitude / |line amplitude|`; near one when leakage is mild.
    pub ratio: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchEntry<F> {
    pub line: SpectrumLine<F>,
    pub peak: Option<PeakMatch<F>>,
}

/// Line-by-line matching result, entries sorted by line frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport<F> {
    pub entries: Vec<MatchEntry<F>>,
    pub tol_bins: usize,
}

impl<F: Float> MatchReport<F> {
    pub fn matched(&self) -> usize {
        self.entries.iter().filter(|e| e.peak.is_some()).count()
    }

    pub fn all_matched(&self) -> bool {
        self.entries.iter().all(|e| e.peak.is_some())
    }
}

/// Pairs each analytic line with the nearest DFT local maximum of `site`
/// within `tol_bins` bins; lines with no maximum in reach stay unmatched.
/// The report does not depend on the order of `lines`. A featureless series
/// produces no maxima at all, so every line of a constant input stays
/// unmatched rather than latching onto numerical noise.
pub fn match_peaks<F: Float>(
    dft: &DftSpectrum<F>,
    site: usize,
    lines: &[SpectrumLine<F>],
    tol_bins: usize,
) -> Result<MatchReport<F>> {
    if site >= dft.n_sites() {
        return Err(Error::domain(format!(
            "site {site} out of range for {} sites",
            dft.n_sites()
        )));
    }
    if tol_bins == 0 {
        return Err(Error::domain("tolerance must be at least one bin"));
    }
    let col = dft.magnitudes().column(site);
    // Roundoff leaves a featureless series with ragged near-zero bins; those
    // must not count as maxima, so anything at the accumulation noise floor
    // is ignored outright.
    let col_max = col.iter().fold(F::zero(), |a, &b| a.max(b));
    let floor = F::epsilon() * F::of_usize(2 * col.len()) * (dft.dc()[site].abs() + col_max);
    let peaks: Vec<usize> = (0..col.len())
        .filter(|&i| {
            let left = i == 0 || col[i] >= col[i - 1];
            let right = i + 1 == col.len() || col[i] >= col[i + 1];
            left && right && col[i] > floor
        })
        .collect();
    let reach = F::of_usize(tol_bins) * dft.bin_hz() * (F::one() + F::of(1e-9));
    let mut entries: Vec<MatchEntry<F>> = lines
        .iter()
        .map(|line| {
            let f = line.freq_hz();
            let best = peaks
                .iter()
                .map(|&i| ((dft.freqs_hz()[i] - f).abs(), i))
                .filter(|&(d, _)| d <= reach)
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let peak = best.map(|(_, i)| PeakMatch {
                bin: i + 1,
                freq_hz: dft.freqs_hz()[i],
                magnitude: col[i],
                ratio: col[i] / line.amplitude.abs(),
            });
            MatchEntry { line: line.clone(), peak }
        })
        .collect();
    entries.sort_by(|a, b| {
        a.line
            .freq
            .partial_cmp(&b.line.freq)
            .unwrap()
            .then(a.line.mode_pair.cmp(&b.line.mode_pair))
    });
    Ok(MatchReport { entries, tol_bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::hopping_matrix;
    use crate::crystal::{equilibrium_positions, TrapConfig};
    use crate::dynamics::{mode_decomposition, propagate};
    use approx::assert_relative_eq;

    fn reference_basis() -> (ModeBasis<f64>, f64) {
        let config = TrapConfig::from_lab_units(4, 40.0, 3.1, 2.9, 0.09).unwrap();
        let chain = equilibrium_positions(&config).unwrap();
        let hop = hopping_matrix(&chain, &config).unwrap();
        (mode_decomposition(&hop), hop.kappa0())
    }

    fn pair_basis() -> (ModeBasis<f64>, f64) {
        let config = TrapConfig::from_lab_units(2, 40.0, 3.1, 2.9, 0.09).unwrap();
        let chain = equilibrium_positions(&config).unwrap();
        let hop = hopping_matrix(&chain, &config).unwrap();
        (mode_decomposition(&hop), hop.kappa0())
    }

    fn cosine_trace(t_len: usize, dt: f64, mean: f64, amp: f64, freq_hz: f64) -> PropagationTrace<f64> {
        let times: Vec<f64> = (0..t_len).map(|k| k as f64 * dt).collect();
        let p = Matrix::from_fn(t_len, 1, |k, _| {
            mean + amp * (std::f64::consts::TAU * freq_hz * times[k]).cos()
        });
        PropagationTrace::new(times, p, 0).unwrap()
    }

    #[test]
    fn pair_site_spectrum_is_single_beat() {
        let (basis, k0) = pair_basis();
        let sp = analytic_spectrum(&basis, 0, 0).unwrap();
        assert_eq!(sp.lines.len(), 1);
        assert_relative_eq!(sp.dc, 0.5, epsilon = 1e-12);
        assert_relative_eq!(sp.lines[0].freq, k0, max_relative = 1e-12);
        assert_relative_eq!(sp.lines[0].amplitude, 0.25, epsilon = 1e-12);
        assert_eq!(sp.lines[0].mode_pair, (0, 1));

        let cross = analytic_spectrum(&basis, 0, 1).unwrap();
        assert_relative_eq!(cross.dc, 0.5, epsilon = 1e-12);
        assert_relative_eq!(cross.lines[0].amplitude, -0.25, epsilon = 1e-12);
    }

    #[test]
    fn four_ion_beats_frozen() {
        let (basis, _) = reference_basis();
        let sp = analytic_spectrum(&basis, 1, 1).unwrap();
        assert_eq!(sp.lines.len(), 6);
        let expect_hz = [
            1396.5517241379287,
            1962.1113909099672,
            2442.857317984568,
            3358.6631150478956,
            4404.968708894536,
            5801.520433032465,
        ];
        for (line, &hz) in sp.lines.iter().zip(&expect_hz) {
            assert_relative_eq!(line.freq_hz(), hz, max_relative = 1e-6);
        }
        assert_relative_eq!(sp.dc, 0.33367432306104194, max_relative = 1e-8);
        let expect_amp = [
            0.011364663923490885,
            0.011364663923490895,
            0.11363533607650946,
            0.0625,
            0.02066283846947945,
            0.11363533607650934,
        ];
        for (line, &a) in sp.lines.iter().zip(&expect_amp) {
            assert_relative_eq!(line.amplitude, a, epsilon = 1e-8);
        }
    }

    #[test]
    fn spectrum_reconstructs_initial_condition() {
        // dc + 2 sum(a) telescopes back to P_nm(0) = delta_nm.
        let (basis, _) = reference_basis();
        for n in 0..4 {
            for m in 0..4 {
                let sp = analytic_spectrum(&basis, n, m).unwrap();
                let total = sp.dc + 2.0 * sp.lines.iter().map(|l| l.amplitude).sum::<f64>();
                let want = if n == m { 1.0 } else { 0.0 };
                assert!((total - want).abs() < 1e-10, "({n},{m}) -> {total}");
            }
        }
    }

    #[test]
    fn dc_structure() {
        let (basis, _) = reference_basis();
        for n in 0..4 {
            let sum: f64 = (0..4).map(|m| analytic_spectrum(&basis, n, m).unwrap().dc).sum();
            assert!((sum - 1.0).abs() < 1e-10);
            for m in 0..4 {
                let a = analytic_spectrum(&basis, n, m).unwrap();
                let b = analytic_spectrum(&basis, m, n).unwrap();
                assert_eq!(a.dc, b.dc);
                for (la, lb) in a.lines.iter().zip(&b.lines) {
                    assert_eq!(la.amplitude, lb.amplitude);
                }
            }
        }
        assert!(analytic_spectrum(&basis, 0, 4).is_err());
    }

    #[test]
    fn time_average_over_full_periods_equals_dc() {
        let (basis, k0) = pair_basis();
        let period = std::f64::consts::TAU / k0;
        let dt = period / 100.0;
        let times: Vec<f64> = (0..500).map(|k| k as f64 * dt).collect();
        let trace = propagate(&basis, 0, &times).unwrap();
        let mean = trace.populations().column(0).iter().sum::<f64>() / 500.0;
        let sp = analytic_spectrum(&basis, 0, 0).unwrap();
        assert!((mean - sp.dc).abs() < 1e-3, "mean {mean} vs dc {}", sp.dc);
    }

    #[test]
    fn dft_of_constant_is_pure_dc() {
        for window in [Window::Rectangular, Window::Hann] {
            let trace = cosine_trace(128, 1e-3, 0.37, 0.0, 0.0);
            let dft = dft_trace(&trace, window).unwrap();
            assert_eq!(dft.n_bins(), 64);
            assert_relative_eq!(dft.dc()[0], 0.37, epsilon = 1e-12);
            for k in 1..=dft.n_bins() {
                assert!(dft.magnitude(k, 0) < 1e-12, "bin {k} leaks under {window:?}");
            }
        }
    }

    #[test]
    fn dft_bin_centered_cosine_gives_half_amplitude() {
        let (t_len, dt) = (256, 1e-3);
        let bin_hz = 1.0 / (t_len as f64 * dt);
        let trace = cosine_trace(t_len, dt, 0.4, 0.3, 12.0 * bin_hz);
        let dft = dft_trace(&trace, Window::Rectangular).unwrap();
        assert_relative_eq!(dft.bin_hz(), bin_hz, max_relative = 1e-12);
        assert_relative_eq!(dft.magnitude(12, 0), 0.15, epsilon = 1e-12);
        assert_relative_eq!(dft.dc()[0], 0.4, epsilon = 1e-12);
        for k in 1..=dft.n_bins() {
            if k != 12 {
                assert!(dft.magnitude(k, 0) < 1e-12, "bin {k} = {}", dft.magnitude(k, 0));
            }
        }
    }

    #[test]
    fn hann_suppresses_distant_leakage() {
        let (t_len, dt) = (256, 1e-3);
        let bin_hz = 1.0 / (t_len as f64 * dt);
        let trace = cosine_trace(t_len, dt, 0.5, 0.3, 12.37 * bin_hz);
        let rect = dft_trace(&trace, Window::Rectangular).unwrap();
        let hann = dft_trace(&trace, Window::Hann).unwrap();
        let distant = |d: &DftSpectrum<f64>| {
            (1..=d.n_bins())
                .filter(|&k| (k as isize - 12).unsigned_abs() > 6)
                .map(|k| d.magnitude(k, 0))
                .fold(0.0f64, f64::max)
        };
        assert!(
            distant(&hann) < distant(&rect) / 10.0,
            "hann {} vs rect {}",
            distant(&hann),
            distant(&rect)
        );
    }

    #[test]
    fn dft_rejects_bad_grids() {
        let p = Matrix::from_fn(3, 1, |_, _| 0.5);
        let warped = PropagationTrace::new(vec![0.0, 1e-3, 3e-3], p, 0).unwrap();
        assert_eq!(dft_trace(&warped, Window::Rectangular), Err(Error::NonUniformGrid(2)));
        let single = PropagationTrace::new(vec![0.0], Matrix::from_fn(1, 1, |_, _| 0.5), 0).unwrap();
        assert!(dft_trace(&single, Window::Rectangular).is_err());
    }

    #[test]
    fn dataset_transform_matches_rate_trace() {
        use crate::dynamics::{simulate_dataset, MeasurementModel};
        let (basis, _) = reference_basis();
        let times: Vec<f64> = (0..64).map(|k| k as f64 * 12.5e-6).collect();
        let model = MeasurementModel::new(0.66, 0.0, 5.0, 50, 9).unwrap();
        let ds = simulate_dataset(&basis, 1, &times, &model).unwrap();
        let via_ds = dft_dataset(&ds, Window::Rectangular).unwrap();
        let rates = Matrix::from_fn(64, 4, |k, m| ds.rate(k, m));
        let trace = PropagationTrace::new(times, rates, 1).unwrap();
        let via_trace = dft_trace(&trace, Window::Rectangular).unwrap();
        assert_eq!(via_ds, via_trace);
    }

    #[test]
    fn match_finds_exact_synthetic_peak() {
        let (t_len, dt) = (256, 1e-3);
        let bin_hz = 1.0 / (t_len as f64 * dt);
        let freq = 12.0 * bin_hz;
        let trace = cosine_trace(t_len, dt, 0.5, 0.2, freq);
        let dft = dft_trace(&trace, Window::Rectangular).unwrap();
        let lines = vec![SpectrumLine {
            freq: std::f64::consts::TAU * freq,
            amplitude: 0.1,
            mode_pair: (0, 1),
        }];
        let report = match_peaks(&dft, 0, &lines, 1).unwrap();
        let peak = report.entries[0].peak.as_ref().expect("line should match");
        assert_eq!(peak.bin, 12);
        assert_relative_eq!(peak.ratio, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn match_respects_tolerance_and_order() {
        let (t_len, dt) = (256, 1e-3);
        let bin_hz = 1.0 / (t_len as f64 * dt);
        let trace = cosine_trace(t_len, dt, 0.5, 0.2, 40.0 * bin_hz);
        let dft = dft_trace(&trace, Window::Rectangular).unwrap();
        let far = SpectrumLine { freq: std::f64::consts::TAU * 20.0 * bin_hz, amplitude: 0.1, mode_pair: (0, 1) };
        let near = SpectrumLine { freq: std::f64::consts::TAU * 41.0 * bin_hz, amplitude: 0.1, mode_pair: (1, 2) };
        // A bin-centered cosine transforms to a single spike, so the only
        // local maxima away from it are leakage ripples near the floor.
        let report = match_peaks(&dft, 0, &[near.clone(), far.clone()], 1).unwrap();
        assert_eq!(report.entries[0].line.mode_pair, (0, 1));
        assert_eq!(report.entries[1].line.mode_pair, (1, 2));
        assert_eq!(report.entries[1].peak.as_ref().unwrap().bin, 40);

        let swapped = match_peaks(&dft, 0, &[far, near], 1).unwrap();
        assert_eq!(report, swapped);

        let empty = match_peaks(&dft, 0, &[], 1).unwrap();
        assert!(empty.entries.is_empty());
        assert!(match_peaks(&dft, 0, &[], 0).is_err());
        assert!(match_peaks(&dft, 3, &[], 1).is_err());
    }

    #[test]
    fn featureless_trace_matches_nothing() {
        let (t_len, dt) = (256, 1e-3);
        let bin_hz = 1.0 / (t_len as f64 * dt);
        let trace = cosine_trace(t_len, dt, 0.37, 0.0, 0.0);
        let lines: Vec<SpectrumLine<f64>> = [3.0, 40.0, 97.0]
            .iter()
            .map(|&k| SpectrumLine {
                freq: std::f64::consts::TAU * k * bin_hz,
                amplitude: 0.1,
                mode_pair: (0, 1),
            })
            .collect();
        for window in [Window::Rectangular, Window::Hann] {
            let dft = dft_trace(&trace, window).unwrap();
            let report = match_peaks(&dft, 0, &lines, 2).unwrap();
            assert_eq!(report.matched(), 0, "{window:?} matched noise");
            assert!(!report.all_matched());
        }
    }

    #[test]
    fn reference_run_matches_all_lines() {
        let (basis, _) = reference_basis();
        let times: Vec<f64> = (0..800).map(|k| k as f64 * 12.5e-6).collect();
        let trace = propagate(&basis, 1, &times).unwrap();
        let dft = dft_trace(&trace, Window::Rectangular).unwrap();
        for site in 0..4 {
            let sp = analytic_spectrum(&basis, 1, site).unwrap();
            let report = match_peaks(&dft, site, &sp.lines, 1).unwrap();
            assert!(report.all_matched(), "site {site}");
            for entry in &report.entries {
                let peak = entry.peak.as_ref().unwrap();
                assert!(
                    (peak.freq_hz - entry.line.freq_hz()).abs() < 100.0,
                    "site {site} pair {:?}",
                    entry.line.mode_pair
                );
                // Rectangular-window scalloping keeps magnitudes within a
                // factor ~0.65..1.15 of the analytic amplitude on this grid.
                assert!(
                    (0.65..1.15).contains(&peak.ratio),
                    "site {site} pair {:?} ratio {}",
                    entry.line.mode_pair,
                    peak.ratio
                );
            }
            assert!(
                (dft.dc()[site] - sp.dc).abs() < 1e-3,
                "site {site} dc {} vs analytic {}",
                dft.dc()[site],
                sp.dc
            );
        }
    }
}
