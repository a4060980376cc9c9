//! Walk propagation and synthetic measurements.
//!
//! A single phonon injected at one site evolves under the hopping
//! Hamiltonian; in the mode basis `h b^(p) = omega_p b^(p)` the site
//! populations are
//!
//! ```text
//! P_nm(t) = | sum_p b_n^(p) b_m^(p) exp(-i omega_p t) |^2
//! ```
//!
//! [`propagate`] evaluates that sum directly. [`ode_oracle`] integrates the
//! Schroedinger equation with fixed-step RK4 instead and exists only to
//! cross-check `propagate`; the two routes are deliberately independent.
//! [`simulate_dataset`] turns ideal populations into Bernoulli shot counts
//! with scale loss, timing offset, and a linear heating background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::HoppingMatrix;
use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::{self, Matrix};

/// RK4 is trusted only while `kappa0 * dt` stays below this.
pub const ORACLE_STEP_LIMIT: f64 = 0.01;

/// Pre-clamp model populations may stray outside [0, 1] by this much before
/// the dataset is flagged as outside the single-phonon regime.
pub const REGIME_MARGIN: f64 = 0.05;

/// Eigenmodes of a hopping matrix: frequencies ascending, vectors as columns.
///
/// Vector signs follow a fixed convention (first non-negligible component
/// positive) and near-degenerate pairs order the mirror-even vector first, so
/// the decomposition is reproducible bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis<F> {
    pub(crate) omega: Vec<F>,
    pub(crate) b: Matrix<F>,
}

impl<F: Float> ModeBasis<F> {
    /// Mode frequencies in rad/s, ascending.
    pub fn omega(&self) -> &[F] {
        &self.omega
    }

    /// Mode vectors as matrix columns, aligned with [`Self::omega`].
    pub fn vectors(&self) -> &Matrix<F> {
        &self.b
    }

    pub fn n_sites(&self) -> usize {
        self.b.rows()
    }

    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }
}

fn mirror_parity<F: Float>(col: &[F]) -> F {
    let n = col.len();
    (0..n).map(|i| col[i] * col[n - 1 - i]).sum()
}

/// Shared eigen post-processing: ascending frequencies, even-parity-first on
/// near-degenerate pairs, first significant component of each vector positive.
pub(crate) fn eigenbasis<F: Float>(m: &Matrix<F>) -> (Vec<F>, Matrix<F>) {
    let (mut w, mut v) = linalg::symmetric_eigen(m);
    let n = w.len();
    let scale = w.iter().fold(F::zero(), |a, &x| a.max(x.abs())).max(F::min_positive_value());
    let tie = scale * F::of(1e-12).max(F::epsilon() * F::of(100.0));
    for i in 0..n.saturating_sub(1) {
        if (w[i + 1] - w[i]).abs() <= tie {
            let even_second = mirror_parity(&v.column(i + 1)) > F::zero();
            let odd_first = mirror_parity(&v.column(i)) <= F::zero();
            if odd_first && even_second {
                w.swap(i, i + 1);
                for r in 0..v.rows() {
                    let t = v[(r, i)];
                    v[(r, i)] = v[(r, i + 1)];
                    v[(r, i + 1)] = t;
                }
            }
        }
    }
    let signif = F::of(1e-9).max(F::epsilon() * F::of(100.0));
    for j in 0..n {
        let col = v.column(j);
        if let Some(&lead) = col.iter().find(|c| c.abs() > signif) {
            if lead < F::zero() {
                for r in 0..v.rows() {
                    v[(r, j)] = -v[(r, j)];
                }
            }
        }
    }
    (w, v)
}

/// Diagonalizes the hopping Hamiltonian.
pub fn mode_decomposition<F: Float>(hopping: &HoppingMatrix<F>) -> ModeBasis<F> {
    let (omega, b) = eigenbasis(hopping.matrix());
    ModeBasis { omega, b }
}

/// Site populations over time for a walk started at `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationTrace<F> {
    times: Vec<F>,
    p: Matrix<F>,
    source: usize,
}

impl<F: Float> PropagationTrace<F> {
    /// Wraps an externally produced population record. Shapes must agree and
    /// every entry must be finite; nothing else is assumed, so arbitrary time
    /// series can be run through the spectral tooling.
    pub fn new(times: Vec<F>, p: Matrix<F>, source: usize) -> Result<Self> {
        if p.rows() != times.len() {
            return Err(Error::domain(format!(
                "trace has {} rows but {} time stamps",
                p.rows(),
                times.len()
            )));
        }
        if source >= p.cols() {
            return Err(Error::domain(format!("source {source} out of range for {} sites", p.cols())));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("non-finite time stamp"));
        }
        if (0..p.rows()).any(|i| p.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::domain("non-finite population entry"));
        }
        Ok(PropagationTrace { times, p, source })
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    /// Populations, one row per time stamp, one column per site.
    pub fn populations(&self) -> &Matrix<F> {
        &self.p
    }

    pub fn row(&self, k: usize) -> &[F] {
        self.p.row(k)
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn n_sites(&self) -> usize {
        self.p.cols()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid step if the time stamps are uniform, else `NonUniformGrid`.
    pub fn uniform_step(&self) -> Result<F> {
        if self.times.len() < 2 {
            return Ok(F::zero());
        }
        let dt = self.times[1] - self.times[0];
        if !(dt > F::zero()) {
            return Err(Error::NonUniformGrid(1));
        }
        let tol = dt * F::of(1e-9).max(F::epsilon() * F::of(100.0));
        for k in 1..self.times.len() {
            if ((self.times[k] - self.times[k - 1]) - dt).abs() > tol {
                return Err(Error::NonUniformGrid(k));
            }
        }
        Ok(dt)
    }
}

/// Evaluates `P_nm(t)` from the mode sum at arbitrary (finite) times.
pub fn propagate<F: Float>(basis: &ModeBasis<F>, source: usize, times: &[F]) -> Result<PropagationTrace<F>> {
    let n = basis.n_sites();
    if source >= n {
        return Err(Error::domain(format!("source {source} out of range for {n} sites")));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("non-finite time stamp"));
    }
    let weights: Vec<F> = (0..basis.n_modes()).map(|p| basis.b[(source, p)]).collect();
    let mut p = Matrix::zeros(times.len(), n);
    let mut re = vec![F::zero(); n];
    let mut im = vec![F::zero(); n];
    for (k, &t) in times.iter().enumerate() {
        re.fill(F::zero());
        im.fill(F::zero());
        for (q, &wq) in weights.iter().enumerate() {
            let (s, c) = (basis.omega[q] * t).sin_cos();
            for m in 0..n {
                let a = wq * basis.b[(m, q)];
                re[m] += a * c;
                im[m] -= a * s;
            }
        }
        for m in 0..n {
            p[(k, m)] = re[m] * re[m] + im[m] * im[m];
        }
    }
    Ok(PropagationTrace { times: times.to_vec(), p, source })
}

/// Integrates `i psi' = h psi` from the source indicator with fixed-step RK4
/// and records `|psi|^2` on the step grid up to `t_end`.
///
/// Real arithmetic throughout: with `psi = x + i y` the equation splits into
/// `x' = h y`, `y' = -h x`.
pub fn ode_oracle<F: Float>(
    hopping: &HoppingMatrix<F>,
    source: usize,
    t_end: F,
    dt: F,
) -> Result<PropagationTrace<F>> {
    let n = hopping.n_ions();
    if source >= n {
        return Err(Error::domain(format!("source {source} out of range for {n} sites")));
    }
    if !(dt.is_finite() && dt > F::zero()) {
        return Err(Error::domain(format!("step must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end >= F::zero()) {
        return Err(Error::domain(format!("end time must be non-negative, got {t_end}")));
    }
    let stiffness = hopping.kappa0() * dt;
    if stiffness.as_f64() >= ORACLE_STEP_LIMIT {
        return Err(Error::StepTooLarge(stiffness.as_f64(), ORACLE_STEP_LIMIT));
    }
    let h = hopping.matrix();
    let n_steps = (t_end / dt + F::of(1e-9)).floor().as_f64() as usize;

    let mut x = vec![F::zero(); n];
    let mut y = vec![F::zero(); n];
    x[source] = F::one();

    let mut p = Matrix::zeros(n_steps + 1, n);
    let mut times = Vec::with_capacity(n_steps + 1);
    let record = |k: usize, x: &[F], y: &[F], p: &mut Matrix<F>| {
        for m in 0..n {
            p[(k, m)] = x[m] * x[m] + y[m] * y[m];
        }
    };
    record(0, &x, &y, &mut p);
    times.push(F::zero());

    let half = F::of(0.5);
    let sixth = F::of(1.0 / 6.0);
    let two = F::of(2.0);
    let mut kx = vec![vec![F::zero(); n]; 4];
    let mut ky = vec![vec![F::zero(); n]; 4];
    let mut tx = vec![F::zero(); n];
    let mut ty = vec![F::zero(); n];
    for k in 1..=n_steps {
        // stage derivatives: (x', y') = (h y, -h x)
        h.mul_vec_into(&y, &mut kx[0]);
        h.mul_vec_into(&x, &mut ky[0]);
        for s in 1..4 {
            let w = if s < 3 { half * dt } else { dt };
            for i in 0..n {
                tx[i] = x[i] + w * kx[s - 1][i];
                ty[i] = y[i] - w * ky[s - 1][i];
            }
            h.mul_vec_into(&ty, &mut kx[s]);
            h.mul_vec_into(&tx, &mut ky[s]);
        }
        for i in 0..n {
            let dx = kx[0][i] + two * (kx[1][i] + kx[2][i]) + kx[3][i];
            let dy = ky[0][i] + two * (ky[1][i] + ky[2][i]) + ky[3][i];
            x[i] += dt * sixth * dx;
            y[i] -= dt * sixth * dy;
        }
        record(k, &x, &y, &mut p);
        times.push(F::of_usize(k) * dt);
    }
    Ok(PropagationTrace { times, p, source })
}

/// Detection model applied to ideal populations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel<F> {
    /// Contrast of the ideal signal, in (0, 1].
    pub scale: F,
    /// Acquisition delay in seconds; the ideal signal is evaluated at
    /// `t - t_offset`.
    pub t_offset: F,
    /// Quanta per second leaking in from the environment, spread evenly over
    /// the sites as `heating_rate * t / N`.
    pub heating_rate: F,
    /// Bernoulli draws per site and time step.
    pub shots: u32,
    /// Base RNG seed; step `k` draws from stream `k` of this seed.
    pub seed: u64,
}

impl<F: Float> MeasurementModel<F> {
    pub fn new(scale: F, t_offset: F, heating_rate: F, shots: u32, seed: u64) -> Result<Self> {
        let model = MeasurementModel { scale, t_offset, heating_rate, shots, seed };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > F::zero() && self.scale <= F::one()) {
            return Err(Error::config(format!("scale must be in (0, 1], got {}", self.scale)));
        }
        if !self.t_offset.is_finite() {
            return Err(Error::config("t_offset must be finite"));
        }
        if !(self.heating_rate.is_finite() && self.heating_rate >= F::zero()) {
            return Err(Error::config(format!("heating_rate must be non-negative, got {}", self.heating_rate)));
        }
        if self.shots == 0 {
            return Err(Error::config("shots must be at least 1"));
        }
        Ok(())
    }
}

/// Shot counts per time step and site, with the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDataset<F> {
    times: Vec<F>,
    counts: Vec<u32>,
    n_sites: usize,
    source: usize,
    model: MeasurementModel<F>,
    regime_violation: bool,
}

impl<F: Float> ObservationDataset<F> {
    /// Reassembles a dataset, e.g. after file round-tripping. Counts are laid
    /// out row-major (time-major) and must not exceed the shot number.
    pub fn from_parts(
        times: Vec<F>,
        counts: Vec<u32>,
        n_sites: usize,
        source: usize,
        model: MeasurementModel<F>,
        regime_violation: bool,
    ) -> Result<Self> {
        model.validate()?;
        if n_sites == 0 || counts.len() != times.len() * n_sites {
            return Err(Error::domain(format!(
                "count table of {} entries does not match {} steps x {} sites",
                counts.len(),
                times.len(),
                n_sites
            )));
        }
        if source >= n_sites {
            return Err(Error::domain(format!("source {source} out of range for {n_sites} sites")));
        }
        if counts.iter().any(|&c| c > model.shots) {
            return Err(Error::domain("count exceeds shots"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("non-finite time stamp"));
        }
        Ok(ObservationDataset { times, counts, n_sites, source, model, regime_violation })
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn model(&self) -> &MeasurementModel<F> {
        &self.model
    }

    pub fn shots(&self) -> u32 {
        self.model.shots
    }

    /// True when some pre-clamp expected population left `[0, 1]` by more
    /// than [`REGIME_MARGIN`], i.e. the single-phonon picture is strained.
    pub fn regime_violation(&self) -> bool {
        self.regime_violation
    }

    pub fn count(&self, step: usize, site: usize) -> u32 {
        self.counts[step * self.n_sites + site]
    }

    pub fn counts_row(&self, step: usize) -> &[u32] {
        &self.counts[step * self.n_sites..(step + 1) * self.n_sites]
    }

    /// Observed excitation rate `count / shots`.
    pub fn rate(&self, step: usize, site: usize) -> F {
        F::of_usize(self.count(step, site) as usize) / F::of_usize(self.model.shots as usize)
    }
}

/// Expected (clamped) populations under a measurement model, plus the regime
/// flag. This is the noise-free limit of [`simulate_dataset`].
pub fn expected_populations<F: Float>(
    basis: &ModeBasis<F>,
    source: usize,
    times: &[F],
    model: &MeasurementModel<F>,
) -> Result<(Matrix<F>, bool)> {
    model.validate()?;
    if times.iter().any(|t| !(t.is_finite() && *t >= F::zero())) {
        return Err(Error::domain("times must be finite and non-negative"));
    }
    let shifted: Vec<F> = times.iter().map(|&t| t - model.t_offset).collect();
    let ideal = propagate(basis, source, &shifted)?;
    let n = basis.n_sites();
    let per_site = F::of_usize(n);
    let margin = F::of(REGIME_MARGIN);
    let mut q = Matrix::zeros(times.len(), n);
    let mut violation = false;
    for (k, &t) in times.iter().enumerate() {
        let background = model.heating_rate * t / per_site;
        for m in 0..n {
            let raw = model.scale * ideal.populations()[(k, m)] + background;
            if raw < -margin || raw > F::one() + margin {
                violation = true;
            }
            q[(k, m)] = raw.max(F::zero()).min(F::one());
        }
    }
    Ok((q, violation))
}

/// Bernoulli counts for one time step. Step `k` draws from stream `k` of the
/// seed, sites in order, shots innermost, so steps can be generated in any
/// order (or in parallel) with identical results.
pub fn sample_step_counts<F: Float>(expected: &[F], shots: u32, seed: u64, step: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    expected
        .iter()
        .map(|&q| {
            let q = q.as_f64();
            (0..shots).filter(|_| rng.random::<f64>() < q).count() as u32
        })
        .collect()
}

fn sample_dataset<F: Float>(
    times: &[F],
    q: &Matrix<F>,
    source: usize,
    model: &MeasurementModel<F>,
    violation: bool,
) -> ObservationDataset<F> {
    let n = q.cols();
    let mut counts = Vec::with_capacity(times.len() * n);
    for k in 0..times.len() {
        counts.extend(sample_step_counts(q.row(k), model.shots, model.seed, k));
    }
    ObservationDataset {
        times: times.to_vec(),
        counts,
        n_sites: n,
        source,
        model: model.clone(),
        regime_violation: violation,
    }
}

/// Full synthetic measurement: ideal walk, detection model, shot noise.
/// Times must be finite and non-negative but need not be uniform.
pub fn simulate_dataset<F: Float>(
    basis: &ModeBasis<F>,
    source: usize,
    times: &[F],
    model: &MeasurementModel<F>,
) -> Result<ObservationDataset<F>> {
    let (q, violation) = expected_populations(basis, source, times, model)?;
    Ok(sample_dataset(times, &q, source, model, violation))
}

/// Applies a measurement model to an already-propagated ideal trace.
///
/// The trace must sit on a uniform grid. A nonzero `t_offset` is realized by
/// shifting whole grid steps (the offset must be a step multiple and the grid
/// must start at zero); populations before the start reflect through `t = 0`,
/// which is exact because `P` is even in time. Off-grid offsets need the mode
/// basis — use [`simulate_dataset`] for those.
pub fn apply_measurement_model<F: Float>(
    trace: &PropagationTrace<F>,
    model: &MeasurementModel<F>,
) -> Result<ObservationDataset<F>> {
    model.validate()?;
    if trace.is_empty() {
        return Err(Error::domain("trace has no samples"));
    }
    let dt = trace.uniform_step()?;
    let steps = trace.len();
    let shift = if model.t_offset == F::zero() {
        0usize
    } else {
        if steps < 2 {
            return Err(Error::domain("offset shift needs at least two grid points"));
        }
        let ratio = model.t_offset / dt;
        let j = ratio.round();
        if (ratio - j).abs() > F::of(1e-6) || j < F::zero() {
            return Err(Error::domain(format!(
                "t_offset {} is not a non-negative multiple of the grid step {}; \
                 resample via the mode basis instead",
                model.t_offset, dt
            )));
        }
        if trace.times()[0].abs() > dt * F::of(1e-9) {
            return Err(Error::domain("offset shift needs a grid starting at zero"));
        }
        let j = j.as_f64() as usize;
        if j >= steps {
            return Err(Error::domain("t_offset shifts past the end of the trace"));
        }
        j
    };
    let n = trace.n_sites();
    let per_site = F::of_usize(n);
    let margin = F::of(REGIME_MARGIN);
    let mut q = Matrix::zeros(steps, n);
    let mut violation = false;
    for k in 0..steps {
        let src = k.abs_diff(shift);
        let background = model.heating_rate * trace.times()[k] / per_site;
        for m in 0..n {
            let raw = model.scale * trace.populations()[(src, m)] + background;
            if raw < -margin || raw > F::one() + margin {
                violation = true;
            }
            q[(k, m)] = raw.max(F::zero()).min(F::one());
        }
    }
    Ok(sample_dataset(trace.times(), &q, trace.source(), model, violation))
}
