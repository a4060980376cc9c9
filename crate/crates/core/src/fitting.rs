//! Recovery of measurement-model parameters from count data.
//!
//! The observed rate at step `t`, site `m` is modeled as
//!
//! ```text
//! q_m(t) = clamp(scale * P_m(t - t_offset; kappa0) + heating_rate * t / N, 0, 1)
//! ```
//!
//! where `P` comes from the N-ion chain shape, which is fixed; only the four
//! scalars are free. The search is deliberately plain: a coarse grid over
//! `(kappa0, t_offset)` with the linear pair `(scale, heating_rate)` solved in
//! closed form at every node, then cyclic golden-section refinement of all
//! four parameters. Everything is deterministic, including the parallel grid
//! scan.

use rayon::prelude::*;

use crate::crystal::{dimensionless_equilibrium, IonChain};
use crate::coupling::normalized_hopping_matrix;
use crate::dynamics::{self, ModeBasis, ObservationDataset};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

/// Mode structure of the N-ion chain in normalized units (`kappa0/2 = 1`).
/// Physical frequencies are `lambda_p * kappa0 / 2`, so one decomposition
/// serves every candidate `kappa0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainShape<F> {
    basis: ModeBasis<F>,
}

impl<F: Float> ChainShape<F> {
    pub fn for_n_ions(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("chain needs at least one ion"));
        }
        if n == 1 {
            let basis = ModeBasis { omega: vec![F::zero()], b: Matrix::identity(1) };
            return Ok(ChainShape { basis });
        }
        let u = dimensionless_equilibrium(n)?;
        let chain = IonChain::new(F::one(), u)?;
        let normalized = normalized_hopping_matrix(&chain)?;
        let (omega, b) = dynamics::eigenbasis(&normalized);
        Ok(ChainShape { basis: ModeBasis { omega, b } })
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    /// Normalized mode frequencies (eigenvalues in units of `kappa0/2`).
    pub fn lambda(&self) -> &[F] {
        self.basis.omega()
    }

    /// Ideal populations `P(t - t_offset; kappa0)`, one row per time.
    fn base(&self, source: usize, kappa0: F, t_offset: F, times: &[F]) -> Matrix<F> {
        let half_kappa = kappa0 * F::of(0.5);
        let scaled: Vec<F> = times.iter().map(|&t| (t - t_offset) * half_kappa).collect();
        dynamics::propagate(&self.basis, source, &scaled)
            .expect("scaled times are finite and the source is in range")
            .populations()
            .clone()
    }
}

/// The four free parameters of the measurement model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams<F> {
    /// Pair hopping scale in rad/s.
    pub kappa0: F,
    /// Acquisition delay in seconds.
    pub t_offset: F,
    /// Signal contrast.
    pub scale: F,
    /// Quanta per second.
    pub heating_rate: F,
}

impl<F: Float> FitParams<F> {
    fn validate(&self) -> Result<()> {
        if !(self.kappa0.is_finite() && self.kappa0 > F::zero()) {
            return Err(Error::domain(format!("kappa0 must be positive, got {}", self.kappa0)));
        }
        if !self.t_offset.is_finite() {
            return Err(Error::domain("t_offset must be finite"));
        }
        if !(self.scale.is_finite() && self.scale > F::zero()) {
            return Err(Error::domain(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.heating_rate.is_finite() && self.heating_rate >= F::zero()) {
            return Err(Error::domain(format!(
                "heating_rate must be non-negative, got {}",
                self.heating_rate
            )));
        }
        Ok(())
    }
}

/// Box constraints for the search. Lower scale bound is treated as closed;
/// results landing on any bound are reported in [`FitResult::pinned`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitBounds<F> {
    pub kappa0: (F, F),
    pub t_offset: (F, F),
    pub scale: (F, F),
    pub heating_rate: (F, F),
}

impl<F: Float> Default for FitBounds<F> {
    fn default() -> Self {
        let tau = F::TAU();
        FitBounds {
            kappa0: (tau * F::of(1e3), tau * F::of(1e4)),
            t_offset: (F::zero(), F::of(200e-6)),
            scale: (F::of(0.2), F::of(1.2)),
            heating_rate: (F::zero(), F::of(50.0)),
        }
    }
}

impl<F: Float> FitBounds<F> {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("kappa0", self.kappa0),
            ("t_offset", self.t_offset),
            ("scale", self.scale),
            ("heating_rate", self.heating_rate),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!("{name} bounds must be finite with lo < hi")));
            }
        }
        if self.kappa0.0 <= F::zero() {
            return Err(Error::config("kappa0 lower bound must be positive"));
        }
        if self.scale.0 <= F::zero() {
            return Err(Error::config("scale lower bound must be positive"));
        }
        if self.heating_rate.0 < F::zero() {
            return Err(Error::config("heating_rate lower bound must be non-negative"));
        }
        Ok(())
    }
}

/// Search controls. Defaults: 12.5 Hz grid pitch in `kappa0/2pi`, one
/// acquisition step (12.5 us) in `t_offset`, refinement to 1e-6 relative.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<F> {
    /// Grid pitch for `kappa0`, rad/s.
    pub kappa0_step: F,
    /// Grid pitch for `t_offset`, seconds.
    pub t_offset_step: F,
    /// Relative convergence tolerance of the refinement cycle.
    pub refine_tol: F,
    pub max_refine_cycles: usize,
}

impl<F: Float> Default for FitOptions<F> {
    fn default() -> Self {
        FitOptions {
            kappa0_step: F::TAU() * F::of(12.5),
            t_offset_step: F::of(12.5e-6),
            refine_tol: F::of(1e-6),
            max_refine_cycles: 60,
        }
    }
}

impl<F: Float> FitOptions<F> {
    fn validate(&self) -> Result<()> {
        if !(self.kappa0_step > F::zero() && self.t_offset_step > F::zero()) {
            return Err(Error::config("grid steps must be positive"));
        }
        if !(self.refine_tol > F::zero() && self.refine_tol < F::one()) {
            return Err(Error::config("refine_tol must be in (0, 1)"));
        }
        if self.max_refine_cycles == 0 {
            return Err(Error::config("max_refine_cycles must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<F> {
    pub kappa0: F,
    pub t_offset: F,
    pub scale: F,
    pub heating_rate: F,
    /// Residual sum of squares at the reported parameters.
    pub rss: F,
    /// Best rss seen on the coarse grid, before refinement.
    pub grid_rss: F,
    /// Total model evaluations (grid nodes plus refinement probes).
    pub n_evals: usize,
    /// Whether the refinement cycle stabilized before hitting its cap.
    pub converged: bool,
    /// Names of parameters that finished on a search bound.
    pub pinned: Vec<&'static str>,
}

impl<F: Float> FitResult<F> {
    pub fn params(&self) -> FitParams<F> {
        FitParams {
            kappa0: self.kappa0,
            t_offset: self.t_offset,
            scale: self.scale,
            heating_rate: self.heating_rate,
        }
    }
}

/// Model populations (clamped) at the given parameters.
pub fn model_populations<F: Float>(
    shape: &ChainShape<F>,
    source: usize,
    params: &FitParams<F>,
    times: &[F],
) -> Result<Matrix<F>> {
    params.validate()?;
    if source >= shape.n_sites() {
        return Err(Error::domain(format!(
            "source {source} out of range for {} sites",
            shape.n_sites()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("non-finite time stamp"));
    }
    let base = shape.base(source, params.kappa0, params.t_offset, times);
    let n = shape.n_sites();
    let per_site = F::of_usize(n);
    Ok(Matrix::from_fn(times.len(), n, |k, m| {
        (params.scale * base[(k, m)] + params.heating_rate * times[k] / per_site)
            .max(F::zero())
            .min(F::one())
    }))
}

/// Unweighted least squares for the linear pair `(scale, heating_rate)` at
/// fixed `(kappa0, t_offset)`, ignoring clamping and bounds. The returned
/// pair satisfies the normal equations of `y ~ scale * P + heating * t / N`.
pub fn scale_heating_lsq<F: Float>(
    shape: &ChainShape<F>,
    source: usize,
    times: &[F],
    y: &Matrix<F>,
    kappa0: F,
    t_offset: F,
) -> Result<(F, F)> {
    if y.rows() != times.len() || y.cols() != shape.n_sites() {
        return Err(Error::domain("data shape does not match times and chain size"));
    }
    if source >= shape.n_sites() {
        return Err(Error::domain("source out of range"));
    }
    let base = shape.base(source, kappa0, t_offset, times);
    Ok(lsq_pair(&base, y, times))
}

fn lsq_pair<F: Float>(base: &Matrix<F>, y: &Matrix<F>, times: &[F]) -> (F, F) {
    let n = base.cols();
    let per_site = F::of_usize(n);
    let mut bb = F::zero();
    let mut bg = F::zero();
    let mut gg = F::zero();
    let mut by = F::zero();
    let mut gy = F::zero();
    for (k, &t) in times.iter().enumerate() {
        let g = t / per_site;
        for m in 0..n {
            let b = base[(k, m)];
            let obs = y[(k, m)];
            bb += b * b;
            bg += b * g;
            gg += g * g;
            by += b * obs;
            gy += g * obs;
        }
    }
    let det = bb * gg - bg * bg;
    let tiny = F::epsilon() * (bb * gg).abs().max(F::one());
    if det.abs() <= tiny {
        // Flat or timeless data: heating is unidentifiable, keep it at zero.
        let s = if bb > F::zero() { by / bb } else { F::one() };
        return (s, F::zero());
    }
    ((by * gg - gy * bg) / det, (bb * gy - bg * by) / det)
}

struct Problem<'a, F> {
    shape: &'a ChainShape<F>,
    source: usize,
    times: &'a [F],
    y: &'a Matrix<F>,
    bounds: &'a FitBounds<F>,
}

impl<F: Float> Problem<'_, F> {
    fn rss_of_base(&self, base: &Matrix<F>, scale: F, heating: F) -> F {
        let n = base.cols();
        let per_site = F::of_usize(n);
        let mut rss = F::zero();
        for (k, &t) in self.times.iter().enumerate() {
            let background = heating * t / per_site;
            for m in 0..n {
                let q = (scale * base[(k, m)] + background).max(F::zero()).min(F::one());
                let r = self.y[(k, m)] - q;
                rss += r * r;
            }
        }
        rss
    }

    fn rss_at(&self, p: &FitParams<F>) -> F {
        let base = self.shape.base(self.source, p.kappa0, p.t_offset, self.times);
        self.rss_of_base(&base, p.scale, p.heating_rate)
    }

    /// Closed-form inner solve, clamped into bounds, and the resulting rss.
    fn solve_node(&self, kappa0: F, t_offset: F) -> (F, F, F) {
        let base = self.shape.base(self.source, kappa0, t_offset, self.times);
        let (s, h) = lsq_pair(&base, self.y, self.times);
        let s = s.max(self.bounds.scale.0).min(self.bounds.scale.1);
        let h = h.max(self.bounds.heating_rate.0).min(self.bounds.heating_rate.1);
        (self.rss_of_base(&base, s, h), s, h)
    }
}

fn grid_points<F: Float>(lo: F, hi: F, step: F) -> Vec<F> {
    let count = ((hi - lo) / step + F::of(1e-6)).floor().as_f64() as usize + 1;
    (0..count).map(|i| (lo + F::of_usize(i) * step).min(hi)).collect()
}

/// Golden-section minimization on `[a, b]`; returns the best probed point.
fn golden_min<F: Float>(f: &mut impl FnMut(F) -> F, a: F, b: F, tol: F) -> (F, F) {
    let inv_phi = (F::of(5.0).sqrt() - F::one()) * F::of(0.5);
    let (mut a, mut b) = (a, b);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 { (x1, f1) } else { (x2, f2) }
}

/// Fits the four-parameter model to expected or observed rates `y` (one row
/// per time, one column per site).
pub fn fit_populations<F: Float>(
    times: &[F],
    y: &Matrix<F>,
    source: usize,
    bounds: &FitBounds<F>,
    options: &FitOptions<F>,
) -> Result<FitResult<F>> {
    bounds.validate()?;
    options.validate()?;
    if y.rows() != times.len() {
        return Err(Error::domain(format!(
            "{} data rows for {} time stamps",
            y.rows(),
            times.len()
        )));
    }
    if times.is_empty() || y.cols() == 0 {
        return Err(Error::DegenerateData("empty dataset".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("non-finite time stamp"));
    }
    let shape = ChainShape::for_n_ions(y.cols())?;
    if source >= shape.n_sites() {
        return Err(Error::domain("source out of range"));
    }
    let problem = Problem { shape: &shape, source, times, y, bounds };

    let k_grid = grid_points(bounds.kappa0.0, bounds.kappa0.1, options.kappa0_step);
    let t_grid = grid_points(bounds.t_offset.0, bounds.t_offset.1, options.t_offset_step);

    // Parallel over kappa0 slices; each slice scans offsets serially and the
    // final reduction is a serial argmin, so thread scheduling cannot change
    // the winner. Ties keep the lexicographically first (i, j) node.
    let slices: Vec<(F, usize, F, F, F)> = k_grid
        .par_iter()
        .map(|&k| {
            let mut best: Option<(F, usize, F, F)> = None;
            let mut worst = F::neg_infinity();
            for (j, &to) in t_grid.iter().enumerate() {
                let (r, s, h) = problem.solve_node(k, to);
                worst = worst.max(r);
                if best.as_ref().is_none_or(|b| r < b.0) {
                    best = Some((r, j, s, h));
                }
            }
            let (r, j, s, h) = best.unwrap();
            (r, j, s, h, worst)
        })
        .collect();

    let mut grid_best: Option<(F, usize, usize, F, F)> = None;
    let mut grid_worst = F::neg_infinity();
    for (i, &(r, j, s, h, worst)) in slices.iter().enumerate() {
        grid_worst = grid_worst.max(worst);
        if grid_best.as_ref().is_none_or(|b| r < b.0) {
            grid_best = Some((r, i, j, s, h));
        }
    }
    let (grid_rss, ki, tj, s0, h0) = grid_best.unwrap();
    let spread_tol = F::of(1e-12).max(F::epsilon() * F::of(100.0) * grid_worst.abs());
    if grid_worst - grid_rss < spread_tol {
        return Err(Error::DegenerateData(format!(
            "rss landscape is flat (spread {:.3e} over the search grid); \
             the data do not constrain the walk parameters",
            (grid_worst - grid_rss).as_f64()
        )));
    }
    let mut n_evals = k_grid.len() * t_grid.len();

    let mut current = FitParams {
        kappa0: k_grid[ki],
        t_offset: t_grid[tj],
        scale: s0,
        heating_rate: h0,
    };
    let mut best = (grid_rss, current);

    let tol = options.refine_tol;
    let mut converged = false;
    for _cycle in 0..options.max_refine_cycles {
        let previous = current;
        {
            let lo = (current.kappa0 - options.kappa0_step).max(bounds.kappa0.0);
            let hi = (current.kappa0 + options.kappa0_step).min(bounds.kappa0.1);
            let gtol = current.kappa0 * tol * F::of(0.1);
            let (x, _) = golden_min(
                &mut |x| {
                    n_evals += 1;
                    let cand = FitParams { kappa0: x, ..current };
                    let r = problem.rss_at(&cand);
                    if r < best.0 {
                        best = (r, cand);
                    }
                    r
                },
                lo,
                hi,
                gtol,
            );
            current.kappa0 = x;
        }
        {
            let lo = (current.t_offset - options.t_offset_step).max(bounds.t_offset.0);
            let hi = (current.t_offset + options.t_offset_step).min(bounds.t_offset.1);
            let gtol = current.t_offset.abs().max(F::of(1e-6)) * tol;
            let (x, _) = golden_min(
                &mut |x| {
                    n_evals += 1;
                    let cand = FitParams { t_offset: x, ..current };
                    let r = problem.rss_at(&cand);
                    if r < best.0 {
                        best = (r, cand);
                    }
                    r
                },
                lo,
                hi,
                gtol,
            );
            current.t_offset = x;
        }
        {
            let (x, _) = golden_min(
                &mut |x| {
                    n_evals += 1;
                    let cand = FitParams { scale: x, ..current };
                    let r = problem.rss_at(&cand);
                    if r < best.0 {
                        best = (r, cand);
                    }
                    r
                },
                bounds.scale.0,
                bounds.scale.1,
                tol * F::of(0.1),
            );
            current.scale = x;
        }
        {
            let (x, _) = golden_min(
                &mut |x| {
                    n_evals += 1;
                    let cand = FitParams { heating_rate: x, ..current };
                    let r = problem.rss_at(&cand);
                    if r < best.0 {
                        best = (r, cand);
                    }
                    r
                },
                bounds.heating_rate.0,
                bounds.heating_rate.1,
                tol * F::of(10.0),
            );
            current.heating_rate = x;
        }
        let small = |d: F, scale_ref: F| d.abs() <= tol * scale_ref.abs().max(F::of(1e-9));
        if small(current.kappa0 - previous.kappa0, previous.kappa0)
            && small(current.t_offset - previous.t_offset, previous.t_offset)
            && (current.scale - previous.scale).abs() <= tol
            && (current.heating_rate - previous.heating_rate).abs() <= tol * F::of(10.0)
        {
            converged = true;
            break;
        }
    }

    let (rss, p) = best;
    let mut pinned = Vec::new();
    let near = |v: F, bound: F, span: F| (v - bound).abs() <= span * F::of(1e-6);
    let spans = (
        bounds.kappa0.1 - bounds.kappa0.0,
        bounds.t_offset.1 - bounds.t_offset.0,
        bounds.scale.1 - bounds.scale.0,
        bounds.heating_rate.1 - bounds.heating_rate.0,
    );
    if near(p.kappa0, bounds.kappa0.0, spans.0) || near(p.kappa0, bounds.kappa0.1, spans.0) {
        pinned.push("kappa0");
    }
    if near(p.t_offset, bounds.t_offset.0, spans.1) || near(p.t_offset, bounds.t_offset.1, spans.1) {
        pinned.push("t_offset");
    }
    if near(p.scale, bounds.scale.0, spans.2) || near(p.scale, bounds.scale.1, spans.2) {
        pinned.push("scale");
    }
    if near(p.heating_rate, bounds.heating_rate.0, spans.3)
        || near(p.heating_rate, bounds.heating_rate.1, spans.3)
    {
        pinned.push("heating_rate");
    }

    Ok(FitResult {
        kappa0: p.kappa0,
        t_offset: p.t_offset,
        scale: p.scale,
        heating_rate: p.heating_rate,
        rss,
        grid_rss,
        n_evals,
        converged,
        pinned,
    })
}

/// Fits observed rates `count / shots` from a dataset.
pub fn fit_observation<F: Float>(
    dataset: &ObservationDataset<F>,
    bounds: &FitBounds<F>,
    options: &FitOptions<F>,
) -> Result<FitResult<F>> {
    let y = Matrix::from_fn(dataset.n_steps(), dataset.n_sites(), |k, m| dataset.rate(k, m));
    fit_populations(dataset.times(), &y, dataset.source(), bounds, options)
}

/// Residual sum of squares of a dataset against explicit parameters.
pub fn residual_sum_squares<F: Float>(
    dataset: &ObservationDataset<F>,
    shape: &ChainShape<F>,
    params: &FitParams<F>,
) -> Result<F> {
    params.validate()?;
    if shape.n_sites() != dataset.n_sites() {
        return Err(Error::domain(format!(
            "chain shape has {} sites but dataset has {}",
            shape.n_sites(),
            dataset.n_sites()
        )));
    }
    let y = Matrix::from_fn(dataset.n_steps(), dataset.n_sites(), |k, m| dataset.rate(k, m));
    let problem = Problem {
        shape,
        source: dataset.source(),
        times: dataset.times(),
        y: &y,
        bounds: &FitBounds::default(),
    };
    Ok(problem.rss_at(params))
}
