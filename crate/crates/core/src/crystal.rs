//! Equilibrium geometry of a cold ion chain in a linear trap.
//!
//! Axial positions are found in dimensionless units `u = z / ell`, where the
//! length scale `ell = (e^2 / (4 pi eps0 M omega_z^2))^(1/3)` absorbs mass and
//! axial confinement. The dimensionless potential
//!
//! ```text
//! V(u) = sum_n u_n^2 / 2  +  sum_{m>n} 1 / |u_n - u_m|
//! ```
//!
//! depends only on the ion count, so the normalized geometry is solved once
//! per N and rescaled.

use crate::constants::COULOMB_E2;
use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::{self, norm2, Matrix};

const MAX_NEWTON_ITERATIONS: usize = 10_000;

/// Trap parameters. Angular frequencies in rad/s, mass in kg.
///
/// `omega_x` is carried along for completeness; the radial walk direction is
/// `y` and the chain axis is `z`, so only those two enter the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapConfig<F> {
    pub n_ions: usize,
    pub mass: F,
    pub omega_x: F,
    pub omega_y: F,
    pub omega_z: F,
}

impl<F: Float> TrapConfig<F> {
    pub fn new(n_ions: usize, mass: F, omega_x: F, omega_y: F, omega_z: F) -> Result<Self> {
        if n_ions == 0 {
            return Err(Error::config("n_ions must be at least 1"));
        }
        for (name, v) in [("mass", mass), ("omega_x", omega_x), ("omega_y", omega_y), ("omega_z", omega_z)] {
            if !(v.is_finite() && v > F::zero()) {
                return Err(Error::config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if omega_z >= omega_y {
            return Err(Error::config(format!(
                "axial confinement must be weaker than radial (omega_z = {omega_z} >= omega_y = {omega_y}); \
                 the chain would not stay linear"
            )));
        }
        Ok(TrapConfig { n_ions, mass, omega_x, omega_y, omega_z })
    }

    /// Convenience constructor from lab-sheet units: mass in amu, trap
    /// frequencies in MHz (ordinary frequencies, not angular).
    pub fn from_lab_units(n_ions: usize, mass_amu: F, f_x_mhz: F, f_y_mhz: F, f_z_mhz: F) -> Result<Self> {
        let two_pi_mhz = F::of(2.0 * std::f64::consts::PI * 1e6);
        Self::new(
            n_ions,
            mass_amu * F::of(crate::constants::AMU_KG),
            f_x_mhz * two_pi_mhz,
            f_y_mhz * two_pi_mhz,
            f_z_mhz * two_pi_mhz,
        )
    }

    /// Characteristic length `ell` of the axial Coulomb problem, in meters.
    pub fn length_scale(&self) -> F {
        (F::of(COULOMB_E2) / (self.mass * self.omega_z * self.omega_z)).cbrt()
    }
}

/// Solved chain geometry: dimensionless coordinates and their metric image.
#[derive(Debug, Clone, PartialEq)]
pub struct IonChain<F> {
    length_scale: F,
    u: Vec<F>,
    z0: Vec<F>,
}

impl<F: Float> IonChain<F> {
    /// Builds a chain from given dimensionless coordinates. Coordinates must
    /// be finite and strictly ascending; equilibrium is not enforced here, so
    /// synthetic geometries (e.g. an isolated pair at a chosen distance) are
    /// allowed. Chains from [`equilibrium_positions`] additionally satisfy the
    /// mirror-symmetry and zero-gradient contracts.
    pub fn new(length_scale: F, u: Vec<F>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::domain("chain needs at least one ion"));
        }
        if !(length_scale.is_finite() && length_scale > F::zero()) {
            return Err(Error::domain(format!("length scale must be positive, got {length_scale}")));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite ion coordinate"));
        }
        if let Some(i) = (1..u.len()).find(|&i| u[i] <= u[i - 1]) {
            if u[i] == u[i - 1] {
                return Err(Error::CoincidentPositions(i - 1, i));
            }
            return Err(Error::domain(format!("coordinates must be strictly ascending at index {i}")));
        }
        let z0 = u.iter().map(|&ui| length_scale * ui).collect();
        Ok(IonChain { length_scale, u, z0 })
    }

    pub fn n_ions(&self) -> usize {
        self.u.len()
    }

    pub fn length_scale(&self) -> F {
        self.length_scale
    }

    /// Dimensionless coordinates, ascending.
    pub fn u(&self) -> &[F] {
        &self.u
    }

    /// Equilibrium positions in meters, ascending.
    pub fn z0(&self) -> &[F] {
        &self.z0
    }

    /// Distances between neighboring ions, in meters. Empty for a single ion.
    pub fn adjacent_gaps(&self) -> Vec<F> {
        self.z0.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Gap at the chain center (between ions `(n-1)/2` and `(n-1)/2 + 1`,
    /// zero-based). This is the minimum gap and sets the fastest hopping rate.
    pub fn central_gap(&self) -> Result<F> {
        let n = self.n_ions();
        if n < 2 {
            return Err(Error::domain("central gap needs at least two ions"));
        }
        let i = (n - 1) / 2;
        Ok(self.z0[i + 1] - self.z0[i])
    }
}

fn check_distinct<F: Float>(u: &[F]) -> Result<()> {
    if u.is_empty() {
        return Err(Error::domain("chain needs at least one ion"));
    }
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            if u[i] == u[j] {
                return Err(Error::CoincidentPositions(i, j));
            }
        }
    }
    Ok(())
}

/// Dimensionless chain energy. Coordinates need not be ordered, only distinct.
pub fn dimensionless_potential<F: Float>(u: &[F]) -> Result<F> {
    check_distinct(u)?;
    let half = F::of(0.5);
    let mut v = F::zero();
    for (i, &ui) in u.iter().enumerate() {
        v += half * ui * ui;
        for &uj in &u[i + 1..] {
            v += (ui - uj).abs().recip();
        }
    }
    Ok(v)
}

/// Gradient of [`dimensionless_potential`].
pub fn potential_gradient<F: Float>(u: &[F]) -> Result<Vec<F>> {
    check_distinct(u)?;
    let mut g = u.to_vec();
    for i in 0..u.len() {
        for j in 0..u.len() {
            if j == i {
                continue;
            }
            let d = u[i] - u[j];
            g[i] -= d.signum() / (d * d);
        }
    }
    Ok(g)
}

/// Hessian of [`dimensionless_potential`]. Positive definite at equilibrium.
pub fn potential_hessian<F: Float>(u: &[F]) -> Result<Matrix<F>> {
    check_distinct(u)?;
    let n = u.len();
    let two = F::of(2.0);
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = F::one();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (u[i] - u[j]).abs();
            let c = two / (d * d * d);
            h[(i, i)] += c;
            h[(i, j)] = -c;
        }
    }
    Ok(h)
}

fn strictly_ascending<F: Float>(u: &[F]) -> bool {
    u.windows(2).all(|w| w[0] < w[1])
}

/// Equilibrium coordinates in dimensionless units for an `n`-ion chain.
///
/// Damped Newton iteration from an evenly spread seed, then an exact
/// mirror-antisymmetrization (the minimizer satisfies `u_i = -u_{n-1-i}`, so
/// projecting onto that subspace only removes solver roundoff and forces the
/// zero-mean property to hold exactly). Fails with `NoConvergence` if the
/// gradient norm cannot be brought under 1e-10 (scaled up for `f32`).
pub fn dimensionless_equilibrium<F: Float>(n: usize) -> Result<Vec<F>> {
    if n == 0 {
        return Err(Error::domain("chain needs at least one ion"));
    }
    if n == 1 {
        return Ok(vec![F::zero()]);
    }
    // Spread matching the asymptotic chain extent well enough to start Newton
    // in the convergence basin for any practical N.
    let span = F::of(1.1) * F::of_usize(n).powf(F::of(0.56));
    let mut u: Vec<F> = (0..n)
        .map(|i| span * (F::of_usize(i) / F::of_usize(n - 1) - F::of(0.5)))
        .collect();

    let target = F::of(1e-12).max(F::epsilon() * F::of(100.0));
    let alpha_floor = F::of(1e-10).max(F::epsilon() * F::of(16.0));
    let mut iterations = 0;
    loop {
        let g = potential_gradient(&u)?;
        let residual = norm2(&g);
        if residual <= target || iterations >= MAX_NEWTON_ITERATIONS {
            break;
        }
        iterations += 1;
        let h = potential_hessian(&u)?;
        // The Hessian is positive definite everywhere on the ordered domain,
        // but fall back to steepest descent if elimination still degenerates.
        let step = linalg::solve(&h, &g).unwrap_or_else(|| g.clone());
        let v0 = dimensionless_potential(&u)?;
        let slack = F::of(1e-12) * v0.abs().max(F::one());
        let mut alpha = F::one();
        let mut accepted = false;
        while alpha >= alpha_floor {
            let trial: Vec<F> = u.iter().zip(&step).map(|(&ui, &si)| ui - alpha * si).collect();
            if strictly_ascending(&trial) {
                // Near the minimum the energy decrease drowns in rounding, so a
                // shrinking gradient is also accepted.
                let vt = dimensionless_potential(&trial)?;
                if vt <= v0 + slack || norm2(&potential_gradient(&trial)?) < residual {
                    u = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= F::of(0.5);
        }
        if !accepted {
            break;
        }
    }

    let half = F::of(0.5);
    let sym: Vec<F> = (0..n).map(|i| (u[i] - u[n - 1 - i]) * half).collect();
    let residual = norm2(&potential_gradient(&sym)?);
    let contract = F::of(1e-10).max(F::epsilon() * F::of(1e4));
    if !strictly_ascending(&sym) || residual > contract {
        return Err(Error::NoConvergence { iterations, residual: residual.as_f64() });
    }
    Ok(sym)
}

/// Solves the chain geometry for a trap configuration.
pub fn equilibrium_positions<F: Float>(config: &TrapConfig<F>) -> Result<IonChain<F>> {
    let u = dimensionless_equilibrium(config.n_ions)?;
    IonChain::new(config.length_scale(), u)
}
