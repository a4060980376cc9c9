//! Phonon hopping between ions.
//!
//! Coulomb coupling of the radial motion exchanges local-phonon quanta
//! between sites `n` and `m` with amplitude
//!
//! ```text
//! t_nm = - e^2 / (8 pi eps0 M omega_y |z_n - z_m|^3)
//! ```
//!
//! The pair scale `kappa0 = e^2 / (4 pi eps0 M omega_y d0^3)` (so
//! `|t| = kappa0 / 2` for the central pair at distance `d0`) makes the
//! single-particle Hamiltonian separable into `kappa0/2` times a matrix that
//! depends only on the ion count.

use std::collections::BTreeMap;

use crate::constants::COULOMB_E2;
use crate::crystal::{IonChain, TrapConfig};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

/// Single-phonon hopping Hamiltonian in rad/s, with the pair scale it was
/// built from. Row sums vanish: the diagonal collects `sum_m t_nm`, which is
/// minus the (positive) off-diagonal entries `h_nm = -t_nm`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoppingMatrix<F> {
    h: Matrix<F>,
    kappa0: F,
}

impl<F: Float> HoppingMatrix<F> {
    /// Wraps an externally assembled Hamiltonian. `h` must be square and
    /// symmetric; `kappa0` must be finite and non-negative.
    pub fn from_parts(h: Matrix<F>, kappa0: F) -> Result<Self> {
        if h.rows() != h.cols() || h.rows() == 0 {
            return Err(Error::domain("hopping matrix must be square and non-empty"));
        }
        let tol = F::epsilon() * F::of(100.0) * h.max_abs().max(F::one());
        if !h.is_symmetric(tol) {
            return Err(Error::domain("hopping matrix must be symmetric"));
        }
        if !(kappa0.is_finite() && kappa0 >= F::zero()) {
            return Err(Error::domain(format!("kappa0 must be finite and non-negative, got {kappa0}")));
        }
        Ok(HoppingMatrix { h, kappa0 })
    }

    pub fn n_ions(&self) -> usize {
        self.h.rows()
    }

    /// Hamiltonian entries in rad/s.
    pub fn matrix(&self) -> &Matrix<F> {
        &self.h
    }

    /// Pair scale in rad/s. Zero for a single-ion chain, which has no pairs.
    pub fn kappa0(&self) -> F {
        self.kappa0
    }

    /// Hamiltonian in units of `kappa0/2`. The result depends only on N.
    pub fn normalized(&self) -> Result<Matrix<F>> {
        if self.n_ions() < 2 {
            return Err(Error::domain("normalized form needs at least two ions"));
        }
        let half_kappa = self.kappa0 * F::of(0.5);
        Ok(Matrix::from_fn(self.n_ions(), self.n_ions(), |i, j| self.h[(i, j)] / half_kappa))
    }
}

/// Generator of the continuous-time walk, `M = -h`, with the edge rates
/// `gamma_nm = h_nm` spelled out per unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkGenerator<F> {
    pub m: Matrix<F>,
    pub gamma: BTreeMap<(usize, usize), F>,
}

fn check_pair<F: Float>(chain: &IonChain<F>, config: &TrapConfig<F>, n: usize, m: usize) -> Result<()> {
    if chain.n_ions() != config.n_ions {
        return Err(Error::domain(format!(
            "chain has {} ions but config declares {}",
            chain.n_ions(),
            config.n_ions
        )));
    }
    if n >= chain.n_ions() || m >= chain.n_ions() {
        return Err(Error::domain(format!(
            "ion index out of range: ({n}, {m}) for {} ions",
            chain.n_ions()
        )));
    }
    if n == m {
        return Err(Error::domain("hopping amplitude needs two distinct ions"));
    }
    Ok(())
}

/// Hopping amplitude `t_nm` in rad/s. Always negative.
pub fn hopping_amplitude<F: Float>(
    chain: &IonChain<F>,
    config: &TrapConfig<F>,
    n: usize,
    m: usize,
) -> Result<F> {
    check_pair(chain, config, n, m)?;
    let d = (chain.z0()[n] - chain.z0()[m]).abs();
    Ok(-F::of(0.5 * COULOMB_E2) / (config.mass * config.omega_y * d * d * d))
}

/// Pair scale `kappa0` in rad/s, set by the central gap.
pub fn kappa0<F: Float>(chain: &IonChain<F>, config: &TrapConfig<F>) -> Result<F> {
    if chain.n_ions() != config.n_ions {
        return Err(Error::domain(format!(
            "chain has {} ions but config declares {}",
            chain.n_ions(),
            config.n_ions
        )));
    }
    let d0 = chain.central_gap()?;
    Ok(F::of(COULOMB_E2) / (config.mass * config.omega_y * d0 * d0 * d0))
}

/// Hamiltonian in units of `kappa0/2`, from geometry alone: off-diagonals are
/// `(d0/d_nm)^3`, diagonals minus the row's off-diagonal sum. Invariant under
/// rescaling the chain, so it depends only on the ion count.
pub fn normalized_hopping_matrix<F: Float>(chain: &IonChain<F>) -> Result<Matrix<F>> {
    let n = chain.n_ions();
    let d0 = chain.central_gap()?;
    let z = chain.z0();
    let mut h = Matrix::zeros(n, n);
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (z[i] - z[j]).abs();
            let r = d0 / d;
            let v = r * r * r;
            h[(i, j)] = v;
            row.push(v);
        }
        // Summing in sorted order makes mirror-image rows round identically,
        // so a symmetric chain yields an exactly persymmetric matrix.
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        h[(i, i)] = -row.iter().copied().sum::<F>();
    }
    Ok(h)
}

/// Full hopping Hamiltonian for a chain in a trap. A single ion yields the
/// zero 1x1 matrix with `kappa0 = 0`.
pub fn hopping_matrix<F: Float>(chain: &IonChain<F>, config: &TrapConfig<F>) -> Result<HoppingMatrix<F>> {
    if chain.n_ions() != config.n_ions {
        return Err(Error::domain(format!(
            "chain has {} ions but config declares {}",
            chain.n_ions(),
            config.n_ions
        )));
    }
    if chain.n_ions() == 1 {
        return Ok(HoppingMatrix { h: Matrix::zeros(1, 1), kappa0: F::zero() });
    }
    let k0 = kappa0(chain, config)?;
    let half = k0 * F::of(0.5);
    let normalized = normalized_hopping_matrix(chain)?;
    let n = chain.n_ions();
    let h = Matrix::from_fn(n, n, |i, j| normalized[(i, j)] * half);
    Ok(HoppingMatrix { h, kappa0: k0 })
}

/// Builds the walk generator `M = -h` with its edge-rate map.
pub fn to_walk_generator<F: Float>(hopping: &HoppingMatrix<F>) -> WalkGenerator<F> {
    let n = hopping.n_ions();
    let m = Matrix::from_fn(n, n, |i, j| -hopping.h[(i, j)]);
    let mut gamma = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            gamma.insert((i, j), hopping.h[(i, j)]);
        }
    }
    WalkGenerator { m, gamma }
}

/// Time for one phonon to fully transfer across the slowest adjacent link,
/// `pi / (2 min_n |h_{n,n+1}|)`. For two ions this is `pi / kappa0`.
pub fn max_adjacent_hopping_time<F: Float>(hopping: &HoppingMatrix<F>) -> Result<F> {
    let n = hopping.n_ions();
    if n < 2 {
        return Err(Error::domain("hopping time needs at least two ions"));
    }
    let mut min_rate = F::infinity();
    for i in 0..n - 1 {
        min_rate = min_rate.min(hopping.h[(i, i + 1)].abs());
    }
    if !(min_rate > F::zero()) {
        return Err(Error::domain("adjacent hopping rate vanished"));
    }
    Ok(F::PI() / (F::of(2.0) * min_rate))
}
