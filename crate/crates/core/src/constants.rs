//! Physical constants, fixed to six significant digits so results are
//! reproducible bit-for-bit across builds.

/// Coulomb pair coefficient e^2 / (4 pi eps0), in J * m.
pub const COULOMB_E2: f64 = 2.30708e-28;

/// Atomic mass unit, in kg.
pub const AMU_KG: f64 = 1.66054e-27;
