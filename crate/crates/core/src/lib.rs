//! Continuous-time quantum walks of a single radial local phonon in a linear
//! trapped-ion crystal.
//!
//! The pipeline runs in layers: solve the chain geometry ([`crystal`]), build
//! the distance-cubed hopping Hamiltonian ([`coupling`]), propagate the walk
//! and synthesize shot-noise measurements ([`dynamics`]), analyze interference
//! spectra ([`spectral`]), and recover model parameters from count data
//! ([`fitting`]).
//!
//! Everything is generic over the scalar type through [`Float`] (implemented
//! for `f32` and `f64`); the aliases below pin the default `f64` precision.

pub mod constants;
pub mod coupling;
pub mod crystal;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod float;
pub mod linalg;
pub mod spectral;

pub use error::{Error, Result};
pub use float::Float;

pub type Matrix = linalg::Matrix<f64>;
pub type TrapConfig = crystal::TrapConfig<f64>;
pub type IonChain = crystal::IonChain<f64>;
pub type HoppingMatrix = coupling::HoppingMatrix<f64>;
pub type WalkGenerator = coupling::WalkGenerator<f64>;
pub type ModeBasis = dynamics::ModeBasis<f64>;
pub type PropagationTrace = dynamics::PropagationTrace<f64>;
pub type MeasurementModel = dynamics::MeasurementModel<f64>;
pub type ObservationDataset = dynamics::ObservationDataset<f64>;
pub type AnalyticSpectrum = spectral::AnalyticSpectrum<f64>;
pub type SpectrumLine = spectral::SpectrumLine<f64>;
pub type DftSpectrum = spectral::DftSpectrum<f64>;
pub type MatchReport = spectral::MatchReport<f64>;
pub type ChainShape = fitting::ChainShape<f64>;
pub type FitParams = fitting::FitParams<f64>;
pub type FitBounds = fitting::FitBounds<f64>;
pub type FitOptions = fitting::FitOptions<f64>;
pub type FitResult = fitting::FitResult<f64>;
