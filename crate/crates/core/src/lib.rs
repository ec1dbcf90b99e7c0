//! Auxiliary Hilbert space tomography of photonic orbital-angular-momentum
//! states, end to end in simulation: forward synthesis of waist-plane
//! intensity images from density matrices, reconstruction of density matrices
//! from (possibly noisy) images via analytic Laguerre–Gaussian Fourier
//! kernels, physicalization by Cholesky-parametrized least squares, fidelity
//! scoring, and Fock-basis Wigner functions.
//!
//! The numerical core is generic over the scalar type via [`float::Real`]
//! (`f32` or `f64`); the concrete `f64` aliases below are what the CLI and
//! most callers use.

pub mod error;
pub mod float;
pub mod imaging;
pub mod linalg;
pub mod modes;
pub mod optim;
pub mod pipeline;
pub mod quadrature;
pub mod recon;
pub mod rng;
pub mod specfun;
pub mod states;
pub mod wigner;

pub use error::{Error, Result};
pub use float::Real;

/// Complex scalar over f64.
pub type C64 = num_complex::Complex<f64>;

/// f64 instantiations of the core types.
pub type BeamGeometry64 = modes::BeamGeometry<f64>;
pub type KernelTable64 = modes::KernelTable<f64>;
pub type PureState64 = states::PureState<f64>;
pub type DensityMatrix64 = states::DensityMatrix<f64>;
pub type IntensityImage64 = imaging::IntensityImage<f64>;
pub type NoiseModel64 = imaging::NoiseModel<f64>;
pub type FourierImage64 = recon::FourierImage<f64>;
pub type WignerGrid64 = wigner::WignerGrid<f64>;
