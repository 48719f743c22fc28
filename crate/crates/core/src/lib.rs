//! Multi-level quasi-Monte Carlo finite element estimation of expected
//! linear functionals of elliptic PDE solutions with affine-parametric
//! diffusion coefficients.
//!
//! The numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod mlqmc;
pub mod oracle;
pub mod qmc;
pub mod quadrature;
pub mod real;
pub mod special;
pub mod wavelet;

pub use error::{Error, Result};
pub use fem::{AssemblyMode, AssemblyStats, FeMesh, FeSolution, FemConfig, L2Function, LevelSystem};
pub use field::{
    CoefficientField, DecaySequences, FluctuationBasis, IndicatorFamily, MeanField, SequenceParams, SineFamily,
};
pub use geometry::{Cell, Domain};
pub use real::Real;
pub use wavelet::{haar_basis, haar_basis_2d, HaarScaling, WaveletBasis};

pub type CoefficientField64 = CoefficientField<f64>;
pub type FeMesh64 = FeMesh<f64>;
pub type LevelSystem64 = LevelSystem<f64>;
pub type WaveletBasis64 = WaveletBasis<f64>;
pub type SineFamily64 = SineFamily<f64>;
