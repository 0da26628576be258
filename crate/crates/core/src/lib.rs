//! Shortest-path diffusion on Gaussian image models.
//!
//! Geodesics between zero-mean Gaussians under the Fisher metric, the
//! frequency-space corruption filter they induce for translation-invariant
//! data, power-spectrum fitting, and the forward and reverse diffusion
//! processes. Every numeric type is generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix it to one of the two.

pub mod corruption;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod spectrum;
pub mod tensor;
pub mod verify;

pub use corruption::{
    build_schedule, calibrate_c1_for_m, corrupt, corrupt_frequency, phi_pixel, retention, FilterFile, FilterSchedule,
};
pub use diffusion::{
    reverse_step, sample, simple_loss, train_step, Denoiser, GaussianOracle, LinearDenoiser, SigmaSchedule,
    SigmaVariant, TrainState,
};
pub use error::{Error, Result};
pub use linalg::{
    eigh, geodesic_ode_residual, geodesic_point, matrix_power, path_length, EigenDecomposition, GeodesicPath, Matrix,
    SpdMatrix,
};
pub use scalar::Real;
pub use spectrum::{compute_power_spectrum, fit_spectrum, frequency_grid, model_power, PowerSpectrum, SpectrumFit};
pub use tensor::{dft2, idft2, FreqTensor, ImageTensor};
pub use verify::{check_forward_covariance, check_frequency_ordering, compare_path_lengths, McReport};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type SpdMatrixF64 = SpdMatrix<f64>;
pub type SpdMatrixF32 = SpdMatrix<f32>;
pub type GeodesicPathF64 = GeodesicPath<f64>;
pub type GeodesicPathF32 = GeodesicPath<f32>;
pub type ImageTensorF64 = ImageTensor<f64>;
pub type ImageTensorF32 = ImageTensor<f32>;
pub type FreqTensorF64 = FreqTensor<f64>;
pub type FreqTensorF32 = FreqTensor<f32>;
pub type PowerSpectrumF64 = PowerSpectrum<f64>;
pub type PowerSpectrumF32 = PowerSpectrum<f32>;
pub type SpectrumFitF64 = SpectrumFit<f64>;
pub type SpectrumFitF32 = SpectrumFit<f32>;
pub type FilterScheduleF64 = FilterSchedule<f64>;
pub type FilterScheduleF32 = FilterSchedule<f32>;
pub type LinearDenoiserF64 = LinearDenoiser<f64>;
pub type LinearDenoiserF32 = LinearDenoiser<f32>;
