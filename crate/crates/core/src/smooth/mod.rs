//! Heat kernel regression, iterated kernel smoothing and explicit diffusion.

mod diffusion;
mod iterated;
mod regression;

pub use diffusion::{diffusion_smooth, DiffusionOptions, DiffusionSmoother, DIVERGENCE_GROWTH};
pub use iterated::{iterated_kernel_smooth, ring_weights};
pub use regression::{
    fit_coefficients, fit_coefficients_mass, fit_with, heat_kernel_column, heat_kernel_eval,
    heat_kernel_smooth, reconstruct, spectral_energy, wavelet_transform, CoefficientVector,
    FitMethod, LeastSquaresFitter,
};
