//! Nonlinear least squares and the decay, antibunching and line-shape models.

mod convolve;
mod models;
mod solver;

pub use convolve::convolve_gaussian;
pub use models::{
    biexp_model, deconvolve_lorentzian, fit_biexp_irf, fit_g2cw, fit_lorentzian, g2cw_model,
    lorentzian, BiexpOptions, UniformSeries, BIEXP_NAMES, G2CW_NAMES, LORENTZIAN_NAMES,
};
pub use solver::{nlls_solve, Bounds, FitResult, FitStatus, Problem, COST_RTOL, MAX_ITERATIONS};
