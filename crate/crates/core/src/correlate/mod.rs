//! Time-tag correlation and the pulsed peak-area estimators.

mod histogram;
mod peaks;
mod trace;

pub use histogram::{cross_correlate, cross_correlate_channels, CorrelationHistogram};
pub use peaks::{
    estimate_background, hom_visibility, integrate_peaks, postselected_g2, Estimate, PeakAnalysis,
    PeakArea, PeakComb, PeakSelection,
};
pub use trace::{estimate_delay, timetrace, DecayTrace, DEFAULT_TRACE_BIN_PS};
