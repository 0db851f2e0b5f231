//! End-to-end measurement chains: simulate, correlate and integrate peaks for
//! the two-photon interference and the autocorrelation configurations.

use serde::{Deserialize, Serialize};

use crate::correlate::{
    cross_correlate_channels, estimate_background, hom_visibility, integrate_peaks,
    postselected_g2, CorrelationHistogram, Estimate, PeakAnalysis, PeakComb, PeakSelection,
};
use crate::error::{Error, Result};
use crate::interfere::{postselected_visibility, predicted_central_ratio, visibility_closed_form};
use crate::simulate::{simulate, ActiveSources, DetectionCounters, Scenario};
use crate::tags::TimeTagStream;

fn default_bin() -> u64 {
    10
}
fn default_window() -> u64 {
    80_000
}
fn default_delta_t() -> f64 {
    3_000.0
}
fn default_n_side() -> usize {
    6
}
fn default_display() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_postselect() -> f64 {
    40.0
}

/// Histogram and peak-integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_bin")]
    pub bin_width_ps: u64,
    /// Half-range of the correlation histogram.
    #[serde(default = "default_window")]
    pub window_ps: u64,
    /// Full integration window Δt around each peak.
    #[serde(default = "default_delta_t")]
    pub delta_t_ps: f64,
    /// Side peaks entering the normalization, split evenly between both sides.
    #[serde(default = "default_n_side")]
    pub n_side: usize,
    /// Peaks tabulated per side.
    #[serde(default = "default_display")]
    pub display_per_side: usize,
    #[serde(default = "default_true")]
    pub background_correction: bool,
    /// Full width of the zero-delay window for the post-selected g².
    #[serde(default = "default_postselect")]
    pub postselect_width_ps: f64,
    /// Shift of the peak comb, for a global delay between the channels.
    #[serde(default)]
    pub offset_ps: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            bin_width_ps: default_bin(),
            window_ps: default_window(),
            delta_t_ps: default_delta_t(),
            n_side: default_n_side(),
            display_per_side: default_display(),
            background_correction: true,
            postselect_width_ps: default_postselect(),
            offset_ps: 0.0,
        }
    }
}

impl AnalysisSettings {
    fn comb(&self, period_ps: f64) -> PeakComb {
        PeakComb {
            period_ps,
            offset_ps: self.offset_ps,
            delta_t_ps: self.delta_t_ps,
        }
    }

    fn selection(&self) -> PeakSelection {
        PeakSelection {
            n_side: self.n_side,
            display_per_side: self.display_per_side,
        }
    }
}

/// Peak-area analysis of one cross-correlation histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAnalysis {
    pub floor_per_bin: f64,
    pub raw: PeakAnalysis,
    pub corrected: PeakAnalysis,
    pub postselected_g2: Estimate,
    /// `(0.5 − g)/0.5` of the post-selected g², when g lies in [0, 1].
    pub postselected_visibility: Option<f64>,
    pub background_correction: bool,
}

impl CorrelationAnalysis {
    /// g²(0, Δt) of the configured flavour.
    pub fn g2(&self) -> Estimate {
        if self.background_correction {
            self.corrected.g2_zero
        } else {
            self.raw.g2_zero
        }
    }
}

pub fn analyze_histogram(
    hist: &CorrelationHistogram,
    period_ps: f64,
    settings: &AnalysisSettings,
) -> Result<CorrelationAnalysis> {
    let comb = settings.comb(period_ps);
    let floor = estimate_background(hist, &comb)?;
    let sel = settings.selection();
    let raw = integrate_peaks(hist, &comb, sel, floor, false)?;
    let corrected = integrate_peaks(hist, &comb, sel, floor, true)?;
    let ps_floor = if settings.background_correction {
        floor
    } else {
        0.0
    };
    let ps = postselected_g2(
        hist,
        &comb,
        settings.postselect_width_ps,
        settings.n_side,
        ps_floor,
    )?;
    Ok(CorrelationAnalysis {
        floor_per_bin: floor,
        raw,
        corrected,
        postselected_g2: ps,
        postselected_visibility: postselected_visibility(ps.value).ok(),
        background_correction: settings.background_correction,
    })
}

pub fn correlate_and_analyze(
    stream: &TimeTagStream,
    period_ps: f64,
    settings: &AnalysisSettings,
) -> Result<(CorrelationHistogram, CorrelationAnalysis)> {
    let hist = cross_correlate_channels(stream, (0, 1), settings.bin_width_ps, settings.window_ps)?;
    let analysis = analyze_histogram(&hist, period_ps, settings)?;
    Ok((hist, analysis))
}

/// One simulated and analyzed acquisition.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub histogram: CorrelationHistogram,
    pub analysis: CorrelationAnalysis,
    pub counters: DetectionCounters,
    pub emitted: [u64; 2],
}

pub fn acquire(
    scenario: &Scenario,
    seed: u64,
    settings: &AnalysisSettings,
    threads: Option<usize>,
) -> Result<Acquisition> {
    let out = simulate(scenario, seed, threads)?;
    let (histogram, analysis) =
        correlate_and_analyze(&out.stream, scenario.train.period_ps(), settings)?;
    Ok(Acquisition {
        histogram,
        analysis,
        counters: out.counters,
        emitted: out.emitted,
    })
}

/// Synchronized and delayed runs of the same scenario.
#[derive(Debug, Clone)]
pub struct VisibilityMeasurement {
    pub synced: Acquisition,
    pub delayed: Acquisition,
    pub visibility_raw: Estimate,
    pub visibility_corrected: Estimate,
    /// `pol·overlap` visibility of the closed form for these emitters.
    pub closed_form: f64,
    /// Visibility expected from the pair model including the residual overlap
    /// left by the reference delay.
    pub delay_aware_prediction: f64,
}

/// Runs the scenario with zero source delay and with `reference_delay_ps`,
/// then forms `V = (g_d − g_s)/g_d`. The delayed run uses seed `seed + 1`.
pub fn measure_visibility(
    scenario: &Scenario,
    reference_delay_ps: f64,
    seed: u64,
    settings: &AnalysisSettings,
    threads: Option<usize>,
) -> Result<VisibilityMeasurement> {
    if scenario.sources != ActiveSources::Both {
        return Err(Error::config("a visibility measurement needs both sources"));
    }
    let mut synced_s = scenario.clone();
    synced_s.train.source_delay_ps = 0.0;
    let mut delayed_s = scenario.clone();
    delayed_s.train.source_delay_ps = reference_delay_ps;
    let synced = acquire(&synced_s, seed, settings, threads)?;
    let delayed = acquire(&delayed_s, seed.wrapping_add(1), settings, threads)?;
    let visibility_raw = hom_visibility(delayed.analysis.raw.g2_zero, synced.analysis.raw.g2_zero)?;
    let visibility_corrected = hom_visibility(
        delayed.analysis.corrected.g2_zero,
        synced.analysis.corrected.g2_zero,
    )?;
    let params = scenario.kernel_params()?;
    let gs = predicted_central_ratio(&params, 0.0);
    let gd = predicted_central_ratio(&params, reference_delay_ps);
    Ok(VisibilityMeasurement {
        synced,
        delayed,
        visibility_raw,
        visibility_corrected,
        closed_form: visibility_closed_form(
            &scenario.emitters[0],
            &scenario.emitters[1],
            scenario.detuning_uev(),
            scenario.circuit.mode_overlap(),
        )?,
        delay_aware_prediction: (gd - gs) / gd,
    })
}

/// Autocorrelation of emitter 1 alone through the splitter.
pub fn measure_hbt(
    scenario: &Scenario,
    seed: u64,
    settings: &AnalysisSettings,
    threads: Option<usize>,
) -> Result<Acquisition> {
    let mut s = scenario.clone();
    s.sources = ActiveSources::First;
    acquire(&s, seed, settings, threads)
}

#[derive(Debug, Clone)]
pub struct DoubleProbCalibration {
    pub double_prob: f64,
    pub measured: Estimate,
    pub evaluations: usize,
}

/// Tunes emitter 1's `double_prob` until the simulated autocorrelation
/// g²(0, Δt) matches `target`. Bisection on `[0, emission_prob]`, where the
/// ratio rises monotonically, with a fixed seed for every trial.
pub fn calibrate_double_prob(
    scenario: &Scenario,
    target: f64,
    tolerance: f64,
    seed: u64,
    settings: &AnalysisSettings,
    threads: Option<usize>,
) -> Result<DoubleProbCalibration> {
    let measure = |q: f64| -> Result<Estimate> {
        let mut s = scenario.clone();
        s.emitters[0].double_prob = q;
        Ok(measure_hbt(&s, seed, settings, threads)?.analysis.g2())
    };
    let mut lo = 0.0;
    let mut hi = scenario.emitters[0].emission_prob.min(0.99);
    let top = measure(hi)?;
    if top.value < target {
        return Err(Error::numerical(format!(
            "target g2 {target} above the reachable maximum {:.3}",
            top.value
        )));
    }
    let mut evaluations = 1;
    let mut best = (hi, top);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let g = measure(mid)?;
        evaluations += 1;
        if (g.value - target).abs() < (best.1.value - target).abs() {
            best = (mid, g);
        }
        if (g.value - target).abs() <= tolerance {
            break;
        }
        if g.value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DoubleProbCalibration {
        double_prob: best.0,
        measured: best.1,
        evaluations,
    })
}
