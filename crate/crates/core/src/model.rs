//! Physical parameter sets shared by the simulator, the theory and the analysis code.
//!
//! Times are in picoseconds, energies in µeV. Emitter energies are offsets from
//! a common reference line (1.3931 eV for the device this toolkit was built
//! around), which keeps µeV-scale detunings free of cancellation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in µeV·ps.
pub const HBAR_UEV_PS: f64 = 658.211_956_9;

/// Ratio between a Gaussian's FWHM and its standard deviation, `2·sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Fixed physical constants, grouped for discoverability.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhysConstants;

impl PhysConstants {
    pub const HBAR_UEV_PS: f64 = HBAR_UEV_PS;
}

/// Coherence time of a Lorentzian line of the given FWHM: `T2 = 2ħ/Γ`.
pub fn t2_from_linewidth(fwhm_uev: f64) -> Result<f64> {
    if !(fwhm_uev > 0.0) || !fwhm_uev.is_finite() {
        return Err(Error::domain(format!(
            "linewidth must be positive and finite, got {fwhm_uev} µeV"
        )));
    }
    Ok(2.0 * HBAR_UEV_PS / fwhm_uev)
}

/// Inverse of [`t2_from_linewidth`].
pub fn linewidth_from_t2(t2_ps: f64) -> Result<f64> {
    if !(t2_ps > 0.0) || !t2_ps.is_finite() {
        return Err(Error::domain(format!(
            "coherence time must be positive and finite, got {t2_ps} ps"
        )));
    }
    Ok(2.0 * HBAR_UEV_PS / t2_ps)
}

/// Energy detuning in µeV to angular frequency in rad/ps.
pub fn detuning_to_angular(delta_uev: f64) -> f64 {
    delta_uev / HBAR_UEV_PS
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
    let upper_ok = if hi_inclusive { v <= hi } else { v < hi };
    if v >= lo && upper_ok && v.is_finite() {
        Ok(())
    } else {
        let bracket = if hi_inclusive { ']' } else { ')' };
        Err(Error::config(format!(
            "{name} must lie in [{lo}, {hi}{bracket}, got {v}"
        )))
    }
}

/// Physical parameters of one quantum emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    /// Transition energy offset from the common reference, µeV.
    pub energy_uev: f64,
    /// Radiative lifetime T1.
    pub t1_fast_ps: f64,
    /// Slow (recapture) decay constant.
    pub t1_slow_ps: f64,
    /// Fraction of the emitted intensity in the slow component.
    pub slow_fraction: f64,
    /// Coherence time T2.
    pub t2_ps: f64,
    /// Probability that a pulse produces the primary photon.
    pub emission_prob: f64,
    /// Probability that a pulse produces one additional photon.
    pub double_prob: f64,
    /// Dark-to-bright switching rate. Blinking is active only when both rates are non-zero.
    pub blink_on_rate_per_s: f64,
    /// Bright-to-dark switching rate.
    pub blink_off_rate_per_s: f64,
}

impl EmitterSpec {
    /// First emitter of the reference device: 720 ps / 12 ns decay, 2 % slow
    /// intensity, T2 = 100 ps.
    pub fn reference_qd1() -> Self {
        Self {
            energy_uev: 0.0,
            t1_fast_ps: 720.0,
            t1_slow_ps: 12_000.0,
            slow_fraction: 0.02,
            t2_ps: 100.0,
            emission_prob: 0.5,
            double_prob: 0.0,
            blink_on_rate_per_s: 0.0,
            blink_off_rate_per_s: 0.0,
        }
    }

    /// Second emitter: 600 ps / 22 ns decay, 1.2 % slow intensity, T2 = 440 ps.
    pub fn reference_qd2() -> Self {
        Self {
            t1_fast_ps: 600.0,
            t1_slow_ps: 22_000.0,
            slow_fraction: 0.012,
            t2_ps: 440.0,
            ..Self::reference_qd1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.energy_uev.is_finite() {
            return Err(Error::config(format!(
                "energy_uev must be finite, got {}",
                self.energy_uev
            )));
        }
        check_positive("t1_fast_ps", self.t1_fast_ps)?;
        check_positive("t1_slow_ps", self.t1_slow_ps)?;
        check_positive("t2_ps", self.t2_ps)?;
        check_range("slow_fraction", self.slow_fraction, 0.0, 1.0, false)?;
        check_range("emission_prob", self.emission_prob, 0.0, 1.0, true)?;
        check_range("double_prob", self.double_prob, 0.0, 1.0, false)?;
        for (name, rate) in [
            ("blink_on_rate_per_s", self.blink_on_rate_per_s),
            ("blink_off_rate_per_s", self.blink_off_rate_per_s),
        ] {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be non-negative and finite, got {rate}"
                )));
            }
        }
        // Fourier limit, with a relative slack so that T2 = 2·T1 itself is accepted.
        if self.t2_ps > 2.0 * self.t1_fast_ps * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "t2_ps = {} exceeds the Fourier limit 2·t1_fast_ps = {}",
                self.t2_ps,
                2.0 * self.t1_fast_ps
            )));
        }
        Ok(())
    }

    pub fn radiative_rate(&self) -> f64 {
        1.0 / self.t1_fast_ps
    }

    /// `γ* = 1/T2 − 1/(2·T1)`, clamped at zero for specs sitting exactly on the Fourier limit.
    pub fn pure_dephasing_rate(&self) -> f64 {
        (1.0 / self.t2_ps - 0.5 / self.t1_fast_ps).max(0.0)
    }

    /// Upper bound on the indistinguishability of two photons from this emitter, `T2/(2·T1)`.
    pub fn coherence_ratio(&self) -> f64 {
        self.t2_ps / (2.0 * self.t1_fast_ps)
    }

    pub fn blinking_enabled(&self) -> bool {
        self.blink_on_rate_per_s > 0.0 && self.blink_off_rate_per_s > 0.0
    }
}

/// Integrated beamsplitter and routing optics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    /// Intensity reflectance r. Source 1 reaches channel 0 with probability r,
    /// source 2 with probability `1 − r`.
    pub reflectance: f64,
    /// Scalar polarization mode overlap of the two inputs.
    pub pol_overlap: f64,
    /// Intensity transmission of input arm 1, input arm 2, output arm 1, output arm 2.
    pub arm_transmission: [f64; 4],
    /// Optional interferometer contrast cap, multiplies the two-photon overlap.
    #[serde(default)]
    pub classical_visibility: Option<f64>,
}

impl CircuitSpec {
    pub fn balanced() -> Self {
        Self {
            reflectance: 0.5,
            pol_overlap: 1.0,
            arm_transmission: [1.0; 4],
            classical_visibility: None,
        }
    }

    pub fn transmittance(&self) -> f64 {
        1.0 - self.reflectance
    }

    /// Total mode overlap entering the two-photon kernel.
    pub fn mode_overlap(&self) -> f64 {
        self.pol_overlap * self.classical_visibility.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reflectance > 0.0 && self.reflectance < 1.0) {
            return Err(Error::config(format!(
                "reflectance must lie in (0, 1), got {}",
                self.reflectance
            )));
        }
        check_range("pol_overlap", self.pol_overlap, 0.0, 1.0, true)?;
        for (i, &t) in self.arm_transmission.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::config(format!(
                    "arm_transmission[{i}] must lie in (0, 1], got {t}"
                )));
            }
        }
        if let Some(v) = self.classical_visibility {
            check_range("classical_visibility", v, 0.0, 1.0, true)?;
        }
        Ok(())
    }
}

/// Detection chain of each of the two channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    /// Gaussian instrument response FWHM.
    pub irf_fwhm_ps: f64,
    pub dark_rate_cps: f64,
    pub efficiency: f64,
    #[serde(default)]
    pub dead_time_ps: f64,
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        Self {
            irf_fwhm_ps: 0.0,
            dark_rate_cps: 0.0,
            efficiency: 1.0,
            dead_time_ps: 0.0,
        }
    }

    pub fn irf_sigma_ps(&self) -> f64 {
        fwhm_to_sigma(self.irf_fwhm_ps)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("irf_fwhm_ps", self.irf_fwhm_ps),
            ("dark_rate_cps", self.dark_rate_cps),
            ("dead_time_ps", self.dead_time_ps),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::config(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }
}

/// Excitation laser pulse train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseTrainSpec {
    pub rep_rate_mhz: f64,
    pub n_pulses: u64,
    /// Delay of the source-2 excitation relative to source 1.
    pub source_delay_ps: f64,
}

impl PulseTrainSpec {
    pub fn period_ps(&self) -> f64 {
        1e6 / self.rep_rate_mhz
    }

    /// Length of the excitation sequence, `n_pulses · period`.
    pub fn span_ps(&self) -> f64 {
        self.n_pulses as f64 * self.period_ps()
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("rep_rate_mhz", self.rep_rate_mhz)?;
        if !self.source_delay_ps.is_finite() || self.source_delay_ps.abs() >= self.period_ps() / 2.0
        {
            return Err(Error::config(format!(
                "|source_delay_ps| must be below half the laser period ({} ps), got {}",
                self.period_ps() / 2.0,
                self.source_delay_ps
            )));
        }
        Ok(())
    }
}
