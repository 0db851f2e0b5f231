//! Shared fixtures for the benchmarks.

use homsim_core::fitting::UniformSeries;
use homsim_core::simulate::{simulate, ActiveSources, Scenario};
use homsim_core::{CircuitSpec, DetectorSpec, EmitterSpec, PulseTrainSpec, TimeTagStream};

/// Reference two-emitter device at 76 MHz.
pub fn reference_scenario(n_pulses: u64) -> Scenario {
    Scenario {
        emitters: [EmitterSpec::reference_qd1(), EmitterSpec::reference_qd2()],
        circuit: CircuitSpec {
            reflectance: 0.48,
            pol_overlap: 0.95,
            arm_transmission: [1.0; 4],
            classical_visibility: None,
        },
        detector: DetectorSpec {
            irf_fwhm_ps: 80.0,
            dark_rate_cps: 300.0,
            efficiency: 1.0,
            dead_time_ps: 0.0,
        },
        train: PulseTrainSpec {
            rep_rate_mhz: 76.0,
            n_pulses,
            source_delay_ps: 0.0,
        },
        sources: ActiveSources::Both,
        spectral_diffusion_uev: 0.0,
    }
}

pub fn reference_stream(n_pulses: u64) -> TimeTagStream {
    simulate(&reference_scenario(n_pulses), 7, None)
        .expect("reference scenario simulates")
        .stream
}

/// Noise-free 720 ps / 12 ns decay with a 2 % slow fraction on 16 ps bins.
pub fn decay_series() -> UniformSeries {
    let values = (0..3_000)
        .map(|i| {
            let t = -2_000.0 + 16.0 * (i as f64 + 0.5);
            if t < 0.0 {
                2.0
            } else {
                2.0 + 1e5
                    * (0.98 * (-t / 720.0).exp() + 0.02 * 720.0 / 12_000.0 * (-t / 12_000.0).exp())
            }
        })
        .collect();
    UniformSeries {
        start_ps: -2_000.0,
        step_ps: 16.0,
        values,
    }
}
