//! Monte Carlo generation of detector time tags from the emitter, circuit and
//! detector models.
//!
//! All randomness is addressed by `(seed, stream, pulse index)`, so pulse
//! blocks can be processed in any order on any number of threads and the
//! merged stream is identical to a serial run.

mod detect;
mod emission;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use detect::{pair_interference_outcome, route_and_detect, DetectionCounters, PairOutcome};
pub use emission::{
    generate_emission_stream, generate_emission_stream_with, DecayComponent, EmissionOptions,
    PhotonEvent, SourceId,
};

use crate::error::Result;
use crate::interfere::InterferenceKernelParams;
use crate::model::{CircuitSpec, DetectorSpec, EmitterSpec, PulseTrainSpec};
use crate::tags::{StreamMetadata, TimeTagStream};

/// Pulses per parallel work item.
const PULSE_BLOCK: u64 = 1 << 14;

pub(crate) fn blocks(n_pulses: u64) -> Vec<(u64, u64)> {
    (0..n_pulses.div_ceil(PULSE_BLOCK))
        .map(|b| (b * PULSE_BLOCK, ((b + 1) * PULSE_BLOCK).min(n_pulses)))
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool construction")
            .install(f),
        None => f(),
    }
}

/// Which sources are excited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveSources {
    /// Two-photon interference configuration.
    #[default]
    Both,
    /// Autocorrelation of source 1 alone.
    First,
    /// Autocorrelation of source 2 alone.
    Second,
}

/// Everything needed to simulate one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub emitters: [EmitterSpec; 2],
    pub circuit: CircuitSpec,
    pub detector: DetectorSpec,
    pub train: PulseTrainSpec,
    pub sources: ActiveSources,
    pub spectral_diffusion_uev: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        for e in &self.emitters {
            e.validate()?;
        }
        self.circuit.validate()?;
        self.detector.validate()?;
        self.train.validate()?;
        if !(self.spectral_diffusion_uev >= 0.0 && self.spectral_diffusion_uev.is_finite()) {
            return Err(crate::Error::config(format!(
                "spectral_diffusion_uev must be non-negative, got {}",
                self.spectral_diffusion_uev
            )));
        }
        Ok(())
    }

    /// Detuning E₁ − E₂ between the emitters, µeV.
    pub fn detuning_uev(&self) -> f64 {
        self.emitters[0].energy_uev - self.emitters[1].energy_uev
    }

    pub fn kernel_params(&self) -> Result<InterferenceKernelParams> {
        InterferenceKernelParams::from_emitters(
            &self.emitters[0],
            &self.emitters[1],
            self.detuning_uev(),
            self.circuit.mode_overlap(),
            self.circuit.reflectance,
        )
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub stream: TimeTagStream,
    pub counters: DetectionCounters,
    pub emitted: [u64; 2],
}

/// Emission, routing and detection of one scenario.
pub fn simulate(
    scenario: &Scenario,
    seed: u64,
    threads: Option<usize>,
) -> Result<SimulationOutput> {
    scenario.validate()?;
    let opts = EmissionOptions {
        spectral_diffusion_uev: scenario.spectral_diffusion_uev,
        threads,
    };
    let (run1, run2) = match scenario.sources {
        ActiveSources::Both => (true, true),
        ActiveSources::First => (true, false),
        ActiveSources::Second => (false, true),
    };
    let emit = |run: bool, idx: usize, id: SourceId| -> Result<Vec<PhotonEvent>> {
        if run {
            generate_emission_stream_with(&scenario.emitters[idx], &scenario.train, id, seed, &opts)
        } else {
            Ok(Vec::new())
        }
    };
    let ev1 = emit(run1, 0, SourceId::One)?;
    let ev2 = emit(run2, 1, SourceId::Two)?;
    let params = scenario.kernel_params()?;
    let (mut stream, counters) = route_and_detect(
        &ev1,
        &ev2,
        &params,
        &scenario.circuit,
        &scenario.detector,
        &scenario.train,
        seed,
        threads,
    )?;
    stream.metadata = StreamMetadata {
        seed: Some(seed),
        specs_digest: Some(scenario.digest()),
    };
    Ok(SimulationOutput {
        stream,
        counters,
        emitted: [ev1.len() as u64, ev2.len() as u64],
    })
}
