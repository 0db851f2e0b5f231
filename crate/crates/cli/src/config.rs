//! Scenario configuration files.

use std::path::Path;

use homsim_core::pipeline::AnalysisSettings;
use homsim_core::simulate::{ActiveSources, Scenario};
use homsim_core::{CircuitSpec, DetectorSpec, EmitterSpec, PulseTrainSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Everything a run needs. Physics blocks have no defaults; the analysis
/// block, the excitation selector and the spectral diffusion width do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub emitter1: EmitterSpec,
    pub emitter2: EmitterSpec,
    pub circuit: CircuitSpec,
    pub detector: DetectorSpec,
    pub train: PulseTrainSpec,
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub sources: ActiveSources,
    #[serde(default)]
    pub spectral_diffusion_uev: f64,
}

impl ScenarioConfig {
    /// Reference device: QD1 and QD2, r = 0.48, 95 % polarization overlap,
    /// 80 ps IRF, 300 cps dark counts, 10⁶ pulses at 76 MHz.
    pub fn reference() -> Self {
        Self {
            emitter1: EmitterSpec::reference_qd1(),
            emitter2: EmitterSpec::reference_qd2(),
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
                n_pulses: 1_000_000,
                source_delay_ps: 0.0,
            },
            seed: 1,
            analysis: AnalysisSettings::default(),
            sources: ActiveSources::Both,
            spectral_diffusion_uev: 0.0,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::validation(format!("config field `{path}`: {}", e.into_inner()))
        })?;
        cfg.scenario().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            emitters: [self.emitter1.clone(), self.emitter2.clone()],
            circuit: self.circuit.clone(),
            detector: self.detector.clone(),
            train: self.train.clone(),
            sources: self.sources,
            spectral_diffusion_uev: self.spectral_diffusion_uev,
        }
    }

    /// SHA-256 over the compact JSON encoding, hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
