use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{EmitterSpec, PulseTrainSpec};
use crate::rng::{self, streams};

use super::{blocks, in_pool};

/// Which excitation path a photon came from. Source 1 feeds input port 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceId {
    One,
    Two,
}

impl SourceId {
    pub fn index(self) -> usize {
        match self {
            SourceId::One => 0,
            SourceId::Two => 1,
        }
    }

    pub fn number(self) -> u64 {
        self.index() as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayComponent {
    Fast,
    Slow,
}

/// One emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub source: SourceId,
    pub pulse_index: u64,
    /// Emission time from the start of the experiment, including the source's
    /// excitation delay.
    pub emit_time_ps: f64,
    pub component: DecayComponent,
    /// Quasi-static frequency offset of this photon, µeV.
    pub freq_offset_uev: f64,
    /// True for the additional photon of a multi-photon pulse.
    pub extra: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmissionOptions {
    /// Standard deviation of the per-photon Gaussian frequency offset. Zero disables it.
    pub spectral_diffusion_uev: f64,
    pub threads: Option<usize>,
}

/// Two-state blinking trajectory over the whole experiment.
#[derive(Debug, Clone)]
pub(crate) struct Telegraph {
    initially_on: bool,
    switches: Vec<f64>,
}

impl Telegraph {
    pub(crate) fn always_on() -> Self {
        Self {
            initially_on: true,
            switches: Vec::new(),
        }
    }

    /// Samples the continuous-time chain over `[0, horizon_ps]`, starting from
    /// its stationary distribution.
    pub(crate) fn sample(
        on_rate_per_s: f64,
        off_rate_per_s: f64,
        horizon_ps: f64,
        seed: u64,
        source: SourceId,
    ) -> Self {
        let mut r = rng::keyed(seed, streams::BLINKING_BASE + source.number(), 0);
        let p_on = on_rate_per_s / (on_rate_per_s + off_rate_per_s);
        let mut on = rng::open01(&mut r) < p_on;
        let initially_on = on;
        let mut t = 0.0;
        let mut switches = Vec::new();
        loop {
            let rate_per_ps = if on { off_rate_per_s } else { on_rate_per_s } * 1e-12;
            t += rng::exponential(&mut r, 1.0 / rate_per_ps);
            if t > horizon_ps {
                break;
            }
            switches.push(t);
            on = !on;
        }
        Self {
            initially_on,
            switches,
        }
    }

    pub(crate) fn is_on(&self, t_ps: f64) -> bool {
        let n = self.switches.partition_point(|&s| s <= t_ps);
        self.initially_on ^ (n % 2 == 1)
    }

    /// Long-run bright fraction of the sampled trajectory over `[0, horizon]`.
    #[cfg(test)]
    pub(crate) fn on_fraction(&self, horizon_ps: f64) -> f64 {
        let mut on = self.initially_on;
        let mut last = 0.0;
        let mut total = 0.0;
        for &s in &self.switches {
            if on {
                total += s - last;
            }
            last = s;
            on = !on;
        }
        if on {
            total += horizon_ps - last;
        }
        total / horizon_ps
    }
}

fn draw_photon<R: rand::RngCore>(
    r: &mut R,
    emitter: &EmitterSpec,
    start_ps: f64,
    pulse_index: u64,
    source: SourceId,
    sigma_uev: f64,
    extra: bool,
) -> PhotonEvent {
    let slow = rng::open01(r) < emitter.slow_fraction;
    let (component, mean) = if slow {
        (DecayComponent::Slow, emitter.t1_slow_ps)
    } else {
        (DecayComponent::Fast, emitter.t1_fast_ps)
    };
    let decay = rng::exponential(r, mean);
    let freq_offset_uev = if sigma_uev > 0.0 {
        sigma_uev * rng::standard_normal(r)
    } else {
        0.0
    };
    PhotonEvent {
        source,
        pulse_index,
        emit_time_ps: start_ps + decay,
        component,
        freq_offset_uev,
        extra,
    }
}

/// Emission events of one source over the whole pulse train, time-sorted.
///
/// Per pulse (while the blinking gate is bright) the primary photon appears
/// with probability `emission_prob`; independently, with probability
/// `double_prob`, one additional photon appears in the same cycle. Both draw
/// their delay from the mixture `(1 − f)·Exp(t1_fast) + f·Exp(t1_slow)`.
pub fn generate_emission_stream(
    emitter: &EmitterSpec,
    train: &PulseTrainSpec,
    source: SourceId,
    seed: u64,
) -> Result<Vec<PhotonEvent>> {
    generate_emission_stream_with(emitter, train, source, seed, &EmissionOptions::default())
}

pub fn generate_emission_stream_with(
    emitter: &EmitterSpec,
    train: &PulseTrainSpec,
    source: SourceId,
    seed: u64,
    opts: &EmissionOptions,
) -> Result<Vec<PhotonEvent>> {
    emitter.validate()?;
    train.validate()?;
    let period = train.period_ps();
    let offset = match source {
        SourceId::One => 0.0,
        SourceId::Two => train.source_delay_ps,
    };
    let gate = if emitter.blinking_enabled() {
        Telegraph::sample(
            emitter.blink_on_rate_per_s,
            emitter.blink_off_rate_per_s,
            train.span_ps() + period,
            seed,
            source,
        )
    } else {
        Telegraph::always_on()
    };
    let stream = streams::EMISSION_BASE + source.number();
    let sigma = opts.spectral_diffusion_uev;

    let chunks: Vec<Vec<PhotonEvent>> = in_pool(opts.threads, || {
        blocks(train.n_pulses)
            .into_par_iter()
            .map(|(lo, hi)| {
                let mut out = Vec::new();
                for k in lo..hi {
                    let start = k as f64 * period + offset;
                    if !gate.is_on(start) {
                        continue;
                    }
                    let mut r = rng::keyed(seed, stream, k);
                    if rng::open01(&mut r) < emitter.emission_prob {
                        out.push(draw_photon(&mut r, emitter, start, k, source, sigma, false));
                    }
                    if rng::open01(&mut r) < emitter.double_prob {
                        out.push(draw_photon(&mut r, emitter, start, k, source, sigma, true));
                    }
                }
                out
            })
            .collect()
    });
    let mut events: Vec<PhotonEvent> = chunks.into_iter().flatten().collect();
    events.sort_by(|a, b| {
        a.emit_time_ps
            .total_cmp(&b.emit_time_ps)
            .then(a.pulse_index.cmp(&b.pulse_index))
            .then(a.extra.cmp(&b.extra))
    });
    Ok(events)
}
