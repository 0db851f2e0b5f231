use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interfere::{
    coherence_kernel_detuned, coincidence_probability, InterferenceKernelParams,
};
use crate::model::{detuning_to_angular, CircuitSpec, DetectorSpec, PulseTrainSpec};
use crate::rng::{self, streams};
use crate::tags::{TagRecord, TimeTagStream};

use super::emission::{PhotonEvent, SourceId};
use super::{blocks, in_pool};

/// Output ports taken by an interfering pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOutcome {
    /// One photon per output port.
    Split { source1_channel: u8 },
    /// Both photons leave through `channel`.
    Bunched { channel: u8 },
}

impl PairOutcome {
    /// Channels of the source-1 and source-2 photon.
    pub fn channels(self) -> (u8, u8) {
        match self {
            PairOutcome::Split { source1_channel } => (source1_channel, 1 - source1_channel),
            PairOutcome::Bunched { channel } => (channel, channel),
        }
    }
}

/// Draws the output ports of two photons meeting on the splitter in the same cycle.
///
/// Coincidence probability is `r² + t² − 2rt·D(τ)` with τ the emission-time
/// difference and D the mutual coherence including the pair's frequency offsets.
/// Otherwise both photons leave through one uniformly drawn port.
pub fn pair_interference_outcome<R: rand::RngCore>(
    p1: &PhotonEvent,
    p2: &PhotonEvent,
    params: &InterferenceKernelParams,
    rng: &mut R,
) -> Result<PairOutcome> {
    let (a, b) = match (p1.source, p2.source) {
        (SourceId::One, SourceId::Two) => (p1, p2),
        (SourceId::Two, SourceId::One) => (p2, p1),
        _ => {
            return Err(Error::contract(
                "interfering photons must come from different sources",
            ))
        }
    };
    let tau = a.emit_time_ps - b.emit_time_ps;
    let extra = detuning_to_angular(a.freq_offset_uev - b.freq_offset_uev);
    let d = coherence_kernel_detuned(tau, params, extra);
    let r = params.reflectance;
    let t = 1.0 - r;
    let p_split = coincidence_probability(r, d).clamp(0.0, 1.0);
    if rng::open01(rng) < p_split {
        // Split outcomes keep their classical relative weights r² : t².
        let straight = r * r / (r * r + t * t);
        let source1_channel = if rng::open01(rng) < straight { 0 } else { 1 };
        Ok(PairOutcome::Split { source1_channel })
    } else {
        let channel = if rng::open01(rng) < 0.5 { 0 } else { 1 };
        Ok(PairOutcome::Bunched { channel })
    }
}

/// Bookkeeping of one simulated acquisition. Every photon ends in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounters {
    pub photons_in: u64,
    pub lost_before_splitter: u64,
    pub interfering_pairs: u64,
    pub lost_after_splitter: u64,
    pub detected: [u64; 2],
    pub dark: [u64; 2],
    pub dead_time_pruned: u64,
    pub tags: u64,
}

impl DetectionCounters {
    fn merge(mut self, o: Self) -> Self {
        self.photons_in += o.photons_in;
        self.lost_before_splitter += o.lost_before_splitter;
        self.interfering_pairs += o.interfering_pairs;
        self.lost_after_splitter += o.lost_after_splitter;
        for c in 0..2 {
            self.detected[c] += o.detected[c];
            self.dark[c] += o.dark[c];
        }
        self.dead_time_pruned += o.dead_time_pruned;
        self
    }

    pub fn detected_total(&self) -> u64 {
        self.detected[0] + self.detected[1]
    }

    pub fn dark_total(&self) -> u64 {
        self.dark[0] + self.dark[1]
    }
}

struct Router<'a> {
    params: &'a InterferenceKernelParams,
    circuit: &'a CircuitSpec,
    detector: &'a DetectorSpec,
    jitter_sigma: f64,
}

impl Router<'_> {
    fn pulse(
        &self,
        group: &[&PhotonEvent],
        r: &mut rand_chacha::ChaCha8Rng,
        out: &mut Vec<TagRecord>,
        counters: &mut DetectionCounters,
    ) -> Result<()> {
        let tr = &self.circuit.arm_transmission;
        let mut survivors: [Vec<&PhotonEvent>; 2] = [Vec::new(), Vec::new()];
        for &ev in group {
            counters.photons_in += 1;
            let i = ev.source.index();
            if rng::open01(r) < tr[i] {
                survivors[i].push(ev);
            } else {
                counters.lost_before_splitter += 1;
            }
        }
        let mut routed: Vec<(f64, u8)> = Vec::with_capacity(group.len());
        let mut classical_from = [0usize, 0usize];
        if !survivors[0].is_empty() && !survivors[1].is_empty() {
            let (a, b) = (survivors[0][0], survivors[1][0]);
            let (ca, cb) = pair_interference_outcome(a, b, self.params, r)?.channels();
            routed.push((a.emit_time_ps, ca));
            routed.push((b.emit_time_ps, cb));
            counters.interfering_pairs += 1;
            classical_from = [1, 1];
        }
        let refl = self.circuit.reflectance;
        for (i, list) in survivors.iter().enumerate() {
            // Source 1 reaches channel 0 with probability r, source 2 with t.
            let p_ch0 = if i == 0 { refl } else { 1.0 - refl };
            for ev in &list[classical_from[i]..] {
                let ch = if rng::open01(r) < p_ch0 { 0 } else { 1 };
                routed.push((ev.emit_time_ps, ch));
            }
        }
        for (t, ch) in routed {
            let keep = tr[2 + ch as usize] * self.detector.efficiency;
            if rng::open01(r) >= keep {
                counters.lost_after_splitter += 1;
                continue;
            }
            let jittered = if self.jitter_sigma > 0.0 {
                t + self.jitter_sigma * rng::standard_normal(r)
            } else {
                t
            };
            counters.detected[ch as usize] += 1;
            out.push(TagRecord::new(jittered.round().max(0.0) as u64, ch));
        }
        Ok(())
    }
}

fn dark_counts(rate_cps: f64, span_ps: f64, seed: u64, channel: u8) -> Vec<TagRecord> {
    if rate_cps <= 0.0 {
        return Vec::new();
    }
    let mut r = rng::keyed(seed, streams::DARK_BASE + channel as u64, 0);
    let mean_gap_ps = 1e12 / rate_cps;
    let mut out = Vec::with_capacity((span_ps / mean_gap_ps * 1.1) as usize + 16);
    let mut t = rng::exponential(&mut r, mean_gap_ps);
    while t < span_ps {
        out.push(TagRecord::new(t.round() as u64, channel));
        t += rng::exponential(&mut r, mean_gap_ps);
    }
    out
}

/// Removes clicks falling within the dead time of the previous kept click
/// on the same channel. `records` must be sorted.
fn prune_dead_time(records: Vec<TagRecord>, dead_time_ps: f64) -> (Vec<TagRecord>, u64) {
    if dead_time_ps <= 0.0 {
        return (records, 0);
    }
    let mut last: [Option<u64>; 2] = [None, None];
    let mut kept = Vec::with_capacity(records.len());
    let mut pruned = 0;
    for rec in records {
        let slot = &mut last[rec.channel as usize];
        match *slot {
            Some(prev) if ((rec.time_ticks - prev) as f64) < dead_time_ps => pruned += 1,
            _ => {
                *slot = Some(rec.time_ticks);
                kept.push(rec);
            }
        }
    }
    (kept, pruned)
}

/// Sends two sources' photons through the splitter and the detection chain.
///
/// Within a pulse cycle, the earliest surviving photon of each source form
/// the interfering pair; every other photon is routed independently. Detector
/// jitter is applied after routing, then dark counts and dead time.
#[allow(clippy::too_many_arguments)]
pub fn route_and_detect(
    events1: &[PhotonEvent],
    events2: &[PhotonEvent],
    params: &InterferenceKernelParams,
    circuit: &CircuitSpec,
    detector: &DetectorSpec,
    train: &PulseTrainSpec,
    seed: u64,
    threads: Option<usize>,
) -> Result<(TimeTagStream, DetectionCounters)> {
    circuit.validate()?;
    detector.validate()?;
    train.validate()?;
    if events1.iter().any(|e| e.source != SourceId::One)
        || events2.iter().any(|e| e.source != SourceId::Two)
    {
        return Err(Error::contract(
            "events1 must all come from source 1 and events2 from source 2",
        ));
    }

    let mut by_pulse: Vec<&PhotonEvent> = events1.iter().chain(events2).collect();
    by_pulse.sort_by(|a, b| {
        a.pulse_index
            .cmp(&b.pulse_index)
            .then(a.source.cmp(&b.source))
            .then(a.emit_time_ps.total_cmp(&b.emit_time_ps))
    });
    let n_pulses = by_pulse
        .last()
        .map_or(0, |e| e.pulse_index + 1)
        .max(train.n_pulses);

    let router = Router {
        params,
        circuit,
        detector,
        jitter_sigma: detector.irf_sigma_ps(),
    };

    let chunks: Vec<Result<(Vec<TagRecord>, DetectionCounters)>> = in_pool(threads, || {
        blocks(n_pulses)
            .into_par_iter()
            .map(|(lo, hi)| {
                let start = by_pulse.partition_point(|e| e.pulse_index < lo);
                let end = by_pulse.partition_point(|e| e.pulse_index < hi);
                let slice = &by_pulse[start..end];
                let mut out = Vec::with_capacity(slice.len());
                let mut counters = DetectionCounters::default();
                for group in slice.chunk_by(|a, b| a.pulse_index == b.pulse_index) {
                    let mut r = rng::keyed(seed, streams::ROUTING, group[0].pulse_index);
                    router.pulse(group, &mut r, &mut out, &mut counters)?;
                }
                Ok((out, counters))
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut counters = DetectionCounters::default();
    for chunk in chunks {
        let (recs, c) = chunk?;
        records.extend(recs);
        counters = counters.merge(c);
    }
    for ch in 0..2u8 {
        let dark = dark_counts(detector.dark_rate_cps, train.span_ps(), seed, ch);
        counters.dark[ch as usize] = dark.len() as u64;
        records.extend(dark);
    }
    records.sort_unstable();
    let (records, pruned) = prune_dead_time(records, detector.dead_time_ps);
    counters.dead_time_pruned = pruned;
    counters.tags = records.len() as u64;
    Ok((TimeTagStream::from_sorted(records)?, counters))
}
