use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PulseTrainSpec;
use crate::tags::TimeTagStream;

pub const DEFAULT_TRACE_BIN_PS: f64 = 20.0;

/// Histogram of tag arrival phase within the laser period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub bin_width_ps: f64,
    pub period_ps: f64,
    /// The last bin is narrower when the period is not a multiple of the bin width.
    pub counts: Vec<u64>,
}

impl DecayTrace {
    pub fn bin_start_ps(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_ps
    }

    pub fn bin_center_ps(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_ps
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Folds tag times modulo the laser period. `channel = None` takes both channels.
pub fn timetrace(
    tags: &TimeTagStream,
    train: &PulseTrainSpec,
    bin_width_ps: f64,
    channel: Option<u8>,
) -> Result<DecayTrace> {
    let period = train.period_ps();
    if !(bin_width_ps > 0.0 && bin_width_ps <= period) {
        return Err(Error::config(format!(
            "trace bin width {bin_width_ps} ps must lie in (0, {period}]"
        )));
    }
    let n = (period / bin_width_ps).ceil() as usize;
    let mut counts = vec![0u64; n];
    for r in &tags.records {
        if channel.is_some_and(|c| c != r.channel) {
            continue;
        }
        let phase = (r.time_ticks as f64 * tags.resolution_ps as f64).rem_euclid(period);
        let i = ((phase / bin_width_ps) as usize).min(n - 1);
        counts[i] += 1;
    }
    Ok(DecayTrace {
        bin_width_ps,
        period_ps: period,
        counts,
    })
}

/// Delay of `b` relative to `a` from the peak of their circular
/// cross-correlation, refined by a parabola through the three highest samples.
/// The result is wrapped into `(−period/2, period/2]`.
pub fn estimate_delay(a: &DecayTrace, b: &DecayTrace) -> Result<f64> {
    if a.counts.len() != b.counts.len() || a.bin_width_ps != b.bin_width_ps {
        return Err(Error::config("traces must share period and binning"));
    }
    let n = a.counts.len();
    let centered = |t: &DecayTrace| -> Result<Vec<f64>> {
        let mean = t.total() as f64 / n as f64;
        let x: Vec<f64> = t.counts.iter().map(|&c| c as f64 - mean).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // Require structure well beyond shot noise.
        if var <= 2.0 * mean.max(0.0) || var == 0.0 {
            return Err(Error::numerical(
                "trace has no structure beyond counting noise; delay undefined",
            ));
        }
        Ok(x)
    };
    let xa = centered(a)?;
    let xb = centered(b)?;
    let corr: Vec<f64> = (0..n)
        .map(|s| (0..n).map(|i| xa[i] * xb[(i + s) % n]).sum())
        .collect();
    let (best, _) = corr
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let y0 = corr[(best + n - 1) % n];
    let y1 = corr[best];
    let y2 = corr[(best + 1) % n];
    let denom = y0 - 2.0 * y1 + y2;
    let frac = if denom < 0.0 {
        0.5 * (y0 - y2) / denom
    } else {
        0.0
    };
    let mut shift = (best as f64 + frac) * a.bin_width_ps;
    let span = n as f64 * a.bin_width_ps;
    if shift > span / 2.0 {
        shift -= span;
    }
    Ok(shift)
}
