use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::TimeTagStream;

/// Channel-0 tags per parallel work item.
const CHUNK: usize = 1 << 15;

/// Coincidence counts of `t_b − t_a` for `a` on `channels.0` and `b` on `channels.1`.
///
/// Bin `i` covers `[−window + i·bin, −window + (i+1)·bin)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub window_ps: u64,
    pub counts: Vec<u64>,
    pub total_pairs: u64,
    pub channels: (u8, u8),
}

impl CorrelationHistogram {
    pub fn empty(bin_width_ps: u64, window_ps: u64) -> Result<Self> {
        check_binning(bin_width_ps, window_ps)?;
        Ok(Self {
            bin_width_ps,
            window_ps,
            counts: vec![0; (2 * window_ps / bin_width_ps) as usize],
            total_pairs: 0,
            channels: (0, 1),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_start_ps(&self, i: usize) -> i64 {
        -(self.window_ps as i64) + (i as u64 * self.bin_width_ps) as i64
    }

    pub fn bin_center_ps(&self, i: usize) -> f64 {
        self.bin_start_ps(i) as f64 + 0.5 * self.bin_width_ps as f64
    }

    /// Bin holding delay `d`, if inside the window.
    pub fn bin_of(&self, d: i64) -> Option<usize> {
        let w = self.window_ps as i64;
        if d < -w || d >= w {
            return None;
        }
        Some(((d + w) as u64 / self.bin_width_ps) as usize)
    }

    /// Merges groups of `factor` adjacent bins.
    pub fn rebin(&self, factor: u64) -> Result<Self> {
        if factor == 0 || !(self.counts.len() as u64).is_multiple_of(factor) {
            return Err(Error::config(format!(
                "rebin factor {factor} does not divide {} bins",
                self.counts.len()
            )));
        }
        Ok(Self {
            bin_width_ps: self.bin_width_ps * factor,
            counts: self
                .counts
                .chunks(factor as usize)
                .map(|c| c.iter().sum())
                .collect(),
            ..self.clone()
        })
    }
}

fn check_binning(bin_width_ps: u64, window_ps: u64) -> Result<()> {
    if bin_width_ps == 0 {
        return Err(Error::config("bin_width_ps must be at least 1"));
    }
    if window_ps == 0 || !window_ps.is_multiple_of(bin_width_ps) {
        return Err(Error::config(format!(
            "window_ps {window_ps} must be a positive multiple of bin_width_ps {bin_width_ps}"
        )));
    }
    Ok(())
}

fn sweep(a: &[u64], b: &[u64], hist: &mut CorrelationHistogram) {
    let w = hist.window_ps;
    let bin = hist.bin_width_ps;
    let mut lo = b.partition_point(|&t| t.saturating_add(w) < a.first().copied().unwrap_or(0));
    for &ta in a {
        // First partner with t_b ≥ t_a − W.
        while lo < b.len() && b[lo] + w < ta {
            lo += 1;
        }
        let mut j = lo;
        // Stop at t_b ≥ t_a + W; the upper edge is excluded.
        while j < b.len() && b[j] < ta + w {
            let idx = (b[j] + w - ta) / bin;
            hist.counts[idx as usize] += 1;
            hist.total_pairs += 1;
            j += 1;
        }
    }
}

/// Cross-correlates channel 0 (start) against channel 1 (stop).
pub fn cross_correlate(
    tags: &TimeTagStream,
    bin_width_ps: u64,
    window_ps: u64,
) -> Result<CorrelationHistogram> {
    cross_correlate_channels(tags, (0, 1), bin_width_ps, window_ps)
}

/// Two-pointer sweep over the two channels' sorted times. Chunks of start tags
/// run in parallel and their integer histograms are summed, so the result does
/// not depend on the thread count.
pub fn cross_correlate_channels(
    tags: &TimeTagStream,
    channels: (u8, u8),
    bin_width_ps: u64,
    window_ps: u64,
) -> Result<CorrelationHistogram> {
    check_binning(bin_width_ps, window_ps)?;
    tags.check_invariants()?;
    let a = tags.channel_times(channels.0);
    let b = tags.channel_times(channels.1);
    let empty = CorrelationHistogram {
        channels,
        ..CorrelationHistogram::empty(bin_width_ps, window_ps)?
    };
    Ok(a.par_chunks(CHUNK)
        .map(|chunk| {
            let mut h = empty.clone();
            sweep(chunk, &b, &mut h);
            h
        })
        .reduce(
            || empty.clone(),
            |mut x, y| {
                for (c, d) in x.counts.iter_mut().zip(&y.counts) {
                    *c += d;
                }
                x.total_pairs += y.total_pairs;
                x
            },
        ))
}
