use serde::{Deserialize, Serialize};

use super::histogram::CorrelationHistogram;
use crate::error::{Error, Result};

/// A value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// Peak positions `offset + k·period` and the integration window around each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakComb {
    pub period_ps: f64,
    pub offset_ps: f64,
    /// Full integration window Δt.
    pub delta_t_ps: f64,
}

impl PeakComb {
    pub fn new(period_ps: f64, delta_t_ps: f64) -> Self {
        Self {
            period_ps,
            offset_ps: 0.0,
            delta_t_ps,
        }
    }

    pub fn center(&self, k: i64) -> f64 {
        self.offset_ps + k as f64 * self.period_ps
    }

    fn validate(&self) -> Result<()> {
        if !(self.period_ps > 0.0 && self.delta_t_ps > 0.0) {
            return Err(Error::config(
                "period and integration window must be positive",
            ));
        }
        if self.delta_t_ps > self.period_ps {
            return Err(Error::config(format!(
                "integration window {} ps exceeds the period {} ps; peaks overlap",
                self.delta_t_ps, self.period_ps
            )));
        }
        Ok(())
    }

    /// Distance from `tau` to the nearest comb tooth.
    fn distance_to_nearest(&self, tau: f64) -> f64 {
        let x = (tau - self.offset_ps) / self.period_ps;
        (x - x.round()).abs() * self.period_ps
    }
}

/// Mean counts per bin in the dead zones between peaks.
///
/// A bin belongs to the dead zone when its center lies further than
/// `Δt/2 + bin_width` from every peak center.
pub fn estimate_background(hist: &CorrelationHistogram, comb: &PeakComb) -> Result<f64> {
    comb.validate()?;
    if (2 * hist.window_ps) as f64 <= 3.0 * comb.period_ps {
        return Err(Error::config(format!(
            "histogram span {} ps covers fewer than three periods of {} ps",
            2 * hist.window_ps,
            comb.period_ps
        )));
    }
    let limit = 0.5 * comb.delta_t_ps + hist.bin_width_ps as f64;
    let (sum, n) = (0..hist.n_bins())
        .filter(|&i| comb.distance_to_nearest(hist.bin_center_ps(i)) > limit)
        .fold((0u64, 0usize), |(s, n), i| (s + hist.counts[i], n + 1));
    if n == 0 {
        return Err(Error::config("no dead-zone bins between peaks"));
    }
    Ok(sum as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakArea {
    pub index: i64,
    pub center_ps: f64,
    pub raw_counts: u64,
    pub bins: usize,
    /// Raw counts, minus `floor × bins` when background-corrected.
    pub area: f64,
    /// Poisson error of the raw counts.
    pub error: f64,
}

/// Which peaks enter the normalization and which are tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakSelection {
    /// Side peaks averaged for the normalization, split evenly between both sides.
    pub n_side: usize,
    /// Peaks tabulated on each side of zero.
    pub display_per_side: usize,
}

impl Default for PeakSelection {
    fn default() -> Self {
        Self {
            n_side: 6,
            display_per_side: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAnalysis {
    pub period_ps: f64,
    pub offset_ps: f64,
    pub integration_window_ps: f64,
    /// Tabulated peaks ordered by index.
    pub peaks: Vec<PeakArea>,
    pub floor_per_bin: f64,
    pub corrected: bool,
    pub n_side: usize,
    /// Central area over the mean of the normalizing side areas.
    pub g2_zero: Estimate,
    /// Floor contribution to a side-peak window relative to its raw counts.
    pub background_fraction: f64,
}

impl PeakAnalysis {
    pub fn central(&self) -> &PeakArea {
        self.peaks
            .iter()
            .find(|p| p.index == 0)
            .expect("central peak")
    }

    pub fn side_mean(&self) -> f64 {
        let used = side_indices(self.n_side);
        used.iter()
            .map(|k| self.peaks.iter().find(|p| p.index == *k).unwrap().area)
            .sum::<f64>()
            / used.len() as f64
    }
}

fn side_indices(n_side: usize) -> Vec<i64> {
    let per_side = n_side.div_ceil(2) as i64;
    (1..=per_side).flat_map(|k| [-k, k]).take(n_side).collect()
}

fn peak_area(
    hist: &CorrelationHistogram,
    comb: &PeakComb,
    k: i64,
    floor: f64,
    corrected: bool,
) -> PeakArea {
    let c = comb.center(k);
    let lo = c - 0.5 * comb.delta_t_ps;
    let hi = c + 0.5 * comb.delta_t_ps;
    let (raw, bins) = (0..hist.n_bins())
        .filter(|&i| {
            let x = hist.bin_center_ps(i);
            x >= lo && x < hi
        })
        .fold((0u64, 0usize), |(s, n), i| (s + hist.counts[i], n + 1));
    let area = if corrected {
        raw as f64 - floor * bins as f64
    } else {
        raw as f64
    };
    PeakArea {
        index: k,
        center_ps: c,
        raw_counts: raw,
        bins,
        area,
        error: (raw as f64).sqrt(),
    }
}

/// Integrates the pulsed correlation peaks and forms g²(0, Δt).
///
/// The ratio error propagates the standard deviation `s` of the normalizing
/// side areas: `σ_g = g·(s/M)·√(1 + 1/n)`, treating the central area as one
/// more draw with the same relative scatter.
pub fn integrate_peaks(
    hist: &CorrelationHistogram,
    comb: &PeakComb,
    selection: PeakSelection,
    floor: f64,
    corrected: bool,
) -> Result<PeakAnalysis> {
    comb.validate()?;
    if selection.n_side == 0 {
        return Err(Error::config("n_side must be at least 1"));
    }
    let used = side_indices(selection.n_side);
    let reach = used
        .iter()
        .map(|k| k.unsigned_abs())
        .max()
        .unwrap()
        .max(selection.display_per_side as u64) as f64;
    let w = hist.window_ps as f64;
    if comb.offset_ps.abs() + reach * comb.period_ps + 0.5 * comb.delta_t_ps > w {
        return Err(Error::config(format!(
            "peaks up to |k| = {reach} do not fit in the ±{w} ps window"
        )));
    }
    let max_k = reach as i64;
    let peaks: Vec<PeakArea> = (-max_k..=max_k)
        .map(|k| peak_area(hist, comb, k, floor, corrected))
        .collect();
    let get = |k: i64| &peaks[(k + max_k) as usize];

    let side: Vec<f64> = used.iter().map(|&k| get(k).area).collect();
    let n = side.len() as f64;
    let mean = side.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::numerical("side peaks hold no counts"));
    }
    let sd = if side.len() > 1 {
        (side.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        mean.sqrt()
    };
    let g = get(0).area / mean;
    let err = g.abs() * (sd / mean) * (1.0 + 1.0 / n).sqrt();

    let raw_side = used.iter().map(|&k| get(k).raw_counts as f64).sum::<f64>() / n;
    let floor_side = used
        .iter()
        .map(|&k| floor * get(k).bins as f64)
        .sum::<f64>()
        / n;
    let background_fraction = if raw_side > 0.0 {
        floor_side / raw_side
    } else {
        0.0
    };

    Ok(PeakAnalysis {
        period_ps: comb.period_ps,
        offset_ps: comb.offset_ps,
        integration_window_ps: comb.delta_t_ps,
        peaks,
        floor_per_bin: floor,
        corrected,
        n_side: selection.n_side,
        g2_zero: Estimate::new(g, err),
        background_fraction,
    })
}

/// Zero-delay g² from narrow windows of full width `width_ps` at each peak center.
pub fn postselected_g2(
    hist: &CorrelationHistogram,
    comb: &PeakComb,
    width_ps: f64,
    n_side: usize,
    floor: f64,
) -> Result<Estimate> {
    let narrow = PeakComb {
        delta_t_ps: width_ps,
        ..*comb
    };
    let a = integrate_peaks(
        hist,
        &narrow,
        PeakSelection {
            n_side,
            display_per_side: 0,
        },
        floor,
        floor > 0.0,
    )?;
    let c = a.central();
    let m = a.side_mean();
    let g = c.area / m;
    // Poisson errors on the central window and the summed side windows.
    let raw_side: f64 = a
        .peaks
        .iter()
        .filter(|p| p.index != 0)
        .map(|p| p.raw_counts as f64)
        .sum();
    let rel = (c.raw_counts.max(1) as f64 / c.area.abs().max(1.0).powi(2)
        + raw_side / (m * n_side as f64).powi(2))
    .sqrt();
    Ok(Estimate::new(g, g.abs() * rel))
}

/// Two-photon interference visibility `V = (g_d − g_s)/g_d` from the
/// distinguishable (delayed) and synchronized central-peak ratios.
pub fn hom_visibility(g_delayed: Estimate, g_synced: Estimate) -> Result<Estimate> {
    if !(g_delayed.value > 0.0) {
        return Err(Error::domain(format!(
            "delayed g2 must be positive, got {}",
            g_delayed.value
        )));
    }
    if !(g_synced.value >= 0.0) {
        return Err(Error::domain(format!(
            "synchronized g2 must be non-negative, got {}",
            g_synced.value
        )));
    }
    let gd = g_delayed.value;
    let gs = g_synced.value;
    let v = (gd - gs) / gd;
    let err = ((g_synced.error / gd).powi(2) + (gs * g_delayed.error / (gd * gd)).powi(2)).sqrt();
    Ok(Estimate::new(v, err))
}
