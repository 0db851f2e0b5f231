//! Circuit calibration: coupler splitting ratio, classical fringe contrast,
//! degree of linear polarization and waveguide propagation loss.

use serde::{Deserialize, Serialize};

use crate::correlate::Estimate;
use crate::error::{Error, Result};
use crate::fitting::{nlls_solve, Bounds, FitStatus, Problem};

/// Output intensities of the two single-input experiments. `i_ab` is the
/// intensity at output `b` with input `a` driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterMeasurement {
    pub i11: f64,
    pub i12: f64,
    pub i21: f64,
    pub i22: f64,
}

impl SplitterMeasurement {
    /// Positional order used on the command line: the bar and cross outputs
    /// of the input-1 experiment, then those of the input-2 experiment.
    pub fn from_bar_cross(i11: f64, i12: f64, i22: f64, i21: f64) -> Self {
        Self { i11, i12, i21, i22 }
    }

    /// The same data with the roles of the two inputs exchanged.
    pub fn swap_inputs(&self) -> Self {
        Self {
            i11: self.i21,
            i12: self.i22,
            i21: self.i11,
            i22: self.i12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingRatio {
    pub r: f64,
    pub t: f64,
    /// Relative collection efficiency of output 1 versus output 2. It cancels
    /// from `r/t` and is reported only as a diagnostic.
    pub outcoupling_imbalance: f64,
}

impl SplittingRatio {
    /// `"48.5:51.5"` style percentages with one decimal.
    pub fn percent_label(&self) -> String {
        format!("{:.1}:{:.1}", 100.0 * self.r, 100.0 * self.t)
    }
}

/// `r/t = √[(I11/I12)·(I22/I21)]`, normalized so that `r + t = 1`.
pub fn splitting_ratio(m: &SplitterMeasurement) -> Result<SplittingRatio> {
    let all = [m.i11, m.i12, m.i21, m.i22];
    if all.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!(
            "splitter intensities must be positive, got {all:?}"
        )));
    }
    let q = ((m.i11 / m.i12) * (m.i22 / m.i21)).sqrt();
    let r = q / (1.0 + q);
    Ok(SplittingRatio {
        r,
        t: 1.0 - r,
        outcoupling_imbalance: ((m.i11 / m.i12) * (m.i21 / m.i22)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremaMode {
    /// Sample maximum and minimum.
    #[default]
    Raw,
    /// 0.5 % and 99.5 % percentiles.
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeResult {
    pub visibility: Estimate,
    pub i_max: f64,
    pub i_min: f64,
    pub warning: Option<String>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn contrast(max: f64, min: f64) -> f64 {
    if max + min <= 0.0 {
        0.0
    } else {
        ((max - min) / (max + min)).clamp(0.0, 1.0)
    }
}

/// Fringe contrast `(I_max − I_min)/(I_max + I_min)` of an intensity trace.
///
/// The error is the difference between the raw and the percentile-clipped
/// contrast, a measure of how much the extrema depend on single samples.
pub fn fringe_visibility(intensity: &[f64], mode: ExtremaMode) -> Result<FringeResult> {
    if intensity.len() < 3 {
        return Err(Error::config("fringe trace needs at least 3 samples"));
    }
    if intensity.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("fringe trace holds non-finite samples"));
    }
    let mut s = intensity.to_vec();
    s.sort_by(f64::total_cmp);
    let raw = (s[s.len() - 1], s[0]);
    let clipped = (quantile(&s, 0.995), quantile(&s, 0.005));
    if raw.0 + raw.1 <= 0.0 {
        return Err(Error::domain("fringe trace has no positive intensity"));
    }
    let (i_max, i_min) = match mode {
        ExtremaMode::Raw => raw,
        ExtremaMode::Percentile => clipped,
    };
    let v = contrast(i_max, i_min);
    let spread = (contrast(raw.0, raw.1) - contrast(clipped.0, clipped.1)).abs();
    let warning = (raw.0 == raw.1).then(|| "flat trace: no fringes".to_string());
    Ok(FringeResult {
        visibility: Estimate::new(v, spread),
        i_max,
        i_min,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DolpMode {
    /// Malus-curve fit.
    #[default]
    Fit,
    /// Raw extrema over the sampled angles.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DolpResult {
    pub dolp: Estimate,
    /// Analyzer angle of maximum transmission, degrees in [0, 180).
    pub angle_deg: f64,
    pub mean_intensity: f64,
}

/// Degree of linear polarization from intensity versus analyzer angle.
///
/// The fit model is `I(θ) = I0·[1 + ρ·cos 2(θ − θ0)]`, whose extrema give
/// `(I_max − I_min)/(I_max + I_min) = ρ`.
pub fn dolp(angles_deg: &[f64], intensity: &[f64], mode: DolpMode) -> Result<DolpResult> {
    if angles_deg.len() != intensity.len() {
        return Err(Error::config(
            "angle and intensity columns differ in length",
        ));
    }
    if angles_deg.len() < 8 {
        return Err(Error::config("DOLP needs at least 8 analyzer angles"));
    }
    let lo = angles_deg.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = angles_deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 180.0 - 360.0 / angles_deg.len() as f64 {
        return Err(Error::config(format!(
            "analyzer angles span {:.1}°, need a half turn",
            hi - lo
        )));
    }
    let (imax_i, &imax) = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let imin = intensity.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    if mode == DolpMode::Raw {
        return Ok(DolpResult {
            dolp: Estimate::exact(contrast(imax, imin)),
            angle_deg: angles_deg[imax_i].rem_euclid(180.0),
            mean_intensity: mean,
        });
    }
    let rad: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let model = |p: &[f64]| {
        Ok(rad
            .iter()
            .map(|&th| p[0] * (1.0 + p[1] * (2.0 * (th - p[2])).cos()))
            .collect())
    };
    let init = [mean, contrast(imax, imin), rad[imax_i]];
    let bounds = Bounds {
        lower: vec![0.0, -1.0, f64::NEG_INFINITY],
        upper: vec![f64::INFINITY, 1.0, f64::INFINITY],
    };
    let problem = Problem {
        model: &model,
        y: intensity,
        sigma: None,
        names: &["i0", "rho", "theta0"],
    };
    let fit = nlls_solve(&problem, &init, Some(&bounds))?;
    let (mut rho, mut theta) = (fit.get("rho"), fit.get("theta0"));
    if rho < 0.0 {
        rho = -rho;
        theta += std::f64::consts::FRAC_PI_2;
    }
    let err = if fit.status == FitStatus::Singular {
        f64::INFINITY
    } else {
        fit.error("rho")
    };
    Ok(DolpResult {
        dolp: Estimate::new(rho, err),
        angle_deg: theta.to_degrees().rem_euclid(180.0),
        mean_intensity: fit.get("i0"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    /// Propagation loss, positive for attenuation.
    pub db_per_mm: Estimate,
    /// Transmitted level extrapolated to zero length, dB.
    pub intercept_db: f64,
}

/// Linear regression of `10·log10(I)` against length.
pub fn fit_loss(distance_mm: &[f64], intensity: &[f64]) -> Result<LossFit> {
    if distance_mm.len() != intensity.len() {
        return Err(Error::config(
            "distance and intensity columns differ in length",
        ));
    }
    let n = distance_mm.len();
    if n < 3 {
        return Err(Error::config("loss fit needs at least 3 distances"));
    }
    if intensity.iter().any(|&i| !(i > 0.0)) {
        return Err(Error::domain("intensities must be positive"));
    }
    let y: Vec<f64> = intensity.iter().map(|i| 10.0 * i.log10()).collect();
    let nf = n as f64;
    let xm = distance_mm.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = distance_mm.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("all distances are equal"));
    }
    let sxy: f64 = distance_mm
        .iter()
        .zip(&y)
        .map(|(x, v)| (x - xm) * (v - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = distance_mm
        .iter()
        .zip(&y)
        .map(|(x, v)| (v - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(LossFit {
        db_per_mm: Estimate::new(-slope, se),
        intercept_db: intercept,
    })
}
