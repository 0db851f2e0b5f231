use crate::error::{Error, Result};

/// Kernel half-width in standard deviations.
pub const KERNEL_HALF_WIDTH_SIGMA: f64 = 5.0;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Bin-integrated Gaussian weights for offsets `−K..=K`, normalized to one.
fn kernel(step: f64, sigma: f64) -> Vec<f64> {
    let k = (KERNEL_HALF_WIDTH_SIGMA * sigma / step).ceil() as i64;
    let mut w: Vec<f64> = (-k..=k)
        .map(|j| {
            let x = j as f64 * step;
            normal_cdf((x + 0.5 * step) / sigma) - normal_cdf((x - 0.5 * step) / sigma)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Convolves uniformly sampled values with a unit-area Gaussian of standard
/// deviation `sigma_ps`, truncated at ±5σ.
///
/// The output has the input's length, with zeros assumed beyond both ends,
/// so the integral is preserved whenever the signal vanishes within 5σ of the
/// edges. A `sigma_ps` below one hundredth of the step returns the input.
pub fn convolve_gaussian(samples: &[f64], step_ps: f64, sigma_ps: f64) -> Result<Vec<f64>> {
    if !(step_ps > 0.0) || !(sigma_ps >= 0.0) {
        return Err(Error::config(format!(
            "invalid step {step_ps} or sigma {sigma_ps}"
        )));
    }
    if sigma_ps < step_ps / 100.0 {
        return Ok(samples.to_vec());
    }
    if step_ps > sigma_ps / 4.0 {
        return Err(Error::config(format!(
            "grid step {step_ps} ps is coarser than sigma/4 = {} ps",
            sigma_ps / 4.0
        )));
    }
    let w = kernel(step_ps, sigma_ps);
    let k = (w.len() / 2) as isize;
    let n = samples.len() as isize;
    Ok((0..n)
        .map(|i| {
            let lo = (i - k).max(0);
            let hi = (i + k).min(n - 1);
            (lo..=hi)
                .map(|j| samples[j as usize] * w[(i - j + k) as usize])
                .sum()
        })
        .collect())
}
