use serde::{Deserialize, Serialize};

use super::convolve::{convolve_gaussian, KERNEL_HALF_WIDTH_SIGMA};
use super::solver::{nlls_solve, Bounds, FitResult, FitStatus, Problem};
use crate::error::{Error, Result};
use crate::model::fwhm_to_sigma;

/// Binned samples on a uniform grid; bin `i` covers
/// `[start + i·step, start + (i+1)·step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSeries {
    pub start_ps: f64,
    pub step_ps: f64,
    pub values: Vec<f64>,
}

impl UniformSeries {
    pub fn center(&self, i: usize) -> f64 {
        self.start_ps + (i as f64 + 0.5) * self.step_ps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn end_ps(&self) -> f64 {
        self.start_ps + self.values.len() as f64 * self.step_ps
    }
}

/// Bin averages of `cell_mean` convolved with a Gaussian of std `sigma`.
///
/// `cell_mean(a, b)` is the mean of the continuous model over `[a, b)`. When
/// the IRF is resolved the model is averaged on a grid of step ≤ σ/4 that
/// extends 5σ past both ends, convolved, and averaged back into the bins.
fn render(
    start: f64,
    step: f64,
    n: usize,
    sigma: f64,
    cell_mean: &dyn Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    if sigma < step / 100.0 {
        return Ok((0..n)
            .map(|i| {
                let a = start + i as f64 * step;
                cell_mean(a, a + step)
            })
            .collect());
    }
    let sub = (step / (sigma / 4.0)).ceil().max(1.0) as usize;
    let h = step / sub as f64;
    let ext = (KERNEL_HALF_WIDTH_SIGMA * sigma / h).ceil() as usize;
    let total = n * sub + 2 * ext;
    let origin = start - ext as f64 * h;
    let fine: Vec<f64> = (0..total)
        .map(|i| {
            let a = origin + i as f64 * h;
            cell_mean(a, a + h)
        })
        .collect();
    let blurred = convolve_gaussian(&fine, h, sigma)?;
    Ok((0..n)
        .map(|i| {
            let lo = ext + i * sub;
            blurred[lo..lo + sub].iter().sum::<f64>() / sub as f64
        })
        .collect())
}

/// Mean over `[a, b)` of `e^{−(t−t0)/τ}` for `t ≥ t0` and zero before.
fn exp_cell(a: f64, b: f64, t0: f64, tau: f64) -> f64 {
    if b <= t0 {
        return 0.0;
    }
    let ua = (a - t0).max(0.0);
    let ub = b - t0;
    tau * ((-ua / tau).exp() - (-ub / tau).exp()) / (b - a)
}

/// Mean over `[a, b)` of the periodic continuation of a unit exponential
/// restarted every `period` at `t0 + k·period`.
fn exp_cell_periodic(a: f64, b: f64, t0: f64, tau: f64, period: f64) -> f64 {
    let norm = 1.0 / (-(-period / tau).exp_m1());
    let ua = (a - t0).rem_euclid(period);
    let ub = ua + (b - a);
    let part = |x: f64, y: f64| tau * ((-x / tau).exp() - (-y / tau).exp());
    let s = if ub <= period {
        part(ua, ub)
    } else {
        part(ua, period) + part(0.0, ub - period)
    };
    norm * s / (b - a)
}

pub const BIEXP_NAMES: [&str; 6] = [
    "amplitude",
    "slow_fraction",
    "tau_fast_ps",
    "tau_slow_ps",
    "t0_ps",
    "baseline",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiexpOptions {
    pub irf_fwhm_ps: f64,
    /// Laser period when the trace is folded modulo the period; the decay
    /// tails of earlier pulses then wrap around.
    pub period_ps: Option<f64>,
    /// Starting point in `BIEXP_NAMES` order; guessed from the data when absent.
    pub init: Option<[f64; 6]>,
}

/// Expected counts per bin for `p = [A, f, τ_f, τ_s, t0, baseline]`:
/// `baseline + A·step·[(1−f)/τ_f·e^{−(t−t0)/τ_f} + f/τ_s·e^{−(t−t0)/τ_s}]·θ(t−t0) ⊗ G`.
///
/// `A` is the total decay counts and `f` the slow intensity fraction.
pub fn biexp_model(series: &UniformSeries, p: &[f64], opts: &BiexpOptions) -> Result<Vec<f64>> {
    let [amp, f, tf, ts, t0, base] = [p[0], p[1], p[2], p[3], p[4], p[5]];
    let step = series.step_ps;
    let cell = |a: f64, b: f64| -> f64 {
        let (ef, es) = match opts.period_ps {
            Some(period) => (
                exp_cell_periodic(a, b, t0, tf, period),
                exp_cell_periodic(a, b, t0, ts, period),
            ),
            None => (exp_cell(a, b, t0, tf), exp_cell(a, b, t0, ts)),
        };
        amp * step * ((1.0 - f) / tf * ef + f / ts * es)
    };
    let sigma = fwhm_to_sigma(opts.irf_fwhm_ps);
    Ok(render(series.start_ps, step, series.len(), sigma, &cell)?
        .into_iter()
        .map(|v| v + base)
        .collect())
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn biexp_guess(series: &UniformSeries) -> [f64; 6] {
    let y = &series.values;
    let base = percentile(y, 0.05).max(0.0);
    let (ip, &peak) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let height = peak - base;
    let fall = y[ip..]
        .iter()
        .position(|&v| v - base < height / std::f64::consts::E)
        .unwrap_or(y.len() - ip);
    let tau_f = (fall as f64 * series.step_ps).max(2.0 * series.step_ps);
    let amp: f64 = y.iter().map(|v| (v - base).max(0.0)).sum();
    [
        amp.max(1.0),
        0.05,
        tau_f,
        10.0 * tau_f,
        series.start_ps + ip as f64 * series.step_ps,
        base,
    ]
}

/// Puts the shorter lifetime first, mapping `f → 1 − f`.
fn canonicalize_biexp(fit: &mut FitResult) {
    if fit.params[2] <= fit.params[3] {
        return;
    }
    fit.params.swap(2, 3);
    fit.params[1] = 1.0 - fit.params[1];
    // Linear map: swap rows 2 and 3, negate row 1.
    let m = fit.params.len();
    let t = |i: usize| -> (usize, f64) {
        match i {
            1 => (1, -1.0),
            2 => (3, 1.0),
            3 => (2, 1.0),
            k => (k, 1.0),
        }
    };
    let old = fit.covariance.clone();
    for i in 0..m {
        for k in 0..m {
            let (si, ai) = t(i);
            let (sk, ak) = t(k);
            fit.covariance[i][k] = ai * ak * old[si][sk];
        }
    }
    fit.errors.swap(2, 3);
}

/// Bi-exponential decay fit with the instrument response convolved in and
/// Poisson weights `σ = √max(y, 1)`. The result satisfies `τ_fast ≤ τ_slow`.
pub fn fit_biexp_irf(series: &UniformSeries, opts: &BiexpOptions) -> Result<FitResult> {
    if series.len() < 8 {
        return Err(Error::config("decay trace needs at least 8 bins"));
    }
    let init = opts.init.unwrap_or_else(|| biexp_guess(series));
    let sigma: Vec<f64> = series.values.iter().map(|&y| y.max(1.0).sqrt()).collect();
    let model = |p: &[f64]| biexp_model(series, p, opts);
    let bounds = Bounds {
        lower: vec![
            0.0,
            0.0,
            1e-3,
            1e-3,
            series.start_ps - series.step_ps * series.len() as f64,
            f64::NEG_INFINITY,
        ],
        upper: vec![
            f64::INFINITY,
            1.0,
            f64::INFINITY,
            f64::INFINITY,
            series.end_ps(),
            f64::INFINITY,
        ],
    };
    let problem = Problem {
        model: &model,
        y: &series.values,
        sigma: Some(&sigma),
        names: &BIEXP_NAMES,
    };
    let mut fit = nlls_solve(&problem, &init, Some(&bounds))?;
    canonicalize_biexp(&mut fit);
    let peak_t = fit.get("t0_ps");
    if series.end_ps() - peak_t < 3.0 * fit.get("tau_fast_ps") {
        fit.warnings
            .push("trace covers less than 3 fast lifetimes after the onset".into());
    }
    Ok(fit)
}

pub const G2CW_NAMES: [&str; 3] = ["g0", "tau_d_ps", "amplitude"];

/// Mean over `[a, b)` of `e^{−|τ|/τ_d}`.
fn two_sided_exp_cell(a: f64, b: f64, tau: f64) -> f64 {
    let prim = |x: f64| {
        // Antiderivative of e^{−|x|/τ}, continuous at zero.
        if x >= 0.0 {
            tau * (1.0 - (-x / tau).exp())
        } else {
            -tau * (1.0 - (x / tau).exp())
        }
    };
    (prim(b) - prim(a)) / (b - a)
}

/// `amplitude·[1 − (1 − g0)·e^{−|τ|/τ_d}] ⊗ G` for `p = [g0, τ_d, amplitude]`.
pub fn g2cw_model(series: &UniformSeries, p: &[f64], irf_fwhm_ps: f64) -> Result<Vec<f64>> {
    let [g0, td, amp] = [p[0], p[1], p[2]];
    let cell = |a: f64, b: f64| amp * (1.0 - (1.0 - g0) * two_sided_exp_cell(a, b, td));
    render(
        series.start_ps,
        series.step_ps,
        series.len(),
        fwhm_to_sigma(irf_fwhm_ps),
        &cell,
    )
}

/// Antibunching dip fit to a histogram normalized to one at long delays.
pub fn fit_g2cw(
    series: &UniformSeries,
    sigma: Option<&[f64]>,
    irf_fwhm_ps: f64,
    init: Option<[f64; 3]>,
) -> Result<FitResult> {
    let y = &series.values;
    if y.len() < 8 {
        return Err(Error::config("g2 histogram needs at least 8 bins"));
    }
    let init = init.unwrap_or_else(|| {
        let amp = percentile(y, 0.75).max(1e-12);
        let g0 = (percentile(y, 0.0) / amp).clamp(0.0, 1.0);
        let half = 0.5 * (1.0 + g0) * amp;
        let below = y.iter().filter(|&&v| v < half).count().max(1);
        let td =
            (below as f64 * series.step_ps / (2.0 * std::f64::consts::LN_2)).max(series.step_ps);
        [g0, td, amp]
    });
    let model = |p: &[f64]| g2cw_model(series, p, irf_fwhm_ps);
    let bounds = Bounds {
        lower: vec![0.0, 1e-3, 0.0],
        upper: vec![f64::INFINITY; 3],
    };
    let problem = Problem {
        model: &model,
        y,
        sigma,
        names: &G2CW_NAMES,
    };
    let mut fit = nlls_solve(&problem, &init, Some(&bounds))?;
    let g0 = fit.get("g0");
    if fit.status == FitStatus::Singular || (1.0 - g0).abs() < 2.0 * fit.error("g0") {
        fit.warnings
            .push("no significant antibunching dip; tau_d is unconstrained".into());
    }
    Ok(fit)
}

pub const LORENTZIAN_NAMES: [&str; 4] = ["e0_uev", "fwhm_uev", "area", "baseline"];

/// `baseline + (2·area/π)·fwhm / (4(E − E0)² + fwhm²)`.
pub fn lorentzian(e: f64, p: &[f64]) -> f64 {
    let [e0, w, area, base] = [p[0], p[1], p[2], p[3]];
    base + (2.0 * area / std::f64::consts::PI) * w / (4.0 * (e - e0).powi(2) + w * w)
}

/// Unweighted Lorentzian line fit.
pub fn fit_lorentzian(energy_uev: &[f64], intensity: &[f64]) -> Result<FitResult> {
    if energy_uev.len() != intensity.len() {
        return Err(Error::config(
            "energy and intensity columns differ in length",
        ));
    }
    if energy_uev.len() < 5 {
        return Err(Error::config("a line fit needs at least 5 points"));
    }
    let base = percentile(intensity, 0.0);
    let (ip, &peak) = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let h = peak - base;
    let lo = energy_uev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = energy_uev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let above: Vec<f64> = energy_uev
        .iter()
        .zip(intensity)
        .filter(|(_, &y)| y - base >= 0.5 * h)
        .map(|(&e, _)| e)
        .collect();
    let span = above.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().cloned().fold(f64::INFINITY, f64::min);
    let w0 = if h > 0.0 && span > 0.0 {
        span
    } else {
        (hi - lo) / 4.0
    };
    let init = [
        energy_uev[ip],
        w0,
        0.5 * std::f64::consts::PI * h * w0,
        base,
    ];
    let model = |p: &[f64]| Ok(energy_uev.iter().map(|&e| lorentzian(e, p)).collect());
    let bounds = Bounds {
        lower: vec![
            f64::NEG_INFINITY,
            1e-9,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ],
        upper: vec![f64::INFINITY; 4],
    };
    let problem = Problem {
        model: &model,
        y: intensity,
        sigma: None,
        names: &LORENTZIAN_NAMES,
    };
    let mut fit = nlls_solve(&problem, &init, Some(&bounds))?;
    if fit.status == FitStatus::Singular {
        fit.warnings
            .push("no line found; width and position unconstrained".into());
    } else if hi - lo < 2.0 * fit.get("fwhm_uev") {
        fit.warnings
            .push("spectrum spans less than two linewidths".into());
    }
    Ok(fit)
}

/// Intrinsic width of a Lorentzian line measured through a Lorentzian
/// instrument response: widths add, so the intrinsic width is the difference.
pub fn deconvolve_lorentzian(fwhm_measured: f64, fwhm_instrument: f64) -> Result<f64> {
    if !(fwhm_instrument >= 0.0) || !(fwhm_measured >= fwhm_instrument) {
        return Err(Error::domain(format!(
            "need measured width {fwhm_measured} ≥ instrument width {fwhm_instrument} ≥ 0"
        )));
    }
    Ok(fwhm_measured - fwhm_instrument)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn poisson_noise(y: &[f64], seed: u64) -> Vec<f64> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        y.iter()
            .map(|&m| {
                if m > 0.0 {
                    Poisson::new(m).unwrap().sample(&mut r)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn grid(start: f64, step: f64, n: usize) -> UniformSeries {
        UniformSeries {
            start_ps: start,
            step_ps: step,
            values: vec![0.0; n],
        }
    }

    fn synthetic_decay(truth: [f64; 6], seed: u64) -> UniformSeries {
        let g = grid(0.0, 20.0, 2500);
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            ..Default::default()
        };
        let mean = biexp_model(&g, &truth, &opts).unwrap();
        UniformSeries {
            values: poisson_noise(&mean, seed),
            ..g
        }
    }

    #[test]
    fn cells_match_midpoint_sums() {
        let fine = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
            let n = 20_000;
            (0..n)
                .map(|i| f(a + (i as f64 + 0.5) * (b - a) / n as f64))
                .sum::<f64>()
                / n as f64
        };
        let e = |t: f64| {
            if t >= 100.0 {
                (-(t - 100.0) / 300.0).exp()
            } else {
                0.0
            }
        };
        assert!((exp_cell(90.0, 130.0, 100.0, 300.0) - fine(90.0, 130.0, &e)).abs() < 1e-8);
        let period = 1000.0;
        let ep = |t: f64| (0..60).map(|k| e(t + k as f64 * period)).sum::<f64>();
        for (a, b) in [(50.0, 80.0), (90.0, 130.0), (990.0, 1030.0)] {
            let x = exp_cell_periodic(a, b, 100.0, 300.0, period);
            assert!((x - fine(a, b, &ep)).abs() < 1e-6, "{a} {b}");
        }
        let two = |t: f64| (-(t.abs()) / 50.0).exp();
        assert!((two_sided_exp_cell(-13.0, 29.0, 50.0) - fine(-13.0, 29.0, &two)).abs() < 1e-8);
    }

    #[test]
    fn recovers_reference_decay() {
        let truth = [3.7e6, 0.02, 720.0, 12_000.0, 2_000.0, 5.0];
        let data = synthetic_decay(truth, 1);
        let fit = fit_biexp_irf(
            &data,
            &BiexpOptions {
                irf_fwhm_ps: 80.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fit.status, FitStatus::Converged, "{fit:?}");
        assert!((fit.get("tau_fast_ps") / 720.0 - 1.0).abs() < 0.05);
        assert!((fit.get("tau_slow_ps") / 12_000.0 - 1.0).abs() < 0.15);
        assert!((fit.chi2_red - 1.0).abs() < 0.2, "{}", fit.chi2_red);
    }

    #[test]
    fn mono_exponential_degenerate_mixture() {
        let truth = [1e6, 0.0, 720.0, 12_000.0, 2_000.0, 5.0];
        let data = synthetic_decay(truth, 2);
        let fit = fit_biexp_irf(
            &data,
            &BiexpOptions {
                irf_fwhm_ps: 80.0,
                ..Default::default()
            },
        )
        .unwrap();
        let tf = fit.get("tau_fast_ps").min(fit.get("tau_slow_ps"));
        assert!((tf / 720.0 - 1.0).abs() < 0.02, "{fit:?}");
        let f = fit.get("slow_fraction");
        assert!(
            f <= 2.0 * fit.error("slow_fraction") + 1e-9 || f.min(1.0 - f) < 1e-3,
            "{fit:?}"
        );
    }

    #[test]
    fn shifted_onset_same_lifetimes() {
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            ..Default::default()
        };
        let a = fit_biexp_irf(
            &synthetic_decay([3.7e6, 0.02, 720.0, 12_000.0, 2_000.0, 5.0], 3),
            &opts,
        )
        .unwrap();
        let b = fit_biexp_irf(
            &synthetic_decay([3.7e6, 0.02, 720.0, 12_000.0, 3_000.0, 5.0], 3),
            &opts,
        )
        .unwrap();
        assert!((b.get("t0_ps") - a.get("t0_ps") - 1000.0).abs() < 5.0);
        assert!(
            (a.get("tau_fast_ps") - b.get("tau_fast_ps")).abs()
                < 3.0 * a.error("tau_fast_ps") + 5.0
        );
    }

    #[test]
    fn swapped_labels_same_curve() {
        let g = grid(0.0, 20.0, 400);
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            ..Default::default()
        };
        let a = biexp_model(&g, &[1e5, 0.3, 500.0, 3000.0, 1000.0, 1.0], &opts).unwrap();
        let b = biexp_model(&g, &[1e5, 0.7, 3000.0, 500.0, 1000.0, 1.0], &opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn canonical_order_enforced() {
        let truth = [2e6, 0.3, 600.0, 4000.0, 1500.0, 2.0];
        let data = synthetic_decay(truth, 5);
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            period_ps: None,
            init: Some([2e6, 0.7, 4000.0, 600.0, 1500.0, 2.0]),
        };
        let fit = fit_biexp_irf(&data, &opts).unwrap();
        assert!(fit.get("tau_fast_ps") < fit.get("tau_slow_ps"));
        assert!((fit.get("slow_fraction") - 0.3).abs() < 0.02);
    }

    #[test]
    fn folded_trace_model() {
        // At 76 MHz a 12 ns tail is nearly flat across the period and trades
        // off against the baseline; the reduced 19 MHz rate resolves it.
        let period: f64 = 1e6 / 19.0;
        let truth = [1e7, 0.02, 720.0, 12_000.0, 1_000.0, 3.0];
        let n = (period / 20.0).floor() as usize;
        let g = grid(0.0, 20.0, n);
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            period_ps: Some(period),
            init: None,
        };
        let data = UniformSeries {
            values: poisson_noise(&biexp_model(&g, &truth, &opts).unwrap(), 9),
            ..g
        };
        let fit = fit_biexp_irf(&data, &opts).unwrap();
        assert!(
            (fit.get("tau_fast_ps") / 720.0 - 1.0).abs() < 0.05,
            "{fit:?}"
        );
        assert!(
            (fit.get("tau_slow_ps") / 12_000.0 - 1.0).abs() < 0.15,
            "{fit:?}"
        );
    }

    #[test]
    fn g2cw_recovery() {
        let g = grid(-5_000.0, 10.0, 1000);
        let truth = [0.15, 500.0, 1.0];
        let mean = g2cw_model(&g, &truth, 80.0).unwrap();
        let scale = 2_000.0;
        let counts = poisson_noise(&mean.iter().map(|m| m * scale).collect::<Vec<_>>(), 4);
        let y: Vec<f64> = counts.iter().map(|c| c / scale).collect();
        let s: Vec<f64> = counts.iter().map(|c| c.max(1.0).sqrt() / scale).collect();
        let fit = fit_g2cw(&UniformSeries { values: y, ..g }, Some(&s), 80.0, None).unwrap();
        assert!(
            (fit.get("g0") - 0.15).abs() < 3.0 * fit.error("g0"),
            "{fit:?}"
        );
        assert!(
            (fit.get("tau_d_ps") - 500.0).abs() < 3.0 * fit.error("tau_d_ps"),
            "{fit:?}"
        );
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn g2cw_flat_flagged() {
        let g = grid(-2_000.0, 10.0, 400);
        let fit = fit_g2cw(
            &UniformSeries {
                values: vec![1.0; 400],
                ..g
            },
            None,
            80.0,
            None,
        )
        .unwrap();
        assert!(!fit.warnings.is_empty());
        assert!((fit.get("g0") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn g2cw_irf_bias_reproduced_by_forward_model() {
        let g = grid(-3_000.0, 10.0, 600);
        let truth = [0.1, 60.0, 1.0];
        let wide_irf = 400.0;
        let data = g2cw_model(&g, &truth, wide_irf).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let nrm = Normal::new(0.0, 0.005).unwrap();
        let y: Vec<f64> = data.iter().map(|v| v + nrm.sample(&mut r)).collect();
        // Ignoring the IRF biases g0 upward.
        let naive = fit_g2cw(
            &UniformSeries {
                values: y.clone(),
                ..g.clone()
            },
            None,
            0.0,
            None,
        )
        .unwrap();
        assert!(naive.get("g0") > 0.5);
        let forward_min = data.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(forward_min > 0.5);
        let full = fit_g2cw(&UniformSeries { values: y, ..g }, None, wide_irf, None).unwrap();
        assert!(
            (full.get("g0") - 0.1).abs() < 2.0 * full.error("g0") + 0.05,
            "{full:?}"
        );
    }

    #[test]
    fn lorentzian_exact() {
        let e: Vec<f64> = (0..81).map(|i| -60.0 + 1.5 * i as f64).collect();
        let truth = [3.0, 16.5, 200.0, 1.0];
        let y: Vec<f64> = e.iter().map(|&x| lorentzian(x, &truth)).collect();
        let fit = fit_lorentzian(&e, &y).unwrap();
        for (p, t) in fit.params.iter().zip(truth) {
            assert!((p - t).abs() < 1e-6 * t.abs().max(1.0), "{fit:?}");
        }
    }

    #[test]
    fn lorentzian_widths_add() {
        // Numerical convolution of two unit-area lines of 13.5 and 3.0 µeV.
        let h = 0.01;
        let e: Vec<f64> = (0..121).map(|i| -60.0 + i as f64).collect();
        let y: Vec<f64> = e
            .iter()
            .map(|&x| {
                (-200_000..=200_000)
                    .map(|k| {
                        let u = k as f64 * h;
                        lorentzian(u, &[0.0, 13.5, 1.0, 0.0])
                            * lorentzian(x - u, &[0.0, 3.0, 1.0, 0.0])
                    })
                    .sum::<f64>()
                    * h
            })
            .collect();
        let fit = fit_lorentzian(&e, &y).unwrap();
        assert!((fit.get("fwhm_uev") - 16.5).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn lorentzian_flat_flagged() {
        let e: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let fit = fit_lorentzian(&e, &[4.0; 20]).unwrap();
        assert_eq!(fit.status, FitStatus::Singular);
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn deconvolution() {
        assert_eq!(deconvolve_lorentzian(16.5, 3.0).unwrap(), 13.5);
        assert_eq!(deconvolve_lorentzian(6.0, 3.0).unwrap(), 3.0);
        assert_eq!(deconvolve_lorentzian(7.25, 0.0).unwrap(), 7.25);
        assert!(matches!(
            deconvolve_lorentzian(2.0, 3.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn jacobian_matches_cost_gradient() {
        use super::super::solver::Problem;
        let g = grid(0.0, 20.0, 300);
        let opts = BiexpOptions {
            irf_fwhm_ps: 80.0,
            ..Default::default()
        };
        // Onset away from a fine-grid cell edge, where the model has a kink.
        let p0 = [1e5, 0.1, 500.0, 3000.0, 803.3, 2.0];
        let y: Vec<f64> =
            biexp_model(&g, &[1.1e5, 0.12, 520.0, 2800.0, 790.0, 2.5], &opts).unwrap();
        let model = |p: &[f64]| biexp_model(&g, p, &opts);
        let prob = Problem {
            model: &model,
            y: &y,
            sigma: None,
            names: &BIEXP_NAMES,
        };
        let cost = |p: &[f64]| -> f64 {
            let f = biexp_model(&g, p, &opts).unwrap();
            0.5 * f.iter().zip(&y).map(|(a, b)| (b - a).powi(2)).sum::<f64>()
        };
        let j = prob.jacobian(&p0, &Bounds::unbounded(6)).unwrap();
        let f0 = biexp_model(&g, &p0, &opts).unwrap();
        for k in 0..6 {
            // ∂C/∂p = −Σ (y − f)·∂f/∂p
            let analytic: f64 = -(0..y.len())
                .map(|i| (y[i] - f0[i]) * j[(i, k)])
                .sum::<f64>();
            let h = 1e-4 * p0[k].abs();
            let mut a = p0;
            let mut b = p0;
            a[k] += h;
            b[k] -= h;
            let numeric = (cost(&a) - cost(&b)) / (2.0 * h);
            assert!(
                (analytic - numeric).abs() <= 1e-5 * numeric.abs().max(1e-9),
                "param {k}: {analytic} vs {numeric}"
            );
        }
    }
}
