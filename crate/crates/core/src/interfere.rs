//! Closed-form two-photon interference between two independent emitters.
//!
//! Each photon is an exponentially decaying wavepacket (radiative rate γᵢ)
//! subject to Markovian pure dephasing γ*ᵢ. For emission-time difference
//! τ = t₁ − t₂ the two-photon mutual coherence is
//!
//! ```text
//! D(τ) = overlap · cos(Δω·τ) · exp(−|τ|·(γ*₁ + γ*₂))
//! ```
//!
//! and the wavepacket-averaged indistinguishability is `E[D(t₁ − t₂)]` over
//! the two emission-time densities. For identical emitters this reduces to
//! `T2/(2·T1)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{detuning_to_angular, EmitterSpec};

/// Rates entering the two-photon kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceKernelParams {
    /// Radiative rate of source 1, 1/ps.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Pure dephasing rate of source 1, 1/ps.
    pub gstar1: f64,
    pub gstar2: f64,
    /// Angular detuning ω₁ − ω₂, rad/ps.
    pub delta_rad_ps: f64,
    pub pol_overlap: f64,
    /// Beamsplitter intensity reflectance.
    pub reflectance: f64,
}

impl InterferenceKernelParams {
    /// Kernel for two emitters. `delta_uev` is the detuning E₁ − E₂.
    pub fn from_emitters(
        e1: &EmitterSpec,
        e2: &EmitterSpec,
        delta_uev: f64,
        pol_overlap: f64,
        reflectance: f64,
    ) -> Result<Self> {
        e1.validate()?;
        e2.validate()?;
        if !(0.0..=1.0).contains(&pol_overlap) {
            return Err(Error::config(format!(
                "pol_overlap must lie in [0, 1], got {pol_overlap}"
            )));
        }
        if !(reflectance > 0.0 && reflectance < 1.0) {
            return Err(Error::config(format!(
                "reflectance must lie in (0, 1), got {reflectance}"
            )));
        }
        if !delta_uev.is_finite() {
            return Err(Error::domain("detuning must be finite"));
        }
        Ok(Self {
            gamma1: e1.radiative_rate(),
            gamma2: e2.radiative_rate(),
            gstar1: e1.pure_dephasing_rate(),
            gstar2: e2.pure_dephasing_rate(),
            delta_rad_ps: detuning_to_angular(delta_uev),
            pol_overlap,
            reflectance,
        })
    }

    /// Combined dephasing rate `a = γ*₁ + γ*₂`.
    pub fn dephasing(&self) -> f64 {
        self.gstar1 + self.gstar2
    }

    pub fn transmittance(&self) -> f64 {
        1.0 - self.reflectance
    }
}

/// Two-photon mutual coherence D(τ).
pub fn coherence_kernel(tau_ps: f64, params: &InterferenceKernelParams) -> f64 {
    coherence_kernel_detuned(tau_ps, params, 0.0)
}

/// D(τ) with an additional angular detuning on top of the static one
/// (used for per-photon spectral-diffusion offsets).
pub fn coherence_kernel_detuned(
    tau_ps: f64,
    params: &InterferenceKernelParams,
    extra_rad_ps: f64,
) -> f64 {
    let w = params.delta_rad_ps + extra_rad_ps;
    params.pol_overlap * (w * tau_ps).cos() * (-tau_ps.abs() * params.dephasing()).exp()
}

/// Probability density of τ = t₁ − t₂ for two independent exponential wavepackets,
/// integrating to one.
pub fn envelope_correlation(tau_ps: f64, params: &InterferenceKernelParams) -> f64 {
    let (g1, g2) = (params.gamma1, params.gamma2);
    let k = g1 * g2 / (g1 + g2);
    if tau_ps >= 0.0 {
        k * (-g1 * tau_ps).exp()
    } else {
        k * (g2 * tau_ps).exp()
    }
}

/// `(e^{-γδ} − e^{-Aδ}) / (A − γ)`, stable when `A ≈ γ`.
fn exp_difference_quotient(gamma: f64, a: Complex64, delta: f64) -> Complex64 {
    let d = a - gamma;
    let x = d * delta;
    if x.norm() < 1e-5 {
        // e^{-γδ}·(1 − e^{-x})/d with the series 1 − e^{-x} = x − x²/2 + x³/6
        let series = Complex64::new(1.0, 0.0) - x / 2.0 + x * x / 6.0;
        (-gamma * delta).exp() * delta * series
    } else {
        ((-gamma * delta).exp() - (-a * delta).exp()) / d
    }
}

/// Expected overlap `E[D(t₁ − t₂ − δ)]` when source 2 is emitted `delay_ps` later
/// than source 1. Includes `pol_overlap`; `delay_ps = 0` gives the visibility.
pub fn overlap_closed_form(params: &InterferenceKernelParams, delay_ps: f64) -> f64 {
    // Negative delays are the mirror problem with the two sources swapped.
    let (g1, g2, delta) = if delay_ps >= 0.0 {
        (params.gamma1, params.gamma2, delay_ps)
    } else {
        (params.gamma2, params.gamma1, -delay_ps)
    };
    // Detuning sign does not matter: D depends on it only through cos.
    let a = Complex64::new(params.dephasing(), params.delta_rad_ps.abs());
    let k = g1 * g2 / (g1 + g2);
    let decay_a = (-a * delta).exp();
    let before = decay_a / (a + g2);
    let between = exp_difference_quotient(g1, a, delta);
    let after = (-g1 * delta).exp() / (a + g1);
    params.pol_overlap * k * (before + between + after).re
}

/// Wavepacket-averaged two-photon visibility of two emitters,
/// `V = overlap · γ₁γ₂ · Re[(γ₁+γ₂+2A) / ((γ₁+A)(γ₂+A)(γ₁+γ₂))]` with
/// `A = γ*₁ + γ*₂ + iΔω`.
pub fn visibility_closed_form(
    e1: &EmitterSpec,
    e2: &EmitterSpec,
    delta_uev: f64,
    pol_overlap: f64,
) -> Result<f64> {
    let p = InterferenceKernelParams::from_emitters(e1, e2, delta_uev, pol_overlap, 0.5)?;
    let a = Complex64::new(p.dephasing(), p.delta_rad_ps);
    let (g1, g2) = (p.gamma1, p.gamma2);
    let v = g1 * g2 * ((g1 + g2 + 2.0 * a) / ((g1 + a) * (g2 + a) * (g1 + g2))).re;
    Ok(pol_overlap * v)
}

/// Grid for the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    /// Integration range in each time coordinate, starting at zero.
    pub span_ps: f64,
    pub step_ps: f64,
}

impl QuadratureGrid {
    /// Smallest grid satisfying the coverage and resolution requirements for two emitters.
    pub fn for_emitters(e1: &EmitterSpec, e2: &EmitterSpec) -> Self {
        Self {
            span_ps: 10.0 * e1.t1_fast_ps.max(e2.t1_fast_ps),
            step_ps: min_time_scale(e1, e2) / 50.0,
        }
    }

    fn check(&self, e1: &EmitterSpec, e2: &EmitterSpec) -> Result<()> {
        let need_span = 10.0 * e1.t1_fast_ps.max(e2.t1_fast_ps);
        let need_step = min_time_scale(e1, e2) / 50.0;
        if !(self.span_ps >= need_span * (1.0 - 1e-12)) {
            return Err(Error::config(format!(
                "quadrature span {} ps is shorter than 10·max(T1) = {need_span} ps",
                self.span_ps
            )));
        }
        if !(self.step_ps > 0.0 && self.step_ps <= need_step * (1.0 + 1e-12)) {
            return Err(Error::config(format!(
                "quadrature step {} ps exceeds min(T1, T2)/50 = {need_step} ps",
                self.step_ps
            )));
        }
        Ok(())
    }
}

fn min_time_scale(e1: &EmitterSpec, e2: &EmitterSpec) -> f64 {
    [e1.t1_fast_ps, e2.t1_fast_ps, e1.t2_ps, e2.t2_ps]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Composite Simpson weights for `n` intervals (n even) of width `h`.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Quadrature evaluation of `E[D(t₁ − t₂ − δ)]` from the defining double integral
/// over the two emission-time densities. Independent of [`overlap_closed_form`].
///
/// The square `[0, L]²` is mapped to `u = min(t₁, t₂)` and `s = |t₁ − t₂|`, which
/// puts the kink of `|τ|` on the boundary `s = 0`. In those coordinates the
/// integrand factorizes into a `u` part and an `s` part, so the tensor-product
/// Simpson sum is accumulated as a product of two 1-D sums.
pub fn overlap_numeric(
    e1: &EmitterSpec,
    e2: &EmitterSpec,
    params: &InterferenceKernelParams,
    delay_ps: f64,
    grid: QuadratureGrid,
) -> Result<f64> {
    grid.check(e1, e2)?;
    let mut n = (grid.span_ps / grid.step_ps).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let h = grid.span_ps / n as f64;
    let w = simpson_weights(n, h);
    let (g1, g2) = (params.gamma1, params.gamma2);

    let mut u_sum = 0.0;
    let mut s_num = 0.0;
    let mut s_den = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let x = i as f64 * h;
        u_sum += wi * (-(g1 + g2) * x).exp();
        // Branch t₁ = u + s (source 1 later) and branch t₂ = u + s (source 2 later).
        let later1 = g1 * g2 * (-g1 * x).exp();
        let later2 = g1 * g2 * (-g2 * x).exp();
        s_num += wi
            * (later1 * coherence_kernel(x - delay_ps, params)
                + later2 * coherence_kernel(-x - delay_ps, params));
        s_den += wi * (later1 + later2);
    }
    let num = u_sum * s_num;
    let den = u_sum * s_den;
    if !(den > 0.0) {
        return Err(Error::Numerical("quadrature normalization vanished".into()));
    }
    Ok(num / den)
}

/// Quadrature oracle for [`visibility_closed_form`].
pub fn visibility_numeric(
    e1: &EmitterSpec,
    e2: &EmitterSpec,
    delta_uev: f64,
    pol_overlap: f64,
    grid: QuadratureGrid,
) -> Result<f64> {
    let p = InterferenceKernelParams::from_emitters(e1, e2, delta_uev, pol_overlap, 0.5)?;
    overlap_numeric(e1, e2, &p, 0.0, grid)
}

/// Post-selected visibility assuming the distinguishable zero-delay level is 0.5,
/// `V' = (0.5 − g)/0.5`. Values above 0.5 give a negative V' which is returned as is.
pub fn postselected_visibility(g_hom_zero: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&g_hom_zero) {
        return Err(Error::domain(format!(
            "g2_HOM(0) must lie in [0, 1], got {g_hom_zero}"
        )));
    }
    Ok((0.5 - g_hom_zero) / 0.5)
}

/// Probability that an interfering pair with mutual coherence `d` leaves through
/// different output ports: `r² + t² − 2rt·d`.
pub fn coincidence_probability(reflectance: f64, d: f64) -> f64 {
    let t = 1.0 - reflectance;
    reflectance * reflectance + t * t - 2.0 * reflectance * t * d
}

/// Cross-port coincidence density of the central HOM peak versus delay τ, in
/// units where each side peak integrates to one.
///
/// `c(τ) = w(τ)·[r² + t² − 2rt·D(τ)]` with `w` the envelope cross-correlation.
/// For a balanced splitter this is `w(τ)·½·[1 − D(τ)]`.
pub fn predicted_hom_dip(tau_grid_ps: &[f64], params: &InterferenceKernelParams) -> Vec<f64> {
    tau_grid_ps
        .iter()
        .map(|&tau| {
            envelope_correlation(tau, params)
                * coincidence_probability(params.reflectance, coherence_kernel(tau, params))
        })
        .collect()
}

/// Predicted central-peak ratio g²_HOM(0, Δt→∞) of the single-photon pair model
/// for a given excitation delay between the sources.
pub fn predicted_central_ratio(params: &InterferenceKernelParams, delay_ps: f64) -> f64 {
    coincidence_probability(params.reflectance, overlap_closed_form(params, delay_ps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emitter(t1: f64, t2: f64) -> EmitterSpec {
        EmitterSpec {
            t1_fast_ps: t1,
            t2_ps: t2,
            ..EmitterSpec::reference_qd1()
        }
    }

    fn reference_params(delta: f64) -> InterferenceKernelParams {
        InterferenceKernelParams::from_emitters(
            &EmitterSpec::reference_qd1(),
            &EmitterSpec::reference_qd2(),
            delta,
            1.0,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        let p = reference_params(0.0);
        assert_eq!(coherence_kernel(0.0, &p), 1.0);
        assert!(coherence_kernel(1e6, &p).abs() < 1e-300);
        // a = 0.010745..., D(100) = exp(-100 a)
        let d = coherence_kernel(100.0, &p);
        assert!((d - (-100.0 * p.dephasing()).exp()).abs() < 1e-15);
        assert!((d - 0.3415).abs() < 1e-3);
        assert_eq!(coherence_kernel(37.0, &p), coherence_kernel(-37.0, &p));
    }

    #[test]
    fn reference_visibility() {
        // Frozen from the quadrature oracle (visibility_numeric, default grid).
        let v = visibility_closed_form(
            &EmitterSpec::reference_qd1(),
            &EmitterSpec::reference_qd2(),
            0.0,
            1.0,
        )
        .unwrap();
        assert!((v - 0.123_472_6).abs() < 1e-6, "{v}");
        let v5 = visibility_closed_form(
            &EmitterSpec::reference_qd1(),
            &EmitterSpec::reference_qd2(),
            5.0,
            1.0,
        )
        .unwrap();
        assert!((v5 - 0.089_259_2).abs() < 1e-6, "{v5}");
        assert!(v5 < v);
    }

    #[test]
    fn fourier_limited_identical_emitters_fully_interfere() {
        let e = emitter(500.0, 1000.0);
        let v = visibility_closed_form(&e, &e, 0.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let n = visibility_numeric(&e, &e, 0.0, 1.0, QuadratureGrid::for_emitters(&e, &e)).unwrap();
        assert!((n - 1.0).abs() < 1e-3);
    }

    #[test]
    fn identical_emitter_reduction() {
        for (t1, t2) in [
            (720.0, 100.0),
            (600.0, 440.0),
            (300.0, 599.0),
            (1000.0, 5.0),
        ] {
            let e = emitter(t1, t2);
            let v = visibility_closed_form(&e, &e, 0.0, 1.0).unwrap();
            assert!((v - t2 / (2.0 * t1)).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_oracle_matches() {
        let (e1, e2) = (EmitterSpec::reference_qd1(), EmitterSpec::reference_qd2());
        let grid = QuadratureGrid::for_emitters(&e1, &e2);
        for delta in [0.0, 2.5, 5.0] {
            let c = visibility_closed_form(&e1, &e2, delta, 0.95).unwrap();
            let n = visibility_numeric(&e1, &e2, delta, 0.95, grid).unwrap();
            assert!((c - n).abs() < 1e-4, "Δ={delta}: {c} vs {n}");
        }
    }

    #[test]
    fn delayed_overlap_matches_quadrature() {
        let (e1, e2) = (EmitterSpec::reference_qd1(), EmitterSpec::reference_qd2());
        let mut grid = QuadratureGrid::for_emitters(&e1, &e2);
        grid.step_ps /= 4.0;
        for delta in [0.0, 5.0] {
            let p = reference_params(delta);
            for delay in [-500.0, -30.0, 0.0, 1e-9, 250.0, 500.0, 2000.0] {
                let c = overlap_closed_form(&p, delay);
                let n = overlap_numeric(&e1, &e2, &p, delay, grid).unwrap();
                assert!((c - n).abs() < 2e-5, "Δ={delta} δ={delay}: {c} vs {n}");
            }
        }
        // Residual overlap at a 0.5 ns excitation delay.
        assert!((overlap_closed_form(&reference_params(0.0), 500.0) - 0.071_517_8).abs() < 1e-6);
    }

    #[test]
    fn overlap_stable_near_degenerate_rates() {
        // A = γ₁ exactly: the difference quotient hits its removable singularity.
        let p = InterferenceKernelParams {
            gamma1: 0.01,
            gamma2: 0.002,
            gstar1: 0.006,
            gstar2: 0.004,
            delta_rad_ps: 0.0,
            pol_overlap: 1.0,
            reflectance: 0.5,
        };
        let at = overlap_closed_form(&p, 300.0);
        let near = overlap_closed_form(
            &InterferenceKernelParams {
                gstar2: 0.004 + 1e-7,
                ..p
            },
            300.0,
        );
        assert!(at.is_finite());
        assert!((at - near).abs() < 1e-6);
    }

    #[test]
    fn coarse_grid_rejected() {
        let (e1, e2) = (EmitterSpec::reference_qd1(), EmitterSpec::reference_qd2());
        let bad = QuadratureGrid {
            span_ps: 7200.0,
            step_ps: 5.0,
        };
        assert!(matches!(
            visibility_numeric(&e1, &e2, 0.0, 1.0, bad),
            Err(Error::Config(_))
        ));
        let short = QuadratureGrid {
            span_ps: 1000.0,
            step_ps: 1.0,
        };
        assert!(visibility_numeric(&e1, &e2, 0.0, 1.0, short).is_err());
    }

    #[test]
    fn postselected() {
        assert!((postselected_visibility(0.17).unwrap() - 0.66).abs() < 1e-12);
        assert!((postselected_visibility(0.31).unwrap() - 0.38).abs() < 1e-12);
        assert!((postselected_visibility(0.35).unwrap() - 0.30).abs() < 1e-12);
        assert_eq!(postselected_visibility(0.5).unwrap(), 0.0);
        assert!(postselected_visibility(0.8).unwrap() < 0.0);
        assert!(postselected_visibility(1.2).is_err());
        assert!(postselected_visibility(-0.1).is_err());
    }

    #[test]
    fn coincidence_probabilities() {
        assert_eq!(coincidence_probability(0.5, 1.0), 0.0);
        assert_eq!(coincidence_probability(0.5, 0.0), 0.5);
        assert!((coincidence_probability(0.48, 1.0) - 0.0016).abs() < 1e-12);
    }

    #[test]
    fn dip_shapes() {
        let mut p = reference_params(0.0);
        let grid: Vec<f64> = (-1500..=1500).map(|i| i as f64).collect();
        // Fully distinguishable: ratio to the side-peak envelope is 0.5 everywhere.
        p.pol_overlap = 0.0;
        for (tau, c) in grid.iter().zip(predicted_hom_dip(&grid, &p)) {
            assert!((c / envelope_correlation(*tau, &p) - 0.5).abs() < 1e-12);
        }
        // Complete coalescence at zero delay.
        p.pol_overlap = 1.0;
        assert_eq!(predicted_hom_dip(&[0.0], &p)[0], 0.0);

        // Integrated dip relative to the distinguishable level is 1 − V once the
        // window holds the whole envelope.
        let fine: Vec<f64> = (-200_000..=200_000).map(|i| i as f64 * 0.1).collect();
        let dip: f64 = predicted_hom_dip(&fine, &p).iter().sum::<f64>() * 0.1;
        let flat: f64 = fine
            .iter()
            .map(|&t| 0.5 * envelope_correlation(t, &p))
            .sum::<f64>()
            * 0.1;
        assert!((dip / flat - 0.8765).abs() < 1e-3, "{}", dip / flat);
    }
}
