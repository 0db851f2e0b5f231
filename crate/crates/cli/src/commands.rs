use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use homsim_core::calib::{
    dolp, fit_loss, fringe_visibility, splitting_ratio, DolpMode, ExtremaMode, SplitterMeasurement,
};
use homsim_core::correlate::{cross_correlate_channels, hom_visibility, timetrace, Estimate};
use homsim_core::fitting::{
    biexp_model, deconvolve_lorentzian, fit_biexp_irf, fit_g2cw, fit_lorentzian, BiexpOptions,
    FitResult, UniformSeries,
};
use homsim_core::interfere::{visibility_closed_form, visibility_numeric, QuadratureGrid};
use homsim_core::pipeline::{analyze_histogram, CorrelationAnalysis};
use homsim_core::simulate::{simulate, ActiveSources};
use homsim_core::{EmitterSpec, PulseTrainSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::io::{
    read_histogram, read_table, read_tags, write_histogram, write_json, write_table, Table,
};
use crate::svg::Chart;
use crate::{Command, JsonOut, SourcesArg};

#[derive(Debug, Serialize)]
struct Provenance {
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    /// SHA-256 of each input file, in argument order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    input_digests: Vec<String>,
}

impl Provenance {
    fn new() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            seed: None,
            config_digest: None,
            input_digests: Vec::new(),
        }
    }

    fn config(mut self, cfg: &ScenarioConfig) -> Self {
        self.seed = Some(cfg.seed);
        self.config_digest = Some(cfg.digest());
        self
    }

    fn input(mut self, path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.input_digests.push(hex::encode(Sha256::digest(&bytes)));
        Ok(self)
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    provenance: Provenance,
    result: T,
}

fn emit<T: Serialize>(
    out: &JsonOut,
    command: &str,
    provenance: Provenance,
    result: T,
) -> CliResult<()> {
    if let Some(path) = &out.json {
        write_json(
            path,
            &Report {
                command,
                provenance,
                result,
            },
        )?;
    }
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.1} %", 100.0 * x)
}

fn est(e: Estimate) -> String {
    format!("{:.4} ± {:.4}", e.value, e.error)
}

pub(crate) fn dispatch(cmd: Command, threads: Option<usize>) -> CliResult<String> {
    let mut s = String::new();
    match cmd {
        Command::Simulate {
            config,
            out,
            seed,
            pulses,
            delay_ps,
            sources,
            report,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = pulses {
                cfg.train.n_pulses = v;
            }
            if let Some(v) = delay_ps {
                cfg.train.source_delay_ps = v;
            }
            if let Some(v) = sources {
                cfg.sources = match v {
                    SourcesArg::Both => ActiveSources::Both,
                    SourcesArg::First => ActiveSources::First,
                    SourcesArg::Second => ActiveSources::Second,
                };
            }
            let sim = simulate(&cfg.scenario(), cfg.seed, threads)?;
            crate::io::write_tags(&out, &sim.stream)?;
            let c = &sim.counters;
            let _ = writeln!(s, "pulses            {}", cfg.train.n_pulses);
            let _ = writeln!(
                s,
                "photons emitted   {} (source 1), {} (source 2)",
                sim.emitted[0], sim.emitted[1]
            );
            let _ = writeln!(
                s,
                "photons detected  {} (ch0), {} (ch1)",
                c.detected[0], c.detected[1]
            );
            let _ = writeln!(
                s,
                "dark counts       {} (ch0), {} (ch1)",
                c.dark[0], c.dark[1]
            );
            let _ = writeln!(s, "interfering pairs {}", c.interfering_pairs);
            let _ = writeln!(s, "records written   {}", sim.stream.len());
            let _ = writeln!(s, "seed              {}", cfg.seed);
            let _ = writeln!(s, "config digest     {}", cfg.digest());
            #[derive(Serialize)]
            struct R {
                emitted: [u64; 2],
                counters: homsim_core::simulate::DetectionCounters,
                records: usize,
                scenario_digest: String,
            }
            emit(
                &report,
                "simulate",
                Provenance::new().config(&cfg),
                R {
                    emitted: sim.emitted,
                    counters: *c,
                    records: sim.stream.len(),
                    scenario_digest: cfg.scenario().digest(),
                },
            )?;
        }

        Command::AnalyzeHom {
            tags,
            histogram,
            reference,
            config,
            out_dir,
        } => analyze_hom(&mut s, tags, histogram, reference, &config, &out_dir)?,

        Command::Correlate {
            tags,
            out,
            bin_ps,
            window_ps,
            channels,
            svg,
        } => {
            let stream = read_tags(&tags)?;
            let pair = (channels[0], channels[1]);
            let h = homsim_core::simulate::in_pool(threads, || {
                cross_correlate_channels(&stream, pair, bin_ps, window_ps)
            })?;
            write_histogram(&out, &h)?;
            if let Some(p) = svg {
                let chart = Chart {
                    title: format!("Cross-correlation ch{} → ch{}", pair.0, pair.1),
                    x_label: "delay (ns)".into(),
                    y_label: "coincidences".into(),
                    points: histogram_points(&h),
                    ..Default::default()
                };
                write_text(&p, &chart.render())?;
            }
            let _ = writeln!(
                s,
                "pairs {} in {} bins of {} ps",
                h.total_pairs,
                h.n_bins(),
                h.bin_width_ps
            );
        }

        Command::Timetrace {
            tags,
            out,
            rep_rate_mhz,
            bin_ps,
            channel,
        } => {
            let stream = read_tags(&tags)?;
            let train = PulseTrainSpec {
                rep_rate_mhz,
                n_pulses: 1,
                source_delay_ps: 0.0,
            };
            let tr = timetrace(&stream, &train, bin_ps, channel)?;
            write_table(
                &out,
                &[
                    ("period_ps", tr.period_ps.to_string()),
                    ("bin_width_ps", tr.bin_width_ps.to_string()),
                ],
                &["bin_start_ps", "counts"],
                tr.counts
                    .iter()
                    .enumerate()
                    .map(|(i, c)| vec![tr.bin_start_ps(i).to_string(), c.to_string()]),
            )?;
            let _ = writeln!(s, "{} counts in {} bins", tr.total(), tr.counts.len());
        }

        Command::FitDecay {
            input,
            irf_fwhm_ps,
            period_ps,
            unfolded,
            svg,
            report,
        } => {
            let t = read_table(&input, 2)?;
            let series = uniform_series(&t)?;
            let period = if unfolded {
                None
            } else {
                period_ps.or(t.meta_f64("period_ps")?)
            };
            let opts = BiexpOptions {
                irf_fwhm_ps,
                period_ps: period,
                init: None,
            };
            let fit = fit_biexp_irf(&series, &opts)?;
            write_fit(&mut s, &fit);
            if let Some(p) = svg {
                let model = biexp_model(&series, &fit.params, &opts)?;
                let chart = Chart {
                    title: "Decay trace".into(),
                    x_label: "time (ns)".into(),
                    y_label: "counts".into(),
                    points: (0..series.len())
                        .map(|i| (series.center(i) / 1e3, series.values[i]))
                        .collect(),
                    overlay: (0..series.len())
                        .map(|i| (series.center(i) / 1e3, model[i]))
                        .collect(),
                    ..Default::default()
                };
                write_text(&p, &chart.render())?;
            }
            emit(&report, "fit-decay", Provenance::new().input(&input)?, &fit)?;
        }

        Command::FitG2cw {
            input,
            irf_fwhm_ps,
            report,
        } => {
            let t = read_table(&input, 2)?;
            let series = uniform_series(&t)?;
            let sigma = (t.rows.iter().all(|r| r.len() >= 3)).then(|| t.column(2));
            let fit = fit_g2cw(&series, sigma.as_deref(), irf_fwhm_ps, None)?;
            write_fit(&mut s, &fit);
            emit(&report, "fit-g2cw", Provenance::new().input(&input)?, &fit)?;
        }

        Command::FitLorentzian {
            input,
            instrument_fwhm_uev,
            report,
        } => {
            let t = read_table(&input, 2)?;
            let fit = fit_lorentzian(&t.column(0), &t.column(1))?;
            write_fit(&mut s, &fit);
            let intrinsic = instrument_fwhm_uev
                .map(|inst| deconvolve_lorentzian(fit.get("fwhm_uev"), inst))
                .transpose()?;
            if let Some(w) = intrinsic {
                let _ = writeln!(s, "intrinsic FWHM = {w:.3} µeV");
            }
            #[derive(Serialize)]
            struct R<'a> {
                fit: &'a FitResult,
                intrinsic_fwhm_uev: Option<f64>,
            }
            emit(
                &report,
                "fit-lorentzian",
                Provenance::new().input(&input)?,
                R {
                    fit: &fit,
                    intrinsic_fwhm_uev: intrinsic,
                },
            )?;
        }

        Command::Theory {
            config,
            detuning_uev,
            pol_overlap,
            report,
        } => {
            let (e1, e2, pol, prov) = match &config {
                Some(p) => {
                    let cfg = ScenarioConfig::load(p)?;
                    let pol = pol_overlap.unwrap_or(cfg.circuit.mode_overlap());
                    (
                        cfg.emitter1.clone(),
                        cfg.emitter2.clone(),
                        pol,
                        Provenance::new().config(&cfg),
                    )
                }
                None => (
                    EmitterSpec::reference_qd1(),
                    EmitterSpec::reference_qd2(),
                    pol_overlap.unwrap_or(1.0),
                    Provenance::new(),
                ),
            };
            let grid = QuadratureGrid::for_emitters(&e1, &e2);
            #[derive(Serialize)]
            struct Point {
                detuning_uev: f64,
                visibility: f64,
                quadrature: f64,
            }
            let mut points = Vec::new();
            for &d in &detuning_uev {
                let v = visibility_closed_form(&e1, &e2, d, pol)?;
                let q = visibility_numeric(&e1, &e2, d, pol, grid)?;
                let _ = writeln!(s, "V(Δ = {d:.2} µeV) = {v:.4}  (quadrature {q:.4})");
                points.push(Point {
                    detuning_uev: d,
                    visibility: v,
                    quadrature: q,
                });
            }
            let bounds = [e1.coherence_ratio(), e2.coherence_ratio()];
            let _ = writeln!(
                s,
                "single-emitter bounds T2/2T1: {:.4} (emitter 1), {:.4} (emitter 2)",
                bounds[0], bounds[1]
            );
            #[derive(Serialize)]
            struct R {
                pol_overlap: f64,
                points: Vec<Point>,
                coherence_ratios: [f64; 2],
            }
            emit(
                &report,
                "theory",
                prov,
                R {
                    pol_overlap: pol,
                    points,
                    coherence_ratios: bounds,
                },
            )?;
        }

        Command::CalibSplitter {
            i11,
            i12,
            i22,
            i21,
            report,
        } => {
            let m = SplitterMeasurement::from_bar_cross(i11, i12, i22, i21);
            let r = splitting_ratio(&m)?;
            let _ = writeln!(s, "r:t = {}", r.percent_label());
            let _ = writeln!(s, "outcoupling imbalance = {:.4}", r.outcoupling_imbalance);
            emit(&report, "calib-splitter", Provenance::new(), r)?;
        }

        Command::CalibFringe {
            input,
            percentile,
            report,
        } => {
            let t = read_table(&input, 1)?;
            let last = t.rows.iter().map(|r| r.len()).min().unwrap_or(1) - 1;
            let mode = if percentile {
                ExtremaMode::Percentile
            } else {
                ExtremaMode::Raw
            };
            let r = fringe_visibility(&t.column(last), mode)?;
            let _ = writeln!(s, "fringe visibility = {}", est(r.visibility));
            let _ = writeln!(s, "I_max = {:.6}, I_min = {:.6}", r.i_max, r.i_min);
            if let Some(w) = &r.warning {
                let _ = writeln!(s, "warning: {w}");
            }
            emit(&report, "calib-fringe", Provenance::new().input(&input)?, r)?;
        }

        Command::CalibLoss { input, report } => {
            let t = read_table(&input, 2)?;
            let r = fit_loss(&t.column(0), &t.column(1))?;
            let _ = writeln!(s, "loss = {} dB/mm", est(r.db_per_mm));
            let _ = writeln!(s, "intercept = {:.3} dB", r.intercept_db);
            emit(&report, "calib-loss", Provenance::new().input(&input)?, r)?;
        }

        Command::CalibDolp { input, raw, report } => {
            let t = read_table(&input, 2)?;
            let mode = if raw { DolpMode::Raw } else { DolpMode::Fit };
            let r = dolp(&t.column(0), &t.column(1), mode)?;
            let _ = writeln!(s, "DOLP = {}", est(r.dolp));
            let _ = writeln!(s, "axis = {:.2} deg", r.angle_deg);
            emit(&report, "calib-dolp", Provenance::new().input(&input)?, r)?;
        }
    }
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_fit(s: &mut String, fit: &FitResult) {
    for (i, n) in fit.names.iter().enumerate() {
        let _ = writeln!(s, "{n:<14} = {:.6} ± {:.6}", fit.params[i], fit.errors[i]);
    }
    let _ = writeln!(
        s,
        "chi2_red = {:.4}, status = {:?}, iterations = {}",
        fit.chi2_red, fit.status, fit.iterations
    );
    for w in &fit.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
}

/// First column holds bin starts on a uniform grid, second column the values.
fn uniform_series(t: &Table) -> CliResult<UniformSeries> {
    let x = t.column(0);
    if x.len() < 2 {
        return Err(CliError::validation("need at least two rows"));
    }
    let step = x[1] - x[0];
    if step.is_nan() || step <= 0.0 {
        return Err(CliError::validation("first column must increase"));
    }
    for (i, w) in x.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step.max(1.0) {
            return Err(CliError::validation(format!(
                "first column is not uniformly spaced at row {}",
                i + 2
            )));
        }
    }
    Ok(UniformSeries {
        start_ps: x[0],
        step_ps: step,
        values: t.column(1),
    })
}

fn histogram_points(h: &homsim_core::correlate::CorrelationHistogram) -> Vec<(f64, f64)> {
    h.counts
        .iter()
        .enumerate()
        .map(|(i, c)| (h.bin_center_ps(i) / 1e3, *c as f64))
        .collect()
}

#[derive(Serialize)]
struct HomReport<'a> {
    analysis: &'a CorrelationAnalysis,
    reference: Option<&'a CorrelationAnalysis>,
    visibility_raw: Option<Estimate>,
    visibility_corrected: Option<Estimate>,
}

fn analyze_hom(
    s: &mut String,
    tags: Option<PathBuf>,
    histogram: Option<PathBuf>,
    reference: Option<PathBuf>,
    config: &Path,
    out_dir: &Path,
) -> CliResult<()> {
    let cfg = ScenarioConfig::load(config)?;
    let settings = &cfg.analysis;
    let period = cfg.train.period_ps();
    let mut prov = Provenance::new().config(&cfg);
    let hist = match (&tags, &histogram) {
        (Some(t), _) => {
            prov = prov.input(t)?;
            cross_correlate_channels(
                &read_tags(t)?,
                (0, 1),
                settings.bin_width_ps,
                settings.window_ps,
            )?
        }
        (None, Some(h)) => {
            prov = prov.input(h)?;
            read_histogram(h)?
        }
        (None, None) => {
            return Err(CliError::validation(
                "either --tags or --histogram is required",
            ))
        }
    };
    let a = analyze_histogram(&hist, period, settings)?;
    let refa = match &reference {
        Some(r) => {
            prov = prov.input(r)?;
            let h = cross_correlate_channels(
                &read_tags(r)?,
                (0, 1),
                settings.bin_width_ps,
                settings.window_ps,
            )?;
            Some(analyze_histogram(&h, period, settings)?)
        }
        None => None,
    };
    let (v_raw, v_cor) = match &refa {
        Some(r) => (
            Some(hom_visibility(r.raw.g2_zero, a.raw.g2_zero)?),
            Some(hom_visibility(r.corrected.g2_zero, a.corrected.g2_zero)?),
        ),
        None => (None, None),
    };

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_histogram(&out_dir.join("histogram.csv"), &hist)?;
    write_table(
        &out_dir.join("peaks.csv"),
        &[
            ("period_ps", period.to_string()),
            ("integration_window_ps", settings.delta_t_ps.to_string()),
            ("floor_per_bin", a.floor_per_bin.to_string()),
        ],
        &[
            "index",
            "center_ps",
            "raw_counts",
            "bins",
            "corrected_area",
            "error",
        ],
        a.corrected.peaks.iter().map(|p| {
            vec![
                p.index.to_string(),
                format!("{:.3}", p.center_ps),
                p.raw_counts.to_string(),
                p.bins.to_string(),
                format!("{:.3}", p.area),
                format!("{:.3}", p.error),
            ]
        }),
    )?;
    let chart = Chart {
        title: "HOM cross-correlation".into(),
        x_label: "delay (ns)".into(),
        y_label: "coincidences".into(),
        points: histogram_points(&hist),
        bands: a
            .raw
            .peaks
            .iter()
            .map(|p| {
                let h = 0.5 * settings.delta_t_ps;
                ((p.center_ps - h) / 1e3, (p.center_ps + h) / 1e3)
            })
            .collect(),
        ..Default::default()
    };
    write_text(&out_dir.join("histogram.svg"), &chart.render())?;
    write_json(
        &out_dir.join("report.json"),
        &Report {
            command: "analyze-hom",
            provenance: prov,
            result: HomReport {
                analysis: &a,
                reference: refa.as_ref(),
                visibility_raw: v_raw,
                visibility_corrected: v_cor,
            },
        },
    )?;

    let _ = writeln!(s, "peak  delay_ns   raw_counts   corrected_area");
    for (p, c) in a.raw.peaks.iter().zip(&a.corrected.peaks) {
        let _ = writeln!(
            s,
            "{:>4}  {:>8.3}  {:>11}  {:>15.1}",
            p.index,
            p.center_ps / 1e3,
            p.raw_counts,
            c.area
        );
    }
    let dt = settings.delta_t_ps / 1e3;
    let _ = writeln!(s, "g2(0, Δt = {dt} ns) raw       = {}", est(a.raw.g2_zero));
    let _ = writeln!(
        s,
        "g2(0, Δt = {dt} ns) corrected = {}",
        est(a.corrected.g2_zero)
    );
    let _ = writeln!(
        s,
        "background floor = {:.3} counts/bin ({} of side-peak coincidences)",
        a.floor_per_bin,
        pct(a.raw.background_fraction)
    );
    let _ = write!(
        s,
        "post-selected g2(0) [{} ps] = {}",
        settings.postselect_width_ps,
        est(a.postselected_g2)
    );
    match a.postselected_visibility {
        Some(v) => {
            let _ = writeln!(s, ", V' = {}", pct(v));
        }
        None => s.push('\n'),
    }
    if let (Some(r), Some(c)) = (v_raw, v_cor) {
        let _ = writeln!(s, "V raw       = {} ± {}", pct(r.value), pct(r.error));
        let _ = writeln!(s, "V corrected = {} ± {}", pct(c.value), pct(c.error));
    }
    Ok(())
}
