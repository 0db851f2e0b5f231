//! `homsim` command-line front end: configuration schema, file formats and
//! subcommands wrapping the `homsim-core` pipeline.

mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HOMSIM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "homsim",
    version,
    about = "Two-emitter HOM interference simulator and analysis toolkit"
)]
pub struct Cli {
    /// Worker threads; overrides HOMSIM_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourcesArg {
    Both,
    First,
    Second,
}

#[derive(Debug, Args)]
pub struct JsonOut {
    /// Write a JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write a PTG1 tag file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pulses: Option<u64>,
        /// Delay of source 2 relative to source 1.
        #[arg(long)]
        delay_ps: Option<f64>,
        #[arg(long, value_enum)]
        sources: Option<SourcesArg>,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Correlate, integrate the peaks and report g² and visibilities.
    AnalyzeHom {
        #[arg(
            long,
            required_unless_present = "histogram",
            conflicts_with = "histogram"
        )]
        tags: Option<PathBuf>,
        /// Analyze a histogram CSV instead of a tag file.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Tag file of the distinguishable (delayed) reference run.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Start-stop cross-correlation histogram.
    Correlate {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        bin_ps: u64,
        #[arg(long, default_value_t = 80_000)]
        window_ps: u64,
        /// Start and stop channels.
        #[arg(long, num_args = 2, default_values_t = [0u8, 1u8])]
        channels: Vec<u8>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Decay trace folded modulo the laser period.
    Timetrace {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 76.0)]
        rep_rate_mhz: f64,
        #[arg(long, default_value_t = homsim_core::correlate::DEFAULT_TRACE_BIN_PS)]
        bin_ps: f64,
        /// Single channel; both when absent.
        #[arg(long)]
        channel: Option<u8>,
    },
    /// Bi-exponential fit with Gaussian IRF to a decay trace CSV.
    FitDecay {
        /// Columns: bin_start_ps, counts.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 80.0)]
        irf_fwhm_ps: f64,
        /// Fold period; read from the `# period_ps=` header when absent.
        #[arg(long)]
        period_ps: Option<f64>,
        /// Ignore any fold period and fit a single decay.
        #[arg(long, conflicts_with = "period_ps")]
        unfolded: bool,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Antibunching dip fit to a cw g² histogram.
    FitG2cw {
        /// Columns: bin_start_ps, g2 [, sigma].
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 80.0)]
        irf_fwhm_ps: f64,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Lorentzian line fit, optionally removing the instrument width.
    FitLorentzian {
        /// Columns: energy_uev, intensity.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        instrument_fwhm_uev: Option<f64>,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Closed-form two-photon visibility.
    Theory {
        /// Take emitters and polarization overlap from a config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "detuning-uev", num_args = 1.., default_values_t = [0.0])]
        detuning_uev: Vec<f64>,
        /// Overrides the polarization overlap (1 without a config).
        #[arg(long)]
        pol_overlap: Option<f64>,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Splitting ratio from bar and cross intensities.
    CalibSplitter {
        i11: f64,
        i12: f64,
        i22: f64,
        i21: f64,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Fringe visibility of an interferometer scan.
    CalibFringe {
        /// Intensity in the last column.
        #[arg(long)]
        input: PathBuf,
        /// Use the 0.5 and 99.5 percentiles instead of the raw extrema.
        #[arg(long)]
        percentile: bool,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Propagation loss from a cut-back series.
    CalibLoss {
        /// Columns: length_mm, intensity.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        report: JsonOut,
    },
    /// Degree of linear polarization from an analyzer rotation.
    CalibDolp {
        /// Columns: angle_deg, intensity.
        #[arg(long)]
        input: PathBuf,
        /// Raw extrema instead of the Malus fit.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        report: JsonOut,
    },
}

/// Worker count from `--threads`, then `HOMSIM_THREADS`, else the global pool.
pub fn resolve_threads(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return positive_threads(n).map(Some);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("{THREADS_ENV}={v} is not a count")))?;
            positive_threads(n).map(Some)
        }
        _ => Ok(None),
    }
}

fn positive_threads(n: usize) -> CliResult<usize> {
    if n == 0 {
        Err(CliError::validation("thread count must be at least 1"))
    } else {
        Ok(n)
    }
}

/// Runs one parsed invocation and returns what it prints on stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    let threads = resolve_threads(cli.threads)?;
    commands::dispatch(cli.command, threads)
}
