//! `chansim` command line: sounding waveform generation, CIR estimation,
//! parameter extraction, channel simulation, dataset export and
//! measured-vs-simulated comparison.

mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use chansim::analysis::{
    compare_pdps, estimate_noise_floor, extract_parameters, normalize_pdp, ExtractionOptions,
    PowerDelayProfile, DEFAULT_MARGIN_DB, DEFAULT_MIN_SEPARATION_BINS, NOISE_FLOOR_RULE,
};
use chansim::channel_apply::{add_awgn, apply_channel, SyntheticChannel};
use chansim::gbsm::{config_from_parameters, generate_dataset, simulate_pdp, ScenarioConfig};
use chansim::io::{
    key_values_to_string, power_db, read_config, read_iq, read_pdp_csv, write_config,
    write_dataset, write_iq, write_pdp_csv,
};
use chansim::signal::{IqSignal, DEFAULT_SAMPLE_RATE_HZ, DEFAULT_ZC_LENGTH, DEFAULT_ZC_ROOT};
use chansim::sounder::{
    average_pdp, build_sounding_signal, estimate_cirs, guarded_offset, mitigate_artifacts,
    synchronize, align, EstimatorOptions, Regularization, SoundingWaveform,
    DEFAULT_RELATIVE_REGULARIZATION, DEFAULT_REPETITIONS, DEFAULT_TAPER_FRACTION,
};
use num_complex::Complex64;

#[derive(Parser)]
#[command(name = "chansim", version, about = "Channel sounding, parameter extraction and stochastic channel simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct WaveformArgs {
    /// Zadoff-Chu sequence length (must be prime)
    #[arg(long, default_value_t = DEFAULT_ZC_LENGTH)]
    zc_length: usize,
    /// Zadoff-Chu root index, coprime to the length
    #[arg(long, default_value_t = DEFAULT_ZC_ROOT)]
    zc_root: usize,
    /// Number of back-to-back sequence periods
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    repetitions: usize,
}

#[derive(clap::Args, Clone)]
struct EstimatorArgs {
    /// Ridge term relative to the mean reference power
    #[arg(long, default_value_t = DEFAULT_RELATIVE_REGULARIZATION)]
    regularization: f64,
    /// Fraction of the band around Nyquist with a raised-cosine taper
    #[arg(long, default_value_t = DEFAULT_TAPER_FRACTION)]
    taper: f64,
    /// Detection threshold above the noise floor
    #[arg(long, default_value_t = DEFAULT_MARGIN_DB)]
    margin_db: f64,
}

#[derive(clap::Args, Clone)]
struct AnalysisArgs {
    /// Detection threshold above the noise floor
    #[arg(long, default_value_t = DEFAULT_MARGIN_DB)]
    margin_db: f64,
    /// Minimum spacing between counted cluster peaks
    #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION_BINS)]
    min_separation_bins: usize,
}

impl AnalysisArgs {
    fn options(&self) -> ExtractionOptions {
        ExtractionOptions {
            margin_db: self.margin_db,
            min_separation_bins: self.min_separation_bins,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the tiled Zadoff-Chu sounding waveform as an IQ file
    GenerateSounding {
        #[command(flatten)]
        waveform: WaveformArgs,
        /// Sample rate in Hz
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: f64,
        /// Output IQ file (a `.meta` sidecar is written next to it)
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the averaged power delay profile from a received capture
    Estimate {
        /// Received IQ capture
        #[arg(long)]
        rx: PathBuf,
        #[command(flatten)]
        waveform: WaveformArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Output PDP table (CSV)
        #[arg(long)]
        pdp_out: PathBuf,
    },
    /// Extract delay spread, K-factor and cluster count and write a generator config
    Extract {
        /// Input PDP table (CSV)
        #[arg(long)]
        pdp: PathBuf,
        /// Treat the profile as line-of-sight (reports a K-factor)
        #[arg(long)]
        los: bool,
        /// Output scenario config
        #[arg(long)]
        out_config: PathBuf,
        /// Config file or preset supplying the remaining parameters
        /// [default: urban-los with --los, urban-nlos otherwise]
        #[arg(long)]
        defaults: Option<String>,
        /// Label for the summary row and the config
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Simulate a phase-averaged PDP from a scenario config
    Simulate {
        /// Scenario config file or preset name
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Phase realizations averaged into the PDP
        #[arg(long, default_value_t = 200)]
        realizations: usize,
        /// Output PDP table (CSV)
        #[arg(long)]
        pdp_out: PathBuf,
    },
    /// Generate a dataset of independent CIR snapshots
    Dataset {
        /// Scenario config file or preset name
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Output dataset file
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a measured and a simulated PDP
    Compare {
        /// Measured PDP table (CSV)
        #[arg(long)]
        measured: PathBuf,
        /// Simulated PDP table (CSV)
        #[arg(long)]
        simulated: PathBuf,
        /// Output report (key=value)
        #[arg(long)]
        report_out: PathBuf,
        /// Output plot (SVG)
        #[arg(long)]
        plot_out: PathBuf,
        /// Output table of both profiles on a common grid [default: plot path with .csv]
        #[arg(long)]
        csv_out: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Sound a synthetic multipath channel and check the recovered parameters
    Loopback {
        /// Paths as `delay_ns:amplitude`, comma separated
        #[arg(long, default_value = "0:1")]
        channel_spec: String,
        /// Transmit waveform IQ file [default: built from the waveform flags]
        #[arg(long)]
        tx: Option<PathBuf>,
        /// Signal-to-noise ratio in dB (`inf` disables noise)
        #[arg(long, default_value_t = f64::INFINITY)]
        snr_db: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        waveform: WaveformArgs,
        /// Sample rate in Hz
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: f64,
        /// Treat the channel as line-of-sight (reports a K-factor)
        #[arg(long)]
        los: bool,
        /// Allowed delay spread error in delay bins
        #[arg(long, default_value_t = 1.0)]
        tolerance_bins: f64,
        /// Allowed relative delay spread error, if larger than the bin tolerance
        #[arg(long, default_value_t = 0.1)]
        tolerance_relative: f64,
        /// Also write the received capture as IQ
        #[arg(long)]
        rx_out: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

fn waveform(args: &WaveformArgs, sample_rate: f64) -> Result<SoundingWaveform> {
    let w = SoundingWaveform::zadoff_chu(args.zc_root, args.zc_length, args.repetitions, sample_rate)
        .context("waveform")?;
    if w.averaging_is_degenerate() {
        eprintln!(
            "warning: {} repetition(s), averaging over fewer than 3 periods is degenerate",
            args.repetitions
        );
    }
    Ok(w)
}

/// mitigate → synchronize → estimate → average → normalize
fn measure_pdp(rx: &IqSignal, waveform: &SoundingWaveform, est: &EstimatorArgs) -> Result<PowerDelayProfile> {
    let clean = mitigate_artifacts(rx).context("mitigate")?;
    let peak = synchronize(&clean, waveform).context("synchronize")?;
    let aligned = align(&clean, guarded_offset(peak, waveform.period())).context("synchronize")?;
    let options = EstimatorOptions {
        regularization: Regularization::RelativeToReference(est.regularization),
        taper_fraction: est.taper,
    };
    let cirs = estimate_cirs(&aligned, waveform, &options).context("estimate")?;
    let pdp = average_pdp(&cirs.cirs).context("average")?;
    let floor = estimate_noise_floor(&pdp).context("noise floor")?;
    normalize_pdp(&pdp.with_noise_floor(floor), est.margin_db).context("normalize")
}

fn load_config(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.exists() {
        return read_config(path).with_context(|| format!("config {}", path.display()));
    }
    ScenarioConfig::preset(spec)
        .ok_or_else(|| anyhow!(chansim::Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such config file or preset"),
        }))
}

fn parse_channel_spec(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(',')
        .map(|entry| {
            let (d, a) = entry
                .split_once(':')
                .ok_or_else(|| anyhow!(chansim::Error::Invalid {
                    what: "channel spec",
                    reason: format!("`{entry}` is not delay_ns:amplitude"),
                }))?;
            let parse = |v: &str| -> Result<f64> {
                v.trim().parse::<f64>().map_err(|_| {
                    anyhow!(chansim::Error::Invalid {
                        what: "channel spec",
                        reason: format!("`{v}` is not a number"),
                    })
                })
            };
            let (delay, amp) = (parse(d)?, parse(a)?);
            if !(delay.is_finite() && delay >= 0.0 && amp.is_finite()) {
                bail!(chansim::Error::Invalid {
                    what: "channel spec",
                    reason: format!("`{entry}` needs a delay >= 0 and a finite amplitude"),
                });
            }
            Ok((delay, amp))
        })
        .collect()
}

/// Delay spread of discrete paths with delays in seconds.
fn path_delay_spread(paths: &[(f64, f64)]) -> f64 {
    let total: f64 = paths.iter().map(|(_, a)| a * a).sum();
    let mean = paths.iter().map(|(d, a)| d * a * a).sum::<f64>() / total;
    let second = paths.iter().map(|(d, a)| d * d * a * a).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

fn nearest(pdp: &PowerDelayProfile, delay_s: f64) -> Option<f64> {
    let first = pdp.delays_s()[0];
    let index = match pdp.delay_step_s() {
        Some(step) => ((delay_s - first) / step).round(),
        None => 0.0,
    };
    if index < 0.0 || index as usize >= pdp.len() {
        return None;
    }
    let index = index as usize;
    let tolerance = pdp.delay_step_s().unwrap_or(f64::INFINITY) / 2.0 + 1e-15;
    ((pdp.delays_s()[index] - delay_s).abs() <= tolerance).then(|| pdp.powers_linear()[index])
}

fn aligned_csv(measured: &PowerDelayProfile, simulated: &PowerDelayProfile) -> String {
    let fine = match (measured.delay_step_s(), simulated.delay_step_s()) {
        (Some(a), Some(b)) if b < a => simulated,
        (None, Some(_)) => simulated,
        _ => measured,
    };
    let cell = |p: Option<f64>| p.map(|v| format!("{:.6}", power_db(v))).unwrap_or_default();
    let mut out = String::from("delay_ns,measured_db,simulated_db\n");
    for &d in fine.delays_s() {
        let _ = writeln!(
            out,
            "{:.6},{},{}",
            d * 1e9,
            cell(nearest(measured, d)),
            cell(nearest(simulated, d))
        );
    }
    out
}

fn pdp_points(pdp: &PowerDelayProfile) -> Vec<(f64, f64)> {
    pdp.delays_s()
        .iter()
        .zip(pdp.powers_linear())
        .map(|(d, p)| (d * 1e6, power_db(*p)))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        anyhow!(chansim::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateSounding { waveform: args, sample_rate, out } => {
            let w = waveform(&args, sample_rate)?;
            write_iq(&out, &build_sounding_signal(&w)).context("write waveform")?;
            eprintln!(
                "wrote {} samples (length {}, root {}, {} repetitions, {} S/s) to {}",
                w.period() * w.repetitions(),
                args.zc_length,
                args.zc_root,
                args.repetitions,
                sample_rate,
                out.display()
            );
        }
        Command::Estimate { rx, waveform: args, estimator, pdp_out } => {
            let capture = read_iq(&rx).context("read capture")?;
            let w = waveform(&args, capture.sample_rate_hz())?;
            let pdp = measure_pdp(&capture, &w, &estimator)?;
            write_pdp_csv(&pdp_out, &pdp).context("write PDP")?;
        }
        Command::Extract { pdp, los, out_config, defaults, label, analysis } => {
            let profile = read_pdp_csv(&pdp).context("read PDP")?;
            let mut params = extract_parameters(&profile, los, &analysis.options()).context("extract")?;
            let defaults_spec =
                defaults.unwrap_or_else(|| if los { "urban-los" } else { "urban-nlos" }.to_string());
            let mut base = load_config(&defaults_spec).context("defaults")?;
            if let Some(label) = label {
                params.scenario_label = label.clone();
                base.label = label;
            }
            let config = config_from_parameters(&params, &base).context("configure")?;
            write_config(&out_config, &config).context("write config")?;
            println!("{}", params.table_row());
        }
        Command::Simulate { config, seed, realizations, pdp_out } => {
            let config = load_config(&config)?;
            let pdp = simulate_pdp(&config, seed, realizations).context("simulate")?;
            write_pdp_csv(&pdp_out, &pdp).context("write PDP")?;
        }
        Command::Dataset { config, seed, count, out } => {
            let config = load_config(&config)?;
            let dataset = generate_dataset(&config, count, seed).context("generate dataset")?;
            write_dataset(&out, &dataset).context("write dataset")?;
        }
        Command::Compare { measured, simulated, report_out, plot_out, csv_out, analysis } => {
            let m = read_pdp_csv(&measured).context("read measured PDP")?;
            let s = read_pdp_csv(&simulated).context("read simulated PDP")?;
            let report = compare_pdps(&m, &s, &analysis.options()).context("compare")?;
            let mut entries = report.entries();
            entries.push(("measured", measured.display().to_string()));
            entries.push(("simulated", simulated.display().to_string()));
            write_text(&report_out, &key_values_to_string(&entries)).context("write report")?;
            let svg = plot::render(
                "Power delay profile",
                &[
                    plot::Series { name: "measured", color: "#1f77b4", dash: None, points: pdp_points(&m) },
                    plot::Series {
                        name: "simulated",
                        color: "#d62728",
                        dash: Some("6 3"),
                        points: pdp_points(&s),
                    },
                ],
            );
            write_text(&plot_out, &svg).context("write plot")?;
            let csv_out = csv_out.unwrap_or_else(|| plot_out.with_extension("csv"));
            write_text(&csv_out, &aligned_csv(&m, &s)).context("write aligned table")?;
            println!(
                "ds_relative_error={} cluster_count_diff={} mean_abs_db_deviation={}",
                report.ds_relative_error, report.cluster_count_diff, report.mean_abs_db_deviation
            );
        }
        Command::Loopback {
            channel_spec,
            tx,
            snr_db,
            seed,
            waveform: args,
            sample_rate,
            los,
            tolerance_bins,
            tolerance_relative,
            rx_out,
            analysis,
        } => {
            let paths = parse_channel_spec(&channel_spec)?;
            let tx = match tx {
                Some(path) => Some(read_iq(&path).context("read transmit waveform")?),
                None => None,
            };
            let sample_rate = tx.as_ref().map_or(sample_rate, IqSignal::sample_rate_hz);
            let w = waveform(&args, sample_rate)?;
            let taps: Vec<(usize, Complex64)> = paths
                .iter()
                .map(|&(d_ns, a)| ((d_ns * 1e-9 * sample_rate).round() as usize, Complex64::new(a, 0.0)))
                .collect();
            let channel = SyntheticChannel::from_paths(&taps).context("channel")?;
            let tx = tx.unwrap_or_else(|| build_sounding_signal(&w));
            let rx = apply_channel(&tx, &channel).context("apply channel")?;
            let rx = add_awgn(&rx, snr_db, seed).context("add noise")?;
            if let Some(path) = &rx_out {
                write_iq(path, &rx).context("write capture")?;
            }
            let estimator = EstimatorArgs {
                regularization: DEFAULT_RELATIVE_REGULARIZATION,
                taper: 0.0,
                margin_db: analysis.margin_db,
            };
            let pdp = measure_pdp(&rx, &w, &estimator)?;
            let params = extract_parameters(&pdp, los, &analysis.options()).context("extract")?;
            let truth_paths: Vec<(f64, f64)> = paths.iter().map(|&(d, a)| (d * 1e-9, a)).collect();
            let truth_ds = path_delay_spread(&truth_paths);
            let error = (params.rms_delay_spread_s - truth_ds).abs();
            let tolerance = (tolerance_bins / sample_rate).max(tolerance_relative * truth_ds);
            println!("ground truth: DS {:.3} ns, {} paths", truth_ds * 1e9, paths.len());
            println!(
                "recovered:    DS {:.3} ns, KF {}, {} clusters",
                params.rms_delay_spread_s * 1e9,
                params
                    .k_factor_db
                    .map(|k| format!("{k:.2} dB"))
                    .unwrap_or_else(|| "x".into()),
                params.cluster_count
            );
            println!(
                "ds_error_ns={:.3} tolerance_ns={:.3} margin_db={} noise_floor_rule={NOISE_FLOOR_RULE} snr_db={snr_db} seed={seed}",
                error * 1e9,
                tolerance * 1e9,
                analysis.margin_db
            );
            if error > tolerance {
                bail!(chansim::Error::Inconsistent(format!(
                    "loopback delay spread error {:.3} ns exceeds tolerance {:.3} ns",
                    error * 1e9,
                    tolerance * 1e9
                )));
            }
            println!("PASS");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err
        .chain()
        .filter_map(|e| e.downcast_ref::<chansim::Error>())
        .any(chansim::Error::is_io);
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
