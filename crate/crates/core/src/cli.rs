//! `qsysid` command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::dynamics::{SimulationOptions, Simulator};
use crate::ensemble::{run_ensemble, summarize};
use crate::error::{Error, Result};
use crate::inference::{posterior_and_mle, GridScorer};
use crate::io::{
    parse_config, read_record, write_hist_csv, write_history_csv, write_record, write_stats_csv,
    write_surface_csv, Config,
};
use crate::mastereq::{check_truncation, expectations, steady_state, DEFAULT_STEADY_TOL};
use crate::model::build_model;

pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qsysid", version, about = "Simulate photodetection records and estimate atom-cavity coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one photodetection record.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a record over the coupling grid.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-detection surface evolution.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run `n_traj` simulate-and-estimate experiments.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hist: PathBuf,
        /// Checkpoint for the histogram [default: last checkpoint].
        #[arg(long)]
        hist_time: Option<f64>,
        /// Histogram bin width in MHz [default: grid step].
        #[arg(long)]
        bin_width: Option<f64>,
    },
    /// Print steady-state expectation values from the master equation.
    Steadystate {
        #[arg(long)]
        config: PathBuf,
        /// Coupling in MHz [default: g_true_mhz].
        #[arg(long)]
        g: Option<f64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => simulate(&parse_config(config)?, out),
        Command::Estimate { config, record, out, history } => {
            estimate(&parse_config(config)?, record, out, history)
        }
        Command::Ensemble { config, out, hist, hist_time, bin_width } => {
            ensemble(&parse_config(config)?, out, hist, hist_time, bin_width)
        }
        Command::Steadystate { config, g } => steadystate(&parse_config(config)?, g),
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate(config: &Config, out: PathBuf) -> Result<()> {
    let model = build_model(config.model_params())?;
    let opts = SimulationOptions { initial: config.initial_state, sample_times: Vec::new() };
    let record = Simulator::new(&model, config.g_true_mhz)?
        .run(config.t0_us, config.tf_us, config.seed, &opts)?
        .record;
    write_record(&out, &record)?;
    println!(
        "{} detections ({} cavity, {} atomic) written to {}",
        record.len(),
        record.count(1),
        record.count(0),
        out.display()
    );
    Ok(())
}

fn estimate(config: &Config, record: PathBuf, out: PathBuf, history: Option<PathBuf>) -> Result<()> {
    let model = build_model(config.model_params())?;
    let record = read_record(record)?;
    let scorer = GridScorer::new(&model, &config.grid()?)?;
    let surface = scorer.surface(&record, history.is_some() || config.with_history)?;
    write_surface_csv(create(&out)?, &surface)?;
    if let Some(path) = history {
        write_history_csv(create(&path)?, &surface)?;
    }
    let est = posterior_and_mle(&surface, config.refine)?;
    println!(
        "g_mle = {:.4} MHz, posterior mean = {:.4} MHz, sd = {:.4} MHz after {} detections",
        est.g_mle, est.posterior_mean, est.posterior_sd, est.jump_index
    );
    Ok(())
}

fn ensemble(
    config: &Config,
    out: PathBuf,
    hist: PathBuf,
    hist_time: Option<f64>,
    bin_width: Option<f64>,
) -> Result<()> {
    let model = build_model(config.model_params())?;
    let spec = config.ensemble_spec()?;
    let hist_time = hist_time.unwrap_or(*spec.checkpoints.last().expect("validated non-empty"));
    let bin_width = bin_width.unwrap_or(spec.grid.step());
    let result = run_ensemble(&model, &spec)?;
    let summary = summarize(&result, hist_time, bin_width)?;
    write_stats_csv(create(&out)?, &summary.stats)?;
    write_hist_csv(create(&hist)?, &summary.histogram)?;
    let last = summary.stats.last().expect("validated non-empty");
    println!(
        "{} trajectories ({} failed); at {} us: mean {:.4} MHz, std {:.4} MHz, rms error {:.4} MHz",
        spec.n_traj, summary.failures, last.time, last.mean, last.std, last.rms_err
    );
    println!(
        "detections per record: mean {:.2}, variance {:.2}, Fano factor {:.3}",
        summary.counts.mean, summary.counts.variance, summary.counts.fano
    );
    Ok(())
}

fn steadystate(config: &Config, g: Option<f64>) -> Result<()> {
    let model = build_model(config.model_params())?;
    let g = g.unwrap_or(config.g_true_mhz);
    if !g.is_finite() || g < 0.0 {
        return Err(Error::config("--g", format!("must be finite and >= 0, got {g}")));
    }
    let rho = steady_state(&model, g, DEFAULT_STEADY_TOL)?;
    if !check_truncation(&rho, &model) {
        eprintln!("warning: photon-number truncation n_trunc = {} looks too small", config.n_trunc);
    }
    let e = expectations(&rho, &model);
    println!("photons {}", e.photons);
    println!("excited {}", e.excited);
    println!("flux_per_us {}", e.flux);
    Ok(())
}
