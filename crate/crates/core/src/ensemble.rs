//! Repeated simulate-then-estimate experiments and their convergence
//! statistics.

use serde::{Deserialize, Serialize};

use crate::dynamics::{InitialState, SimulationOptions, Simulator};
use crate::error::{Error, Result};
use crate::inference::{Estimate, GGrid, GridScorer};
use crate::model::{Model, ModelParams};

pub const DEFAULT_CHECKPOINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(rename = "g_true_mhz")]
    pub g_true: f64,
    pub grid: GGrid,
    pub n_traj: usize,
    #[serde(rename = "t0_us")]
    pub t0: f64,
    #[serde(rename = "tf_us")]
    pub tf: f64,
    #[serde(rename = "checkpoints_us")]
    pub checkpoints: Vec<f64>,
    pub master_seed: u64,
    pub refine: bool,
    #[serde(default)]
    pub initial_state: InitialState,
}

impl EnsembleSpec {
    /// Refinement on, ground ⊗ vacuum start, default checkpoints.
    pub fn new(g_true: f64, grid: GGrid, n_traj: usize, t0: f64, tf: f64, master_seed: u64) -> Self {
        EnsembleSpec {
            g_true,
            grid,
            n_traj,
            t0,
            tf,
            checkpoints: default_checkpoints(t0, tf, DEFAULT_CHECKPOINTS),
            master_seed,
            refine: true,
            initial_state: InitialState::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameters("n_traj must be >= 1".into()));
        }
        if !(self.tf > self.t0) || !self.t0.is_finite() || !self.tf.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "observation window [{}, {}] must have tf > t0",
                self.t0, self.tf
            )));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::InvalidParameters("at least one checkpoint is required".into()));
        }
        let mut last = self.t0;
        for &cp in &self.checkpoints {
            if !(cp >= last) || cp > self.tf {
                return Err(Error::InvalidParameters(format!(
                    "checkpoints must be ascending within [{}, {}], got {cp}",
                    self.t0, self.tf
                )));
            }
            last = cp;
        }
        Ok(())
    }
}

/// `n` evenly spaced times in `(t0, tf]`, the last one exactly `tf`.
pub fn default_checkpoints(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| if k == n { tf } else { t0 + (tf - t0) * k as f64 / n as f64 })
        .collect()
}

/// Seed of trajectory `index`: two rounds of splitmix64 over the master seed
/// and the index. Adding trajectories never changes the seeds of earlier ones.
pub fn trajectory_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master_seed).wrapping_add(index as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub index: usize,
    pub seed: u64,
    /// Total detections in the record; `None` if simulation failed.
    pub events: Option<usize>,
    /// One entry per checkpoint; `None` where no estimate was possible.
    pub estimates: Vec<Option<Estimate>>,
    pub error: Option<String>,
}

impl TrajectoryResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub params: ModelParams,
    pub spec: EnsembleSpec,
    pub trajectories: Vec<TrajectoryResult>,
}

impl EnsembleResult {
    pub fn failures(&self) -> usize {
        self.trajectories.iter().filter(|t| t.failed()).count()
    }

    /// Event totals of the trajectories that simulated successfully.
    pub fn event_counts(&self) -> Vec<usize> {
        self.trajectories.iter().filter_map(|t| t.events).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Uses the rayon pool when the `parallel` feature is enabled, serial otherwise.
    Parallel,
}

pub fn run_ensemble(model: &Model, spec: &EnsembleSpec) -> Result<EnsembleResult> {
    run_ensemble_with(model, spec, Execution::Parallel)
}

pub fn run_ensemble_with(model: &Model, spec: &EnsembleSpec, execution: Execution) -> Result<EnsembleResult> {
    spec.validate()?;
    let simulator = Simulator::new(model, spec.g_true)?;
    let scorer = GridScorer::new(model, &spec.grid)?;
    let job = |i: usize| run_one(&simulator, &scorer, spec, i);

    let trajectories: Vec<TrajectoryResult> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..spec.n_traj).into_par_iter().map(job).collect()
        }
        _ => (0..spec.n_traj).map(job).collect(),
    };

    let result = EnsembleResult { params: model.params, spec: spec.clone(), trajectories };
    let failed = result.failures();
    if failed > 0 {
        log::warn!("{failed} of {} trajectories failed and are excluded", spec.n_traj);
    }
    Ok(result)
}

fn run_one(simulator: &Simulator, scorer: &GridScorer, spec: &EnsembleSpec, index: usize) -> TrajectoryResult {
    let seed = trajectory_seed(spec.master_seed, index);
    let opts = SimulationOptions { initial: spec.initial_state, sample_times: Vec::new() };
    let fail = |e: Error, events| TrajectoryResult {
        index,
        seed,
        events,
        estimates: vec![None; spec.checkpoints.len()],
        error: Some(e.to_string()),
    };
    let record = match simulator.run(spec.t0, spec.tf, seed, &opts) {
        Ok(traj) => traj.record,
        Err(e) => return fail(e, None),
    };
    let events = Some(record.len());
    match scorer.time_series_partial(&record, &spec.checkpoints, spec.refine) {
        Ok(series) => TrajectoryResult {
            index,
            seed,
            events,
            estimates: series.into_iter().map(|r| r.ok()).collect(),
            error: None,
        },
        Err(e) => fail(e, events),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub time: f64,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation about the ensemble mean.
    pub std: f64,
    /// Root-mean-square deviation from the true coupling.
    pub rms_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub time: f64,
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// variance / mean; above 1 means super-Poissonian.
    pub fano: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stats: Vec<StatsRow>,
    pub histogram: Histogram,
    pub counts: CountStats,
    pub failures: usize,
}

pub fn summarize(result: &EnsembleResult, hist_time: f64, bin_width: f64) -> Result<Summary> {
    let spec = &result.spec;
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParameters(format!("bin width must be > 0, got {bin_width}")));
    }
    let tol = 1e-12 * (spec.tf - spec.t0).abs().max(1.0);
    let hist_index = spec
        .checkpoints
        .iter()
        .position(|&cp| (cp - hist_time).abs() <= tol)
        .ok_or_else(|| {
            Error::InvalidParameters(format!("histogram time {hist_time} us is not a checkpoint"))
        })?;

    let mut stats = Vec::with_capacity(spec.checkpoints.len());
    for (k, &time) in spec.checkpoints.iter().enumerate() {
        let values = column(result, k);
        let n = values.len();
        if n < 2 {
            return Err(Error::Statistics(format!(
                "only {n} trajectories have an estimate at t = {time} us"
            )));
        }
        let pivot = values[0];
        let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mse = values.iter().map(|v| (v - spec.g_true).powi(2)).sum::<f64>() / n as f64;
        stats.push(StatsRow { time, n, mean, std: var.sqrt(), rms_err: mse.sqrt() });
    }

    let histogram = histogram(&spec.grid, spec.checkpoints[hist_index], bin_width, &column(result, hist_index));
    let counts = count_stats(&result.event_counts())?;
    Ok(Summary { stats, histogram, counts, failures: result.failures() })
}

fn column(result: &EnsembleResult, k: usize) -> Vec<f64> {
    result
        .trajectories
        .iter()
        .filter_map(|t| t.estimates.get(k).copied().flatten())
        .map(|e| e.g_mle)
        .collect()
}

/// Bins of width `w` centred on `g_min + j·w`, spanning `[g_min, g_max]`.
fn histogram(grid: &GGrid, time: f64, w: f64, values: &[f64]) -> Histogram {
    let nbins = ((grid.max() - grid.min()) / w * (1.0 + 1e-12)).floor() as usize + 1;
    let centers: Vec<f64> = (0..nbins).map(|j| grid.min() + j as f64 * w).collect();
    let mut counts = vec![0; nbins];
    for &v in values {
        let j = ((v - grid.min()) / w + 0.5).floor().clamp(0.0, (nbins - 1) as f64) as usize;
        counts[j] += 1;
    }
    Histogram { time, bin_width: w, centers, counts }
}

pub fn count_stats(counts: &[usize]) -> Result<CountStats> {
    let n = counts.len();
    if n < 2 {
        return Err(Error::Statistics(format!("need at least 2 records for count statistics, got {n}")));
    }
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let variance = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(CountStats { n, mean, variance, fano: variance / mean })
}
