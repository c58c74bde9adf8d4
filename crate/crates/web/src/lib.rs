//! WebAssembly entry points for the static demo page in `www/`. Each export
//! takes plain numbers and returns a JSON string for the page to plot.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qsysid::dynamics::{SimulationOptions, Simulator};
use qsysid::inference::{posterior, posterior_and_mle, GGrid, GridScorer};
use qsysid::model::{build_model, coupling_at_position, ModeGeometry, ModelParams};

/// Conditional photon number and excitation of one trajectory, plus its clicks.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub photons: Vec<f64>,
    pub excited: Vec<f64>,
    /// `(t_us, channel)`
    pub clicks: Vec<(f64, usize)>,
}

pub fn photon_trace(
    epsilon: f64,
    g: f64,
    tf: f64,
    seed: u64,
    n_trunc: usize,
    samples: usize,
) -> qsysid::Result<Trace> {
    let model = build_model(ModelParams { n_trunc, ..ModelParams::reference(epsilon) })?;
    let samples = samples.max(2);
    let times: Vec<f64> = (0..samples).map(|k| tf * k as f64 / (samples - 1) as f64).collect();
    let opts = SimulationOptions { sample_times: times.clone(), ..Default::default() };
    let traj = Simulator::new(&model, g)?.run(0.0, tf, seed, &opts)?;
    Ok(Trace {
        times,
        photons: traj.samples.iter().map(|s| s.photons).collect(),
        excited: traj.samples.iter().map(|s| s.excited).collect(),
        clicks: traj.record.events.iter().map(|e| (e.t, e.channel)).collect(),
    })
}

/// Posterior over the grid after each detection of one simulated record.
#[derive(Debug, Clone, Serialize)]
pub struct LikelihoodEvolution {
    pub grid: Vec<f64>,
    pub times: Vec<f64>,
    pub posterior: Vec<Vec<f64>>,
    pub g_mle: f64,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
    pub events: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn likelihood_evolution(
    epsilon: f64,
    g_true: f64,
    tf: f64,
    seed: u64,
    n_trunc: usize,
    g_min: f64,
    g_max: f64,
    step: f64,
) -> qsysid::Result<LikelihoodEvolution> {
    let model = build_model(ModelParams { n_trunc, ..ModelParams::reference(epsilon) })?;
    let record = Simulator::new(&model, g_true)?.record(0.0, tf, seed)?;
    let grid = GGrid::new(g_min, g_max, step)?;
    let surface = GridScorer::new(&model, &grid)?.surface(&record, true)?;
    let est = posterior_and_mle(&surface, true)?;
    let history = surface.history.as_deref().unwrap_or_default();
    Ok(LikelihoodEvolution {
        grid: grid.values().to_vec(),
        times: history.iter().map(|s| s.time).collect(),
        posterior: history.iter().map(|s| posterior(&s.loglik)).collect(),
        g_mle: est.g_mle,
        posterior_mean: est.posterior_mean,
        posterior_sd: est.posterior_sd,
        events: record.len(),
    })
}

/// Signed coupling over the plane `z = 0`, `x` along the cavity axis.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `values[j * xs.len() + i]` at `(xs[i], ys[j])`.
    pub values: Vec<f64>,
}

pub fn coupling_map(g0: f64, lambda: f64, w0: f64, nx: usize, ny: usize) -> qsysid::Result<CouplingMap> {
    let nx = nx.max(2);
    let ny = ny.max(2);
    let mut geom = ModeGeometry { lambda, w0, position: [0.0; 3] };
    geom.validate()?;
    let xs: Vec<f64> = (0..nx).map(|i| 2.0 * lambda * i as f64 / (nx - 1) as f64).collect();
    let ys: Vec<f64> = (0..ny).map(|j| 2.0 * w0 * (2.0 * j as f64 / (ny - 1) as f64 - 1.0)).collect();
    let mut values = Vec::with_capacity(nx * ny);
    for &y in &ys {
        for &x in &xs {
            geom.position = [x, y, 0.0];
            values.push(coupling_at_position(&geom, g0));
        }
    }
    Ok(CouplingMap { xs, ys, values })
}

fn to_json<T: Serialize>(value: qsysid::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = photonTrace)]
pub fn photon_trace_json(
    epsilon: f64,
    g: f64,
    tf: f64,
    seed: u32,
    n_trunc: u32,
    samples: u32,
) -> Result<String, JsError> {
    to_json(photon_trace(epsilon, g, tf, seed as u64, n_trunc as usize, samples as usize))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = likelihoodEvolution)]
pub fn likelihood_evolution_json(
    epsilon: f64,
    g_true: f64,
    tf: f64,
    seed: u32,
    n_trunc: u32,
    g_min: f64,
    g_max: f64,
    step: f64,
) -> Result<String, JsError> {
    to_json(likelihood_evolution(epsilon, g_true, tf, seed as u64, n_trunc as usize, g_min, g_max, step))
}

#[wasm_bindgen(js_name = couplingMap)]
pub fn coupling_map_json(g0: f64, lambda: f64, w0: f64, nx: u32, ny: u32) -> Result<String, JsError> {
    to_json(coupling_map(g0, lambda, w0, nx as usize, ny as usize))
}
