use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;

use super::propagator::{ModalState, Propagator};
use super::record::{ClassicalRecord, Detection, RecordMetadata, CHANNEL_ATOM, CHANNEL_CAVITY};
use super::state::{populations, InitialState, QuantumState};

/// Jump times are located to this resolution (μs).
pub const JUMP_TIME_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct SimulationOptions {
    pub initial: InitialState,
    /// Times at which to record `⟨a†a⟩` and `⟨σ+σ−⟩` of the conditional state.
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    pub t: f64,
    pub photons: f64,
    pub excited: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub record: ClassicalRecord,
    pub samples: Vec<PopulationSample>,
}

/// Quantum-jump simulator for one coupling value. Holds the diagonalized
/// no-jump propagator so many trajectories can share it.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    model: &'m Model,
    propagator: Propagator,
    decay: Vec<f64>,
    g_true: f64,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m Model, g_true: f64) -> Result<Self> {
        let propagator = Propagator::new(&model.effective_hamiltonian(g_true)?)?;
        let decay = model.total_decay().diagonal().iter().map(|z| z.re).collect();
        Ok(Simulator { model, propagator, decay, g_true })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn record(&self, t0: f64, tf: f64, seed: u64) -> Result<ClassicalRecord> {
        Ok(self.run(t0, tf, seed, &SimulationOptions::default())?.record)
    }

    pub fn run(&self, t0: f64, tf: f64, seed: u64, opts: &SimulationOptions) -> Result<Trajectory> {
        if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "observation window [{t0}, {tf}] must have tf > t0"
            )));
        }
        let model = self.model;
        let prop = &self.propagator;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut sample_times = opts.sample_times.clone();
        sample_times.sort_by(f64::total_cmp);
        let mut next_sample = 0;
        let mut samples = Vec::with_capacity(sample_times.len());

        let mut state = QuantumState::initial(model, opts.initial)?;
        let mut t = t0;
        let mut events = Vec::new();
        let first_step = (0.25 / model.max_decay_rate()).min((tf - t0) / 10.0);

        loop {
            let target: f64 = rng.sample(Open01);
            let modal = prop.to_modal(&state.amplitudes);
            let remaining = tf - t;

            let jump = locate_jump(prop, &modal, &self.decay, target, remaining, first_step)?;
            let segment_end = jump.map_or(tf, |tau| t + tau);

            while next_sample < sample_times.len() {
                let s = sample_times[next_sample];
                let inside = if jump.is_some() { s < segment_end } else { s <= tf };
                if !inside {
                    break;
                }
                if s >= t {
                    let psi = if s == t {
                        state.amplitudes.clone()
                    } else {
                        prop.propagate_modal(&modal, s - t)
                    };
                    let (photons, excited) = populations(&psi, model);
                    samples.push(PopulationSample { t: s, photons, excited });
                }
                next_sample += 1;
            }

            let Some(tau) = jump else { break };
            let psi = prop.propagate_modal(&modal, tau);
            let w_atom = model.jump_sparse(CHANNEL_ATOM).apply(&psi).norm_squared();
            let w_cavity = model.jump_sparse(CHANNEL_CAVITY).apply(&psi).norm_squared();
            let total = w_atom + w_cavity;
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "zero total jump rate at t = {segment_end} us (channel weights {w_atom}, {w_cavity})"
                )));
            }
            let u: f64 = rng.sample(Open01);
            let channel = if u * total < w_atom { CHANNEL_ATOM } else { CHANNEL_CAVITY };

            if !(segment_end > t) || segment_end > tf {
                return Err(Error::Numeric(format!(
                    "jump time {segment_end} us does not advance past {t} us"
                )));
            }
            state = QuantumState::new(psi);
            state.jump(model, channel);
            state.renormalize()?;
            state.log_norm = 0.0;
            t = segment_end;
            events.push(Detection { t, channel });
        }

        Ok(Trajectory {
            record: ClassicalRecord {
                t0,
                tf,
                events,
                metadata: RecordMetadata {
                    seed: Some(seed),
                    g_true: Some(self.g_true),
                    params: Some(model.params),
                    initial_state: opts.initial,
                },
            },
            samples,
        })
    }
}

/// Duration until the no-jump squared norm falls to `target`, or `None` if
/// it stays above it for the rest of the window. The norm is non-increasing,
/// so a geometrically growing search step always yields a valid bracket,
/// which is then narrowed by Newton steps with a bisection safeguard.
/// `decay` is the diagonal of `Σ c_j†c_j`, giving `d‖ψ‖²/dτ = −⟨ψ|Σ c†c|ψ⟩`.
fn locate_jump(
    prop: &Propagator,
    modal: &ModalState,
    decay: &[f64],
    target: f64,
    remaining: f64,
    first_step: f64,
) -> Result<Option<f64>> {
    let eval = |tau: f64| -> Result<(f64, f64)> {
        let psi = prop.propagate_modal(modal, tau);
        let n = psi.norm_squared();
        let slope = -psi.iter().zip(decay).map(|(z, d)| d * z.norm_sqr()).sum::<f64>();
        if n.is_finite() && slope.is_finite() {
            Ok((n - target, slope))
        } else {
            Err(Error::Numeric(format!("non-finite survival probability at tau = {tau} us")))
        }
    };

    let mut lo = 0.0;
    let mut step = first_step;
    let (mut hi, mut f, mut slope) = loop {
        let candidate = (lo + step).min(remaining);
        let (f, slope) = eval(candidate)?;
        if f <= 0.0 {
            break (candidate, f, slope);
        }
        if candidate >= remaining {
            return Ok(None);
        }
        lo = candidate;
        step *= 2.0;
    };

    let mut tau = hi;
    while hi - lo > JUMP_TIME_RESOLUTION {
        let newton = tau - f / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - tau).abs() <= 1e-3 * JUMP_TIME_RESOLUTION {
            return Ok(Some(next));
        }
        tau = next;
        (f, slope) = eval(tau)?;
        if f > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub fn simulate_record(
    model: &Model,
    g_true: f64,
    t0: f64,
    tf: f64,
    seed: u64,
) -> Result<ClassicalRecord> {
    Simulator::new(model, g_true)?.record(t0, tf, seed)
}
