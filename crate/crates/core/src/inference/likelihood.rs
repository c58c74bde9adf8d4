use std::hash::{Hash, Hasher};

use crate::dynamics::{CVector, ClassicalRecord, Detection, Propagator};
use crate::error::{Error, Result};
use crate::model::Model;

use super::estimate::{estimate_from_loglik, Estimate};
use super::grid::GGrid;

/// Running log of the exclusive probability density for one candidate `g`.
///
/// The conditional state is evolved exactly between detections, the recorded
/// jump operator is applied at each detection, and the squared norm removed
/// by each renormalization is added to `log_acc`. The `dtⁿ` measure factor
/// is common to every `g` and is left out.
pub(crate) struct LikelihoodStream<'a> {
    model: &'a Model,
    prop: &'a Propagator,
    psi: CVector,
    log_acc: f64,
    t: f64,
    pending: usize,
    cadence: usize,
    excluded: bool,
}

impl<'a> LikelihoodStream<'a> {
    pub fn new(model: &'a Model, prop: &'a Propagator, record: &ClassicalRecord) -> Result<Self> {
        Self::with_cadence(model, prop, record, 1)
    }

    /// Renormalizes after every `cadence` detections.
    pub fn with_cadence(
        model: &'a Model,
        prop: &'a Propagator,
        record: &ClassicalRecord,
        cadence: usize,
    ) -> Result<Self> {
        Ok(LikelihoodStream {
            model,
            prop,
            psi: record.metadata.initial_state.vector(model)?,
            log_acc: 0.0,
            t: record.t0,
            pending: 0,
            cadence: cadence.max(1),
            excluded: false,
        })
    }

    pub fn push(&mut self, event: &Detection) -> Result<()> {
        if self.excluded {
            return Ok(());
        }
        let evolved = self.prop.apply(&self.psi, event.t - self.t)?;
        self.psi = self.model.jump_sparse(event.channel).apply(&evolved);
        self.t = event.t;
        self.pending += 1;

        let n2 = self.psi.norm_squared();
        if n2 == 0.0 {
            self.excluded = true;
            return Ok(());
        }
        if !n2.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite amplitude at t = {} us for g = {}",
                event.t, self.prop.g
            )));
        }
        if self.pending >= self.cadence {
            self.renormalize(n2);
        }
        Ok(())
    }

    fn renormalize(&mut self, n2: f64) {
        self.psi.unscale_mut(n2.sqrt());
        self.log_acc += n2.ln();
        self.pending = 0;
    }

    /// Log-density of the partial record ending at the last detection.
    pub fn value(&self) -> f64 {
        if self.excluded {
            f64::NEG_INFINITY
        } else {
            self.log_acc + self.psi.norm_squared().ln()
        }
    }

    /// Log-density of the partial record extended by no-jump evolution to `until`.
    pub fn value_at(&self, until: f64) -> Result<f64> {
        if self.excluded {
            return Ok(f64::NEG_INFINITY);
        }
        let n2 = self.prop.apply(&self.psi, until - self.t)?.norm_squared();
        if !n2.is_finite() {
            return Err(Error::Numeric(format!("non-finite survival for g = {}", self.prop.g)));
        }
        Ok(self.log_acc + n2.ln())
    }
}

/// Log of the exclusive probability density of `record` given coupling `g`.
pub fn log_likelihood(model: &Model, record: &ClassicalRecord, g: f64) -> Result<f64> {
    record.validate()?;
    let prop = Propagator::new(&model.effective_hamiltonian(g)?)?;
    let mut stream = LikelihoodStream::new(model, &prop, record)?;
    for e in &record.events {
        stream.push(e)?;
    }
    stream.value_at(record.tf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Number of detections included (1-based).
    pub jump_index: usize,
    pub time: f64,
    pub loglik: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSurface {
    pub grid: GGrid,
    pub loglik: Vec<f64>,
    pub history: Option<Vec<Snapshot>>,
    pub record_ref: String,
    /// Detections scored and end of the scored window.
    pub jump_index: usize,
    pub time: f64,
}

impl LikelihoodSurface {
    /// Normalized likelihood under a uniform prior on the grid.
    pub fn posterior(&self) -> Vec<f64> {
        super::estimate::posterior(&self.loglik)
    }
}

/// Stable fingerprint of a record's contents.
pub fn record_fingerprint(record: &ClassicalRecord) -> String {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    record.t0.to_bits().hash(&mut h);
    record.tf.to_bits().hash(&mut h);
    for e in &record.events {
        e.t.to_bits().hash(&mut h);
        e.channel.hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

/// Diagonalized propagators for every grid point, reusable across records.
#[derive(Debug, Clone)]
pub struct GridScorer<'m> {
    model: &'m Model,
    grid: GGrid,
    propagators: Vec<Propagator>,
}

impl<'m> GridScorer<'m> {
    pub fn new(model: &'m Model, grid: &GGrid) -> Result<Self> {
        let propagators = grid
            .values()
            .iter()
            .map(|&g| Propagator::new(&model.effective_hamiltonian(g)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridScorer { model, grid: grid.clone(), propagators })
    }

    pub fn grid(&self) -> &GGrid {
        &self.grid
    }

    fn streams<'s>(&'s self, record: &ClassicalRecord) -> Result<Vec<LikelihoodStream<'s>>> {
        record.validate()?;
        self.propagators
            .iter()
            .map(|p| LikelihoodStream::new(self.model, p, record))
            .collect()
    }

    pub fn surface(&self, record: &ClassicalRecord, with_history: bool) -> Result<LikelihoodSurface> {
        let mut streams = self.streams(record)?;
        let mut history = with_history.then(Vec::new);
        for (i, e) in record.events.iter().enumerate() {
            for s in streams.iter_mut() {
                s.push(e)?;
            }
            if let Some(h) = history.as_mut() {
                h.push(Snapshot {
                    jump_index: i + 1,
                    time: e.t,
                    loglik: streams.iter().map(LikelihoodStream::value).collect(),
                });
            }
        }
        let loglik = streams
            .iter()
            .map(|s| s.value_at(record.tf))
            .collect::<Result<Vec<_>>>()?;
        Ok(LikelihoodSurface {
            grid: self.grid.clone(),
            loglik,
            history,
            record_ref: record_fingerprint(record),
            jump_index: record.len(),
            time: record.tf,
        })
    }

    /// Estimates at absolute times. Each checkpoint includes the events with
    /// `t ≤ T` and the no-jump factor from the last of them up to `T`.
    pub fn time_series(
        &self,
        record: &ClassicalRecord,
        checkpoints: &[f64],
        refine: bool,
    ) -> Result<Vec<Estimate>> {
        self.time_series_partial(record, checkpoints, refine)?
            .into_iter()
            .collect::<Result<Vec<_>>>()
    }

    /// Like [`Self::time_series`], keeping per-checkpoint failures instead of
    /// aborting on the first one.
    pub fn time_series_partial(
        &self,
        record: &ClassicalRecord,
        checkpoints: &[f64],
        refine: bool,
    ) -> Result<Vec<Result<Estimate>>> {
        check_checkpoints(record, checkpoints)?;
        let mut streams = self.streams(record)?;
        let mut next = 0;
        let mut out = Vec::with_capacity(checkpoints.len());
        for &cp in checkpoints {
            while next < record.len() && record.events[next].t <= cp {
                for s in streams.iter_mut() {
                    s.push(&record.events[next])?;
                }
                next += 1;
            }
            let loglik = streams
                .iter()
                .map(|s| s.value_at(cp))
                .collect::<Result<Vec<_>>>()?;
            out.push(estimate_from_loglik(&self.grid, &loglik, refine, next, cp));
        }
        Ok(out)
    }

    /// One estimate per detection, each using the record up to and including it.
    pub fn per_jump(&self, record: &ClassicalRecord, refine: bool) -> Result<Vec<Estimate>> {
        let surface = self.surface(record, true)?;
        surface
            .history
            .unwrap_or_default()
            .iter()
            .map(|snap| estimate_from_loglik(&self.grid, &snap.loglik, refine, snap.jump_index, snap.time))
            .collect()
    }
}

fn check_checkpoints(record: &ClassicalRecord, checkpoints: &[f64]) -> Result<()> {
    let mut last = record.t0;
    for &cp in checkpoints {
        if !(cp >= last) || cp > record.tf {
            return Err(Error::InvalidParameters(format!(
                "checkpoints must be ascending within [{}, {}], got {cp}",
                record.t0, record.tf
            )));
        }
        last = cp;
    }
    Ok(())
}

pub fn likelihood_surface(
    model: &Model,
    record: &ClassicalRecord,
    grid: &GGrid,
    with_history: bool,
) -> Result<LikelihoodSurface> {
    GridScorer::new(model, grid)?.surface(record, with_history)
}

pub fn estimate_time_series(
    model: &Model,
    record: &ClassicalRecord,
    grid: &GGrid,
    checkpoints: &[f64],
    refine: bool,
) -> Result<Vec<Estimate>> {
    GridScorer::new(model, grid)?.time_series(record, checkpoints, refine)
}

pub fn estimate_per_jump(
    model: &Model,
    record: &ClassicalRecord,
    grid: &GGrid,
    refine: bool,
) -> Result<Vec<Estimate>> {
    GridScorer::new(model, grid)?.per_jump(record, refine)
}
