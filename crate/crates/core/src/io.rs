//! Configuration and record files, and the CSV tables written by the
//! command-line tool.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::dynamics::{ClassicalRecord, Detection, InitialState, RecordMetadata};
use crate::ensemble::{default_checkpoints, EnsembleSpec, Histogram, StatsRow, DEFAULT_CHECKPOINTS};
use crate::error::{Error, Result};
use crate::inference::{GGrid, LikelihoodSurface};
use crate::model::{ModelParams, DEFAULT_N_TRUNC};

pub const CONFIG_SCHEMA: &str = "qsysid-config/1";
pub const RECORD_SCHEMA: &str = "qsysid-record/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub step_mhz: f64,
}

/// Everything needed to reproduce a run. Frequencies are value/2π in MHz,
/// times in μs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "config_schema")]
    pub schema: String,
    pub g0_mhz: f64,
    pub gamma_perp_mhz: f64,
    pub kappa_mhz: f64,
    pub epsilon_mhz: f64,
    pub g_true_mhz: f64,
    #[serde(default = "default_n_trunc")]
    pub n_trunc: usize,
    pub grid: GridConfig,
    pub t0_us: f64,
    pub tf_us: f64,
    pub seed: u64,
    pub n_traj: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints_us: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub with_history: bool,
    #[serde(default)]
    pub initial_state: InitialState,
}

fn config_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

fn default_n_trunc() -> usize {
    DEFAULT_N_TRUNC
}

fn yes() -> bool {
    true
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let key = match backticked(&message) {
                Some(field) if message.starts_with("missing field") => {
                    if path == "." {
                        field.to_string()
                    } else {
                        format!("{path}.{field}")
                    }
                }
                _ => path,
            };
            Error::config(key, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::config(
                "schema",
                format!("unsupported version {:?}, expected {CONFIG_SCHEMA:?}", self.schema),
            ));
        }
        for (key, value) in [
            ("g0_mhz", self.g0_mhz),
            ("gamma_perp_mhz", self.gamma_perp_mhz),
            ("kappa_mhz", self.kappa_mhz),
            ("epsilon_mhz", self.epsilon_mhz),
            ("g_true_mhz", self.g_true_mhz),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::config(key, format!("must be finite and >= 0, got {value}")));
            }
        }
        if self.kappa_mhz + self.gamma_perp_mhz <= 0.0 {
            return Err(Error::config("kappa_mhz", "kappa_mhz + gamma_perp_mhz must be positive"));
        }
        if self.n_trunc < 1 {
            return Err(Error::config("n_trunc", "must be at least 1"));
        }
        self.grid()?;
        if !self.t0_us.is_finite() {
            return Err(Error::config("t0_us", format!("must be finite, got {}", self.t0_us)));
        }
        if !self.tf_us.is_finite() || !(self.tf_us > self.t0_us) {
            return Err(Error::config("tf_us", format!("must exceed t0_us, got {}", self.tf_us)));
        }
        if self.n_traj < 1 {
            return Err(Error::config("n_traj", "must be at least 1"));
        }
        if let Some(cps) = &self.checkpoints_us {
            if cps.is_empty() {
                return Err(Error::config("checkpoints_us", "must not be empty"));
            }
            let mut last = self.t0_us;
            for &cp in cps {
                if !(cp >= last) || cp > self.tf_us {
                    return Err(Error::config(
                        "checkpoints_us",
                        format!("must be ascending within [t0_us, tf_us], got {cp}"),
                    ));
                }
                last = cp;
            }
        }
        if self.initial_state.photons > self.n_trunc {
            return Err(Error::config(
                "initial_state.photons",
                format!("{} exceeds n_trunc {}", self.initial_state.photons, self.n_trunc),
            ));
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            g0: self.g0_mhz,
            gamma_perp: self.gamma_perp_mhz,
            kappa: self.kappa_mhz,
            epsilon: self.epsilon_mhz,
            n_trunc: self.n_trunc,
        }
    }

    pub fn grid(&self) -> Result<GGrid> {
        GGrid::new(self.grid.min_mhz, self.grid.max_mhz, self.grid.step_mhz)
    }

    /// Configured checkpoints, or 20 evenly spaced ones over `(t0, tf]`.
    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoints_us
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.t0_us, self.tf_us, DEFAULT_CHECKPOINTS))
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            g_true: self.g_true_mhz,
            grid: self.grid()?,
            n_traj: self.n_traj,
            t0: self.t0_us,
            tf: self.tf_us,
            checkpoints: self.checkpoints(),
            master_seed: self.seed,
            refine: self.refine,
            initial_state: self.initial_state,
        })
    }
}

fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<Config> {
    Config::from_json(&fs::read_to_string(path)?)
}

pub fn write_config(path: impl AsRef<Path>, config: &Config) -> Result<()> {
    fs::write(path, config.to_json() + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct RecordOut<'a> {
    schema: &'static str,
    t0_us: f64,
    tf_us: f64,
    metadata: &'a RecordMetadata,
    events: &'a [Detection],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn<'a> {
    #[serde(default)]
    schema: Option<String>,
    t0_us: f64,
    tf_us: f64,
    #[serde(default)]
    metadata: RecordMetadata,
    #[serde(borrow)]
    events: Vec<&'a RawValue>,
}

/// JSON text of a record. Times use the shortest representation that
/// parses back to the same `f64`.
pub fn record_to_json(record: &ClassicalRecord) -> Result<String> {
    record.validate()?;
    let out = RecordOut {
        schema: RECORD_SCHEMA,
        t0_us: record.t0,
        tf_us: record.tf,
        metadata: &record.metadata,
        events: &record.events,
    };
    serde_json::to_string_pretty(&out).map_err(|e| Error::format(None, e.to_string()))
}

pub fn record_from_json(text: &str) -> Result<ClassicalRecord> {
    let raw: RecordIn = serde_json::from_str(text)
        .map_err(|e| Error::format(Some(e.line()).filter(|&l| l > 0), e.to_string()))?;
    if let Some(schema) = &raw.schema {
        if schema != RECORD_SCHEMA {
            return Err(Error::format(
                None,
                format!("unsupported record version {schema:?}, expected {RECORD_SCHEMA:?}"),
            ));
        }
    }
    let line_of = |v: &RawValue| {
        let offset = v.get().as_ptr() as usize - text.as_ptr() as usize;
        text[..offset].bytes().filter(|&b| b == b'\n').count() + 1
    };
    let events = raw
        .events
        .iter()
        .map(|v| {
            serde_json::from_str::<Detection>(v.get())
                .map_err(|e| Error::format(Some(line_of(v)), format!("bad event: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let record = ClassicalRecord { t0: raw.t0_us, tf: raw.tf_us, events, metadata: raw.metadata };
    if let Some((index, message)) = record.first_violation() {
        return Err(Error::format(index.map(|i| line_of(raw.events[i])), message));
    }
    Ok(record)
}

pub fn write_record(path: impl AsRef<Path>, record: &ClassicalRecord) -> Result<()> {
    fs::write(path, record_to_json(record)? + "\n")?;
    Ok(())
}

pub fn read_record(path: impl AsRef<Path>) -> Result<ClassicalRecord> {
    record_from_json(&fs::read_to_string(path)?)
}

/// `g_mhz,loglik,posterior`
pub fn write_surface_csv<W: std::io::Write>(out: W, surface: &LikelihoodSurface) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g_mhz", "loglik", "posterior"])?;
    for ((g, l), p) in surface.grid.values().iter().zip(&surface.loglik).zip(surface.posterior()) {
        w.write_record([g.to_string(), l.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (detection, grid point): `jump_index,time_us,g_mhz,loglik,posterior`.
pub fn write_history_csv<W: std::io::Write>(out: W, surface: &LikelihoodSurface) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["jump_index", "time_us", "g_mhz", "loglik", "posterior"])?;
    for snap in surface.history.as_deref().unwrap_or_default() {
        let post = crate::inference::posterior(&snap.loglik);
        for ((g, l), p) in surface.grid.values().iter().zip(&snap.loglik).zip(post) {
            w.write_record([
                snap.jump_index.to_string(),
                snap.time.to_string(),
                g.to_string(),
                l.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `time_us,n,mean_mle_mhz,std_mle_mhz,rms_err_mhz`
pub fn write_stats_csv<W: std::io::Write>(out: W, rows: &[StatsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_us", "n", "mean_mle_mhz", "std_mle_mhz", "rms_err_mhz"])?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.rms_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `time_us,bin_center_mhz,count`
pub fn write_hist_csv<W: std::io::Write>(out: W, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_us", "bin_center_mhz", "count"])?;
    for (c, n) in hist.centers.iter().zip(&hist.counts) {
        w.write_record([hist.time.to_string(), c.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
