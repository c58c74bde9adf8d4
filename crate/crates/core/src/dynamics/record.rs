use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::state::InitialState;

pub const CHANNEL_ATOM: usize = 0;
pub const CHANNEL_CAVITY: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    #[serde(rename = "t_us")]
    pub t: f64,
    /// 0 for atomic fluorescence, 1 for cavity emission.
    pub channel: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, rename = "g_true_mhz", skip_serializing_if = "Option::is_none")]
    pub g_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub initial_state: InitialState,
}

/// Observation window and every photodetection inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalRecord {
    pub t0: f64,
    pub tf: f64,
    pub events: Vec<Detection>,
    pub metadata: RecordMetadata,
}

impl ClassicalRecord {
    pub fn empty(t0: f64, tf: f64) -> Self {
        ClassicalRecord {
            t0,
            tf,
            events: Vec::new(),
            metadata: RecordMetadata::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, channel: usize) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }

    /// Index of the first event violating the record invariants, with a reason.
    pub fn first_violation(&self) -> Option<(Option<usize>, String)> {
        if !self.t0.is_finite() || !self.tf.is_finite() || self.tf < self.t0 {
            return Some((None, format!("invalid window [{}, {}]", self.t0, self.tf)));
        }
        let mut last = self.t0;
        for (i, e) in self.events.iter().enumerate() {
            if e.channel > CHANNEL_CAVITY {
                return Some((Some(i), format!("channel {} is not 0 or 1", e.channel)));
            }
            if !e.t.is_finite() || e.t > self.tf {
                return Some((Some(i), format!("time {} outside the window", e.t)));
            }
            let ordered = if i == 0 { e.t >= last } else { e.t > last };
            if !ordered {
                return Some((Some(i), format!("time {} does not follow {}", e.t, last)));
            }
            last = e.t;
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_violation() {
            None => Ok(()),
            Some((idx, msg)) => Err(Error::format(
                None,
                match idx {
                    Some(i) => format!("event {i}: {msg}"),
                    None => msg,
                },
            )),
        }
    }

    /// Events with `t ≤ until`, same window start, closing at `until`.
    pub fn truncated(&self, until: f64) -> ClassicalRecord {
        ClassicalRecord {
            t0: self.t0,
            tf: until,
            events: self.events.iter().copied().filter(|e| e.t <= until).collect(),
            metadata: self.metadata.clone(),
        }
    }
}
