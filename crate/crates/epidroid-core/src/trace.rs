//! Execution traces: chained steps with per-step coverage, and their
//! JSON-Lines wire format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterId;
use crate::model::Event;

/// One executed step: abstract pre/post states, the event, the labels it
/// newly covered, and the page clusters on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub pre_signature: u64,
    pub event: Event,
    pub post_signature: u64,
    pub coverage_delta: Vec<String>,
    pub pre_cluster: ClusterId,
    pub post_cluster: ClusterId,
}

/// An ordered, chained sequence of steps from one explorer run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub origin: String,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace record {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace steps do not chain at index {0}")]
    BrokenChain(usize),
}

impl Trace {
    pub fn new(origin: impl Into<String>, seed: u64) -> Trace {
        Trace { origin: origin.into(), seed, steps: Vec::new() }
    }

    /// Check that step i's post state equals step i+1's pre state.
    pub fn check_chain(&self) -> Result<(), TraceError> {
        for i in 1..self.steps.len() {
            if self.steps[i].pre_signature != self.steps[i - 1].post_signature {
                return Err(TraceError::BrokenChain(i));
            }
        }
        Ok(())
    }

    /// Union of all step deltas.
    pub fn covered_labels(&self) -> std::collections::BTreeSet<String> {
        self.steps
            .iter()
            .flat_map(|s| s.coverage_delta.iter().cloned())
            .collect()
    }
}

/// On-disk step record, one JSON object per line.
#[derive(Serialize, Deserialize)]
struct StepRecord {
    i: usize,
    pre: String,
    event: Event,
    post: String,
    cov: Vec<String>,
    pre_c: ClusterId,
    post_c: ClusterId,
}

/// Write a trace as JSON Lines.
pub fn write_trace(mut sink: impl Write, trace: &Trace) -> Result<(), TraceError> {
    for (i, step) in trace.steps.iter().enumerate() {
        let record = StepRecord {
            i,
            pre: format!("{:016x}", step.pre_signature),
            event: step.event.clone(),
            post: format!("{:016x}", step.post_signature),
            cov: step.coverage_delta.clone(),
            pre_c: step.pre_cluster,
            post_c: step.post_cluster,
        };
        serde_json::to_writer(&mut sink, &record)
            .map_err(|source| TraceError::Malformed { line: i + 1, source })?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a JSON-Lines trace.
pub fn read_trace(source: impl BufRead, origin: &str, seed: u64) -> Result<Trace, TraceError> {
    let mut trace = Trace::new(origin, seed);
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StepRecord = serde_json::from_str(&line)
            .map_err(|source| TraceError::Malformed { line: idx + 1, source })?;
        trace.steps.push(TraceStep {
            pre_signature: u64::from_str_radix(&record.pre, 16).unwrap_or(0),
            event: record.event,
            post_signature: u64::from_str_radix(&record.post, 16).unwrap_or(0),
            coverage_delta: record.cov,
            pre_cluster: record.pre_c,
            post_cluster: record.post_c,
        });
    }
    Ok(trace)
}
