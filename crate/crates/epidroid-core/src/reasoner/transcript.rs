//! Transcript record/replay for deterministic offline runs: every
//! request/reply pair is logged as one JSON line and can be served back in
//! order by a replayer backend.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ClusterContext, GuideContext, GuideOutcome, ImpactContext, MseContext, PlanContext,
    PlanOutline, Reasoner, ReasonerError, Verdict,
};
use crate::cluster::ClusterId;
use crate::mse::Scope;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub task: String,
    pub context: Value,
    pub reply: Value,
}

/// Wraps a backend and records every exchange.
pub struct TranscriptRecorder<B> {
    inner: B,
    entries: Vec<TranscriptEntry>,
}

impl<B: Reasoner> TranscriptRecorder<B> {
    pub fn new(inner: B) -> Self {
        TranscriptRecorder { inner, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn write_jsonl(&self, mut sink: impl Write) -> std::io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut sink, entry)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }

    fn record<C: Serialize, R: Serialize + Clone>(
        &mut self,
        task: &str,
        ctx: &C,
        reply: Result<R, ReasonerError>,
    ) -> Result<R, ReasonerError> {
        if let Ok(value) = &reply {
            self.entries.push(TranscriptEntry {
                task: task.to_string(),
                context: serde_json::to_value(ctx).unwrap_or(Value::Null),
                reply: serde_json::to_value(value.clone()).unwrap_or(Value::Null),
            });
        }
        reply
    }
}

impl<B: Reasoner> Reasoner for TranscriptRecorder<B> {
    fn name(&self) -> &'static str {
        "recorder"
    }

    fn summarize_cluster(&mut self, ctx: &ClusterContext) -> Result<String, ReasonerError> {
        let reply = self.inner.summarize_cluster(ctx);
        self.record("summarize", ctx, reply)
    }

    fn validate_mse(&mut self, ctx: &MseContext) -> Result<Verdict, ReasonerError> {
        let reply = self.inner.validate_mse(ctx);
        self.record("validate_mse", ctx, reply)
    }

    fn classify_scope(&mut self, ctx: &MseContext) -> Result<Scope, ReasonerError> {
        let reply = self.inner.classify_scope(ctx);
        self.record("classify_scope", ctx, reply)
    }

    fn infer_impact(&mut self, ctx: &ImpactContext) -> Result<Vec<ClusterId>, ReasonerError> {
        let reply = self.inner.infer_impact(ctx);
        self.record("infer_impact", ctx, reply)
    }

    fn plan_outline(&mut self, ctx: &PlanContext) -> Result<PlanOutline, ReasonerError> {
        let reply = self.inner.plan_outline(ctx);
        self.record("plan_composite", ctx, reply)
    }

    fn guide_mutation_step(&mut self, ctx: &GuideContext) -> Result<GuideOutcome, ReasonerError> {
        let reply = self.inner.guide_mutation_step(ctx);
        self.record("guide_mutation", ctx, reply)
    }
}

/// Serves recorded replies back in order, asserting task agreement.
pub struct TranscriptReplayer {
    entries: Vec<TranscriptEntry>,
    cursor: usize,
}

impl TranscriptReplayer {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        TranscriptReplayer { entries, cursor: 0 }
    }

    pub fn read_jsonl(source: impl BufRead) -> Result<Self, ReasonerError> {
        let mut entries = Vec::new();
        for line in source.lines() {
            let line = line.map_err(|e| ReasonerError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line).map_err(|e| ReasonerError::Transcript(e.to_string()))?,
            );
        }
        Ok(TranscriptReplayer::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    fn next<R: DeserializeOwned>(&mut self, task: &str) -> Result<R, ReasonerError> {
        let Some(entry) = self.entries.get(self.cursor) else {
            return Err(ReasonerError::Transcript(format!("exhausted at `{task}`")));
        };
        if entry.task != task {
            return Err(ReasonerError::Transcript(format!(
                "expected `{}`, engine asked `{task}`",
                entry.task
            )));
        }
        self.cursor += 1;
        serde_json::from_value(entry.reply.clone())
            .map_err(|e| ReasonerError::Transcript(e.to_string()))
    }
}

impl Reasoner for TranscriptReplayer {
    fn name(&self) -> &'static str {
        "transcript"
    }

    fn summarize_cluster(&mut self, _ctx: &ClusterContext) -> Result<String, ReasonerError> {
        self.next("summarize")
    }

    fn validate_mse(&mut self, _ctx: &MseContext) -> Result<Verdict, ReasonerError> {
        self.next("validate_mse")
    }

    fn classify_scope(&mut self, _ctx: &MseContext) -> Result<Scope, ReasonerError> {
        self.next("classify_scope")
    }

    fn infer_impact(&mut self, _ctx: &ImpactContext) -> Result<Vec<ClusterId>, ReasonerError> {
        self.next("infer_impact")
    }

    fn plan_outline(&mut self, _ctx: &PlanContext) -> Result<PlanOutline, ReasonerError> {
        self.next("plan_composite")
    }

    fn guide_mutation_step(&mut self, _ctx: &GuideContext) -> Result<GuideOutcome, ReasonerError> {
        self.next("guide_mutation")
    }
}
