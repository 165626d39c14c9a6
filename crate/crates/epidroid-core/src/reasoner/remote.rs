//! Wire client for a remote reasoning service: POST /v1/reason with a
//! strict structured schema, bounded timeout, and at most two retries.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::{
    ClusterContext, GuideContext, GuideOutcome, ImpactContext, MseContext, PlanContext,
    PlanOutline, Reasoner, ReasonerError, Verdict,
};
use crate::cluster::ClusterId;
use crate::mse::Scope;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// `http://host:port` base; the client posts to `/v1/reason`.
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub token: Option<String>,
    pub session: String,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout_ms: 20_000,
            retries: 2,
            token: None,
            session: "default".into(),
        }
    }
}

pub struct RemoteReasoner {
    config: RemoteConfig,
}

impl RemoteReasoner {
    pub fn new(config: RemoteConfig) -> RemoteReasoner {
        RemoteReasoner { config }
    }

    fn authority(&self) -> Result<(String, String), ReasonerError> {
        let rest = self
            .config
            .endpoint
            .strip_prefix("http://")
            .ok_or_else(|| ReasonerError::Transport("endpoint must be http://host:port".into()))?;
        let host_port = rest.split('/').next().unwrap_or(rest);
        Ok((host_port.to_string(), "/v1/reason".to_string()))
    }

    fn post_once(&self, body: &str) -> Result<Value, ReasonerError> {
        let (authority, path) = self.authority()?;
        let deadline = Instant::now() + Duration::from_millis(self.config.timeout_ms);
        let stream = TcpStream::connect(&authority)
            .map_err(|e| ReasonerError::Transport(format!("connect {authority}: {e}")))?;
        let timeout = Some(Duration::from_millis(self.config.timeout_ms));
        stream.set_read_timeout(timeout).ok();
        stream.set_write_timeout(timeout).ok();
        let mut stream = stream;
        let auth_header = self
            .config
            .token
            .as_ref()
            .map(|t| format!("Authorization: Bearer {t}\r\n"))
            .unwrap_or_default();
        let request = format!(
            "POST {path} HTTP/1.1\r\nHost: {authority}\r\nContent-Type: application/json\r\n{auth_header}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream
            .write_all(request.as_bytes())
            .map_err(|e| ReasonerError::Transport(format!("write: {e}")))?;

        let mut response = Vec::new();
        let mut buf = [0u8; 4096];
        loop {
            if Instant::now() > deadline {
                return Err(ReasonerError::Timeout(self.config.timeout_ms));
            }
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => response.extend_from_slice(&buf[..n]),
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut =>
                {
                    return Err(ReasonerError::Timeout(self.config.timeout_ms));
                }
                Err(e) => return Err(ReasonerError::Transport(format!("read: {e}"))),
            }
        }
        let text = String::from_utf8_lossy(&response);
        let Some((head, body)) = text.split_once("\r\n\r\n") else {
            return Err(ReasonerError::Malformed("no header/body boundary".into()));
        };
        let status = head.lines().next().unwrap_or_default();
        if !status.contains(" 200") {
            return Err(ReasonerError::Transport(format!("status line: {status}")));
        }
        let reply: Value = serde_json::from_str(body.trim())
            .map_err(|e| ReasonerError::Malformed(e.to_string()))?;
        if reply.get("ok").and_then(Value::as_bool) != Some(true) {
            let message = reply
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("service reported failure");
            return Err(ReasonerError::Malformed(message.to_string()));
        }
        reply
            .get("result")
            .cloned()
            .ok_or_else(|| ReasonerError::Malformed("missing result".into()))
    }

    /// Post with retries; never blocks past (retries + 1) x timeout.
    fn call<C: Serialize, R: DeserializeOwned>(
        &self,
        task: &str,
        context: &C,
    ) -> Result<R, ReasonerError> {
        let body = json!({
            "task": task,
            "session": self.config.session,
            "context": context,
        })
        .to_string();
        let mut last = ReasonerError::Transport("no attempt made".into());
        for _ in 0..=self.config.retries {
            match self.post_once(&body) {
                Ok(result) => {
                    return serde_json::from_value(result)
                        .map_err(|e| ReasonerError::Malformed(e.to_string()));
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

#[derive(serde::Deserialize)]
struct SummaryReply {
    summary: String,
}

#[derive(serde::Deserialize)]
struct VerdictReply {
    verdict: Verdict,
}

#[derive(serde::Deserialize)]
struct ScopeReply {
    scope: Scope,
}

#[derive(serde::Deserialize)]
struct ImpactReply {
    clusters: Vec<ClusterId>,
}

#[derive(serde::Deserialize)]
struct PlanReply {
    entries: Vec<(ClusterId, Option<u32>)>,
    #[serde(default)]
    rationale: String,
}

impl Reasoner for RemoteReasoner {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn summarize_cluster(&mut self, ctx: &ClusterContext) -> Result<String, ReasonerError> {
        self.call::<_, SummaryReply>("summarize", ctx).map(|r| r.summary)
    }

    fn validate_mse(&mut self, ctx: &MseContext) -> Result<Verdict, ReasonerError> {
        self.call::<_, VerdictReply>("validate_mse", ctx).map(|r| r.verdict)
    }

    fn classify_scope(&mut self, ctx: &MseContext) -> Result<Scope, ReasonerError> {
        self.call::<_, ScopeReply>("classify_scope", ctx).map(|r| r.scope)
    }

    fn infer_impact(&mut self, ctx: &ImpactContext) -> Result<Vec<ClusterId>, ReasonerError> {
        self.call::<_, ImpactReply>("infer_impact", ctx).map(|r| r.clusters)
    }

    fn plan_outline(&mut self, ctx: &PlanContext) -> Result<PlanOutline, ReasonerError> {
        self.call::<_, PlanReply>("plan_composite", ctx)
            .map(|r| PlanOutline { entries: r.entries, rationale: r.rationale })
    }

    fn guide_mutation_step(&mut self, ctx: &GuideContext) -> Result<GuideOutcome, ReasonerError> {
        self.call::<_, GuideOutcome>("guide_mutation", ctx)
    }
}
