//! HTTP-backed oracle and zero-shot scorer.
//!
//! Both POST one JSON record per point:
//!
//! ```text
//! request:  {"request_id": "...", "s1": "...", "s2": "...", "category": "..."}
//! oracle:   {"request_id": "...", "label": 0 | 1}
//! scorer:   {"request_id": "...", "p_positive": 0.73}
//! ```
//!
//! `label` may also be `true`/`false` or the strings `"0"`, `"1"`, `"yes"`,
//! `"no"`. A bare scalar body is accepted in place of the object. Anything
//! else is a protocol error carrying the raw body; protocol errors are not
//! retried. Connection failures, timeouts, 408, 429 and 5xx responses are
//! retried with exponential backoff up to `max_attempts`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use seedloop_core::prompt::PromptTemplate;
use seedloop_core::scorer::ScorerError;
use seedloop_core::{Label, Oracle, OracleAnswer, OracleError, OracleRequest, Scorer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteSettings {
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Concurrent requests per batch.
    pub parallelism: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            timeout_ms: 30_000,
            max_attempts: 4,
            backoff_ms: 200,
            max_backoff_ms: 5_000,
            parallelism: 4,
        }
    }
}

impl RemoteSettings {
    fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_ms.saturating_mul(1u64 << retry.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub request_id: &'a str,
    pub s1: &'a str,
    pub s2: &'a str,
    pub category: &'a str,
}

enum Failure {
    Retryable(String),
    Fatal(OracleError),
}

struct Client {
    agent: ureq::Agent,
    url: String,
    settings: RemoteSettings,
}

impl Client {
    fn new(url: String, settings: RemoteSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Client { agent, url, settings }
    }

    fn attempt(&self, body: &str) -> Result<String, Failure> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            408 | 429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(OracleError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            })),
        }
    }

    /// Posts `payload` and hands the body to `parse`, retrying transport
    /// failures.
    fn call<T>(
        &self,
        payload: &WireRequest<'_>,
        parse: impl Fn(&str) -> Result<T, OracleError>,
    ) -> Result<T, OracleError> {
        let body = serde_json::to_string(payload).expect("wire request serializes");
        let attempts = self.settings.max_attempts.max(1);
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                thread::sleep(self.settings.backoff(n - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return parse(&text),
                Err(Failure::Fatal(OracleError::Transport { message, .. })) => {
                    return Err(OracleError::Transport {
                        attempts: n + 1,
                        message,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    tracing::warn!(url = %self.url, attempt = n + 1, "remote call failed: {msg}");
                    last = msg;
                }
            }
        }
        Err(OracleError::Transport {
            attempts,
            message: last,
        })
    }
}

/// Runs `f` over `0..n` on up to `parallelism` threads; results keep index
/// order and the first error by index wins.
fn fan_out<T: Send, E: Send>(
    n: usize,
    parallelism: usize,
    f: impl Fn(usize) -> Result<T, E> + Sync,
) -> Result<Vec<T>, E> {
    let workers = parallelism.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, E>>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("slots lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every index processed"))
        .collect()
}

/// Reads a label written as 0/1, a boolean, or "0", "1", "yes", "no".
pub fn scalar_label(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_u64() {
            Some(0) => Some(false),
            Some(1) => Some(true),
            _ => None,
        },
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "1" | "yes" | "true" => Some(true),
            "0" | "no" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Maps an oracle response body to a label.
pub fn parse_label(body: &str, request_id: &str) -> Result<bool, OracleError> {
    let protocol = || OracleError::Protocol {
        payload: body.to_string(),
    };
    let value: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        // A bare, unquoted word such as `yes` is not JSON.
        Err(_) => Value::String(body.trim().to_string()),
    };
    match &value {
        Value::Object(map) => {
            if let Some(id) = map.get("request_id") {
                if id.as_str() != Some(request_id) {
                    return Err(protocol());
                }
            }
            map.get("label").and_then(scalar_label).ok_or_else(protocol)
        }
        other => scalar_label(other).ok_or_else(protocol),
    }
}

/// Maps a scorer response body to a probability.
pub fn parse_probability(body: &str, request_id: &str) -> Result<f64, OracleError> {
    let protocol = || OracleError::Protocol {
        payload: body.to_string(),
    };
    let value: Value = serde_json::from_str(body).map_err(|_| protocol())?;
    let p = match &value {
        Value::Object(map) => {
            if let Some(id) = map.get("request_id") {
                if id.as_str() != Some(request_id) {
                    return Err(protocol());
                }
            }
            map.get("p_positive").and_then(Value::as_f64)
        }
        other => other.as_f64(),
    };
    p.filter(|p| (0.0..=1.0).contains(p)).ok_or_else(protocol)
}

/// An oracle behind an HTTP endpoint, typically an LLM adapter.
pub struct RemoteOracle {
    id: String,
    client: Client,
    template: PromptTemplate,
}

impl RemoteOracle {
    pub fn new(url: String, template: PromptTemplate, settings: RemoteSettings) -> Self {
        RemoteOracle {
            id: format!("remote:{url}"),
            client: Client::new(url, settings),
            template,
        }
    }

    fn ask(&self, req: &OracleRequest<'_>) -> Result<OracleAnswer, OracleError> {
        let started = Instant::now();
        let (s1, s2) = self.template.render(req.point.text());
        let wire = WireRequest {
            request_id: req.request_id,
            s1: &s1,
            s2: &s2,
            category: req.category,
        };
        let label = self.client.call(&wire, |body| parse_label(body, req.request_id))?;
        Ok(OracleAnswer {
            request_id: req.request_id.to_string(),
            label: Label(label),
            oracle_id: self.id.clone(),
            latency: started.elapsed(),
        })
    }
}

impl Oracle for RemoteOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError> {
        fan_out(requests.len(), self.client.settings.parallelism, |i| {
            self.ask(&requests[i])
        })
    }
}

/// A zero-shot scorer behind an HTTP endpoint.
pub struct RemoteScorer {
    id: String,
    client: Client,
    template: PromptTemplate,
}

impl RemoteScorer {
    pub fn new(url: String, template: PromptTemplate, settings: RemoteSettings) -> Self {
        RemoteScorer {
            id: format!("remote:{url}"),
            client: Client::new(url, settings),
            template,
        }
    }

    fn score_one(&self, index: usize, text: &str) -> Result<f64, ScorerError> {
        let (s1, s2) = self.template.render(text);
        let request_id = format!("score-{index}");
        let wire = WireRequest {
            request_id: &request_id,
            s1: &s1,
            s2: &s2,
            category: self.template.category(),
        };
        self.client
            .call(&wire, |body| parse_probability(body, &request_id))
            .map_err(|e| ScorerError {
                scorer: self.id.clone(),
                message: e.to_string(),
            })
    }
}

impl Scorer for RemoteScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        self.score_one(0, text)
    }

    fn score_batch(&self, texts: &[&str]) -> Result<Vec<f64>, ScorerError> {
        fan_out(texts.len(), self.client.settings.parallelism, |i| {
            self.score_one(i, texts[i])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_schema() {
        for (body, want) in [
            (r#"{"request_id":"r","label":1}"#, true),
            (r#"{"request_id":"r","label":0}"#, false),
            (r#"{"label":"1"}"#, true),
            (r#"{"label":true}"#, true),
            (r#"{"label":"No"}"#, false),
            ("1", true),
            ("\"1\"", true),
            ("yes", true),
        ] {
            assert_eq!(parse_label(body, "r").unwrap(), want, "{body}");
        }
    }

    #[test]
    fn unparseable_label_keeps_payload() {
        for body in [
            "maybe",
            r#"{"label":"maybe"}"#,
            r#"{"label":2}"#,
            r#"{"request_id":"other","label":1}"#,
            "{}",
        ] {
            match parse_label(body, "r") {
                Err(OracleError::Protocol { payload }) => assert_eq!(payload, body),
                other => panic!("{body}: {other:?}"),
            }
        }
    }

    #[test]
    fn probability_schema() {
        assert_eq!(
            parse_probability(r#"{"request_id":"s","p_positive":0.25}"#, "s").unwrap(),
            0.25
        );
        assert_eq!(parse_probability("0.5", "s").unwrap(), 0.5);
        assert!(parse_probability(r#"{"p_positive":1.5}"#, "s").is_err());
    }

    #[test]
    fn backoff_doubles_to_cap() {
        let s = RemoteSettings {
            backoff_ms: 100,
            max_backoff_ms: 350,
            ..Default::default()
        };
        let got: Vec<u128> = (0..4).map(|n| s.backoff(n).as_millis()).collect();
        assert_eq!(got, [100, 200, 350, 350]);
    }

    #[test]
    fn fan_out_keeps_order_and_first_error() {
        let out = fan_out(50, 4, |i| Ok::<_, ()>(i * 2)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        let err = fan_out(50, 4, |i| if i % 10 == 7 { Err(i) } else { Ok(i) }).unwrap_err();
        assert_eq!(err, 7);
    }
}
