//! HTTP bridge to an inference server.
//!
//! One POST per generation, versioned JSON both ways:
//!
//! ```text
//! request  {version, query, frames: [{t_ms, data_b64}], want_logprobs, want_attention, max_tokens}
//! response {text, token_logprobs: [...], frame_attention: [...]?}
//! ```
//!
//! `query` carries the fully rendered prompt, so the server needs no
//! knowledge of templates. Token log-probabilities are required (the
//! confidence gate cannot run without them); attention is optional and
//! its absence merely disables attention-fallback grounding.

use std::time::Duration;

use base64::Engine;

use crate::backends::{AnswerModel, GenerateRequest};
use crate::error::{Error, Result};
use crate::prompt;
use crate::types::GenerationResult;

pub const WIRE_VERSION: u32 = 1;
/// Environment override for the endpoint URL.
pub const ENDPOINT_ENV: &str = "ADAFOCUS_BACKEND_ENDPOINT";
/// Environment pass-through for the Authorization header value.
pub const AUTH_ENV: &str = "ADAFOCUS_BACKEND_AUTH";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WireFrame {
    pub t_ms: u64,
    pub data_b64: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WireRequest {
    pub version: u32,
    pub query: String,
    pub frames: Vec<WireFrame>,
    pub want_logprobs: bool,
    pub want_attention: bool,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WireResponse {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default)]
    pub frame_attention: Option<Vec<f64>>,
}

/// Connection settings for [`HttpAnswerModel`].
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub max_tokens: u32,
    pub want_attention: bool,
    /// Sent verbatim as the Authorization header when present.
    pub auth_header: Option<String>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(120),
            max_tokens: 256,
            want_attention: true,
            auth_header: None,
        }
    }

    /// Applies environment overrides through `lookup`: the endpoint env
    /// var wins over `fallback_endpoint`, and the auth env var fills the
    /// Authorization header.
    pub fn from_env_with(
        lookup: impl Fn(&str) -> Option<String>,
        fallback_endpoint: Option<&str>,
    ) -> Result<Self> {
        let endpoint = lookup(ENDPOINT_ENV)
            .or_else(|| fallback_endpoint.map(str::to_owned))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no backend endpoint: pass one or set {ENDPOINT_ENV}"
                ))
            })?;
        let mut config = Self::new(endpoint);
        config.auth_header = lookup(AUTH_ENV);
        Ok(config)
    }

    /// [`Self::from_env_with`] against the process environment.
    pub fn from_env(fallback_endpoint: Option<&str>) -> Result<Self> {
        Self::from_env_with(|k| std::env::var(k).ok(), fallback_endpoint)
    }
}

/// [`AnswerModel`] speaking the wire protocol above.
pub struct HttpAnswerModel {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpAnswerModel {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }
}

fn excerpt(body: &str) -> String {
    const CAP: usize = 200;
    if body.chars().count() <= CAP {
        body.to_owned()
    } else {
        let cut: String = body.chars().take(CAP).collect();
        format!("{cut}...")
    }
}

impl AnswerModel for HttpAnswerModel {
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<GenerationResult> {
        if request.payloads.len() != request.evidence.len() {
            return Err(Error::Config(format!(
                "{} payloads for {} evidence frames",
                request.payloads.len(),
                request.evidence.len()
            )));
        }
        let rendered = prompt::render(request.template_id, request.query, request.evidence)?;
        let frames: Vec<WireFrame> = request
            .evidence
            .frames()
            .iter()
            .zip(request.payloads)
            .map(|(frame, payload)| WireFrame {
                t_ms: (frame.timestamp_sec * 1000.0).round() as u64,
                data_b64: base64::engine::general_purpose::STANDARD.encode(payload),
            })
            .collect();
        let body = WireRequest {
            version: WIRE_VERSION,
            query: rendered,
            frames,
            want_logprobs: true,
            want_attention: self.config.want_attention,
            max_tokens: self.config.max_tokens,
        };

        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(auth) = &self.config.auth_header {
            call = call.header("authorization", auth);
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| Error::Backend(format!("transport: {e}")))?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Backend(format!("reading body: {e}")))?;
        if !status.is_success() {
            return Err(Error::Backend(format!(
                "status {status}: {}",
                excerpt(&text)
            )));
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("malformed body ({e}): {}", excerpt(&text))))?;

        let logprobs = wire.token_logprobs.ok_or_else(|| {
            Error::Backend(format!(
                "response missing token_logprobs: {}",
                excerpt(&text)
            ))
        })?;
        let mut out = GenerationResult::new(wire.text, logprobs)?;
        if let Some(attention) = wire.frame_attention {
            if attention.len() != request.evidence.len() {
                return Err(Error::AttentionMismatch {
                    got: attention.len(),
                    expected: request.evidence.len(),
                });
            }
            out = out.with_attention(attention)?;
        }
        Ok(out)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Embedding, EvidenceSet, FrameRef, KeyframeSet, Query, SamplingMode};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves exactly one request with a canned response; hands back the
    /// raw request once joined.
    fn serve_once(status: u16, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut raw = Vec::new();
            let mut chunk = [0_u8; 4096];
            let header_end = loop {
                let n = stream.read(&mut chunk).unwrap();
                assert!(n > 0, "client closed before sending a full request");
                raw.extend_from_slice(&chunk[..n]);
                if let Some(pos) = raw.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            };
            let head = String::from_utf8_lossy(&raw[..header_end]).to_ascii_lowercase();
            if head.contains("transfer-encoding: chunked") {
                while !raw.ends_with(b"0\r\n\r\n") {
                    let n = stream.read(&mut chunk).unwrap();
                    assert!(n > 0);
                    raw.extend_from_slice(&chunk[..n]);
                }
            } else {
                let content_length: usize = head
                    .lines()
                    .find_map(|l| l.strip_prefix("content-length:"))
                    .map(|v| v.trim().parse().unwrap())
                    .unwrap_or(0);
                while raw.len() < header_end + content_length {
                    let n = stream.read(&mut chunk).unwrap();
                    assert!(n > 0);
                    raw.extend_from_slice(&chunk[..n]);
                }
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&raw).into_owned()
        });
        (format!("http://{addr}"), handle)
    }

    fn fixtures() -> (Query, EvidenceSet, Vec<Vec<u8>>) {
        let query =
            Query::new("what happens?", Embedding::normalized(vec![1.0, 0.0]).unwrap()).unwrap();
        let frames = vec![FrameRef {
            source_id: "clip".into(),
            index: 0,
            timestamp_sec: 2.0,
            payload_offset: 32,
            payload_len: 3,
        }];
        let evidence = EvidenceSet::from_preview(
            &KeyframeSet::new(frames, SamplingMode::RelevanceDiversity).unwrap(),
        );
        (query, evidence, vec![vec![1, 2, 3]])
    }

    fn call(url: &str) -> Result<GenerationResult> {
        let (query, evidence, payloads) = fixtures();
        let mut model = HttpAnswerModel::new(HttpConfig::new(url));
        model.generate(&GenerateRequest {
            query: &query,
            evidence: &evidence,
            payloads: &payloads,
            template_id: prompt::GROUNDED_QA,
        })
    }

    #[test]
    fn parses_well_formed_response() {
        let (url, server) = serve_once(
            200,
            r#"{"text":"at [00:02]","token_logprobs":[-0.1,-0.2,-0.3,-0.1,-0.2],"frame_attention":[1.0]}"#,
        );
        let out = call(&url).unwrap();
        assert_eq!(out.token_count(), 5);
        assert_eq!(out.frame_attention, Some(vec![1.0]));

        let request = server.join().unwrap();
        assert!(request.contains("\"version\": 1"), "request was: {request}");
        assert!(request.contains("\"t_ms\": 2000"));
        // base64 of [1, 2, 3]
        assert!(request.contains("AQID"));
        assert!(request.contains("what happens?"));
    }

    #[test]
    fn missing_logprobs_is_a_backend_error() {
        let (url, server) = serve_once(200, r#"{"text":"hi"}"#);
        let err = call(&url).unwrap_err();
        assert!(matches!(err, Error::Backend(_)));
        assert!(err.to_string().contains("token_logprobs"));
        server.join().unwrap();
    }

    #[test]
    fn missing_attention_is_fine() {
        let (url, server) = serve_once(200, r#"{"text":"hi","token_logprobs":[-0.5]}"#);
        let out = call(&url).unwrap();
        assert_eq!(out.frame_attention, None);
        server.join().unwrap();
    }

    #[test]
    fn non_success_status_carries_body_excerpt() {
        let (url, server) = serve_once(503, r#"{"error":"overloaded"}"#);
        let err = call(&url).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("503"), "{message}");
        assert!(message.contains("overloaded"), "{message}");
        server.join().unwrap();
    }

    #[test]
    fn malformed_body_carries_excerpt() {
        let (url, server) = serve_once(200, "not json at all");
        let err = call(&url).unwrap_err();
        assert!(err.to_string().contains("not json"), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn env_override_and_auth_passthrough() {
        let vars = |key: &str| match key {
            ENDPOINT_ENV => Some("http://override:9999".to_owned()),
            AUTH_ENV => Some("Bearer abc".to_owned()),
            _ => None,
        };
        let config = HttpConfig::from_env_with(vars, Some("http://fallback:1")).unwrap();
        assert_eq!(config.endpoint, "http://override:9999");
        assert_eq!(config.auth_header.as_deref(), Some("Bearer abc"));

        let config = HttpConfig::from_env_with(|_| None, Some("http://fallback:1")).unwrap();
        assert_eq!(config.endpoint, "http://fallback:1");

        assert!(matches!(
            HttpConfig::from_env_with(|_| None, None),
            Err(Error::Config(_))
        ));
    }
}
