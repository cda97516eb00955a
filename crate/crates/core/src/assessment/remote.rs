//! HTTP clients for the assessor (chat-completion style) and the detector.
//!
//! Chat request:
//! `{"model", "messages": [{"role": "user", "content": [{"type": "text", "text"},
//! {"type": "image_url", "image_url": {"url": "data:<mime>;base64,…"}}]}]}`;
//! the answer is `choices[0].message.content`.
//!
//! Detection request: `{"image": "<base64>", "caption": "<name>"}`, answered
//! with `{"boxes": [[u_min, v_min, u_max, v_max], …], "scores": […]}`.
//!
//! Fixture files replay recorded exchanges offline:
//!
//! ```text
//! >>> POST /chat/completions
//! {request json}
//! <<< 200
//! {response json}
//! ```

use std::fs;
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{
    parse_hazard_reply, select_best, AssessmentError, AssessorBackend, DetectorBackend, HazardQuery, HazardResult,
    Source,
};
use crate::perception::BBox;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_ASSESSOR_MODEL: &str = "glm-4.5v";

/// Sends one JSON POST and returns `(status, body)`.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        token: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), AssessmentError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Reads `<PREFIX>_URL` and `<PREFIX>_TOKEN`, e.g. `ASSESSOR_URL`.
    pub fn from_env(prefix: &str) -> Result<Self, AssessmentError> {
        let url_var = format!("{prefix}_URL");
        let base_url =
            std::env::var(&url_var).map_err(|_| AssessmentError::RemoteUnavailable(format!("{url_var} is not set")))?;
        Ok(Self {
            base_url,
            token: std::env::var(format!("{prefix}_TOKEN")).ok(),
            timeout: DEFAULT_TIMEOUT,
        })
    }

    fn url(&self, path: &str) -> String {
        if path.is_empty() {
            self.base_url.clone()
        } else {
            format!(
                "{}/{}",
                self.base_url.trim_end_matches('/'),
                path.trim_start_matches('/')
            )
        }
    }
}

/// Blocking HTTP transport.
#[derive(Debug, Default, Clone)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        token: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), AssessmentError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(t) = token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| AssessmentError::RemoteUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AssessmentError::RemoteUnavailable(e.to_string()))?;
        Ok((status, text))
    }
}

fn read_image(image_ref: &str) -> Result<(String, String), AssessmentError> {
    let bytes = fs::read(image_ref)
        .map_err(|e| AssessmentError::InvalidQuery(format!("cannot read image {image_ref}: {e}")))?;
    let mime = match Path::new(image_ref).extension().and_then(|e| e.to_str()) {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "image/png",
    };
    Ok((
        mime.to_string(),
        base64::engine::general_purpose::STANDARD.encode(bytes),
    ))
}

fn post(transport: &dyn Transport, config: &RemoteConfig, path: &str, body: &Value) -> Result<Value, AssessmentError> {
    let (status, text) = transport.post_json(
        &config.url(path),
        config.token.as_deref(),
        &body.to_string(),
        config.timeout,
    )?;
    if !(200..300).contains(&status) {
        return Err(AssessmentError::RemoteUnavailable(format!(
            "HTTP {status}: {}",
            text.trim()
        )));
    }
    serde_json::from_str(&text).map_err(|_| AssessmentError::MalformedReply(text))
}

pub struct RemoteAssessor {
    pub config: RemoteConfig,
    pub model: String,
    pub transport: Box<dyn Transport>,
}

impl RemoteAssessor {
    pub fn new(config: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        Self {
            config,
            model: DEFAULT_ASSESSOR_MODEL.to_string(),
            transport,
        }
    }

    pub fn request_body(&self, query: &HazardQuery) -> Result<Value, AssessmentError> {
        let (mime, data) = read_image(&query.image_ref)?;
        Ok(json!({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": super::build_prompt(query)},
                    {"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}}
                ]
            }]
        }))
    }
}

impl AssessorBackend for RemoteAssessor {
    fn identify(&self, query: &HazardQuery) -> Result<HazardResult, AssessmentError> {
        let body = self.request_body(query)?;
        let reply = post(self.transport.as_ref(), &self.config, "chat/completions", &body)?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AssessmentError::MalformedReply(reply.to_string()))?;
        Ok(HazardResult {
            object_name: parse_hazard_reply(content)?,
            source: Source::Remote,
        })
    }
}

pub struct RemoteDetector {
    pub config: RemoteConfig,
    pub transport: Box<dyn Transport>,
}

impl RemoteDetector {
    pub fn new(config: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        Self { config, transport }
    }

    pub fn request_body(&self, name: &str, image_ref: &str) -> Result<Value, AssessmentError> {
        let (_, data) = read_image(image_ref)?;
        Ok(json!({ "image": data, "caption": name }))
    }
}

/// Parses `{"boxes": [[u0, v0, u1, v1], …], "scores": […]}`.
pub fn parse_detections(reply: &Value) -> Result<Vec<BBox>, AssessmentError> {
    let malformed = || AssessmentError::MalformedReply(reply.to_string());
    let boxes = reply.get("boxes").and_then(Value::as_array).ok_or_else(malformed)?;
    let scores = reply.get("scores").and_then(Value::as_array).ok_or_else(malformed)?;
    if boxes.len() != scores.len() {
        return Err(malformed());
    }
    boxes
        .iter()
        .zip(scores)
        .map(|(b, s)| {
            let coords: Vec<f64> = b
                .as_array()
                .ok_or_else(malformed)?
                .iter()
                .map(|v| v.as_f64().ok_or_else(malformed))
                .collect::<Result<_, _>>()?;
            let score = s.as_f64().ok_or_else(malformed)?;
            if coords.len() != 4 {
                return Err(malformed());
            }
            BBox::new(coords[0], coords[1], coords[2], coords[3], score).map_err(|_| malformed())
        })
        .collect()
}

impl DetectorBackend for RemoteDetector {
    fn ground(&self, name: &str, image_ref: &str) -> Result<BBox, AssessmentError> {
        let body = self.request_body(name, image_ref)?;
        let reply = post(self.transport.as_ref(), &self.config, "", &body)?;
        let candidates = parse_detections(&reply)?;
        select_best(&candidates).ok_or_else(|| AssessmentError::NotFound(name.to_string()))
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub path: String,
    pub request: Value,
    pub status: u16,
    pub response: String,
}

/// Replays recorded exchanges; a request matches when the URL ends with the
/// recorded path and the JSON bodies are equal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureTransport {
    pub exchanges: Vec<Exchange>,
}

impl FixtureTransport {
    pub fn parse(text: &str) -> Result<Self, AssessmentError> {
        let bad = |msg: &str| AssessmentError::InvalidQuery(format!("fixture: {msg}"));
        let mut exchanges = Vec::new();
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.next() {
            let Some(rest) = line.strip_prefix(">>> ") else {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                return Err(bad(&format!("unexpected line {line:?}")));
            };
            let path = rest
                .strip_prefix("POST ")
                .ok_or_else(|| bad("only POST is supported"))?
                .trim()
                .to_string();
            let mut request = String::new();
            while let Some(l) = lines.next_if(|l| !l.starts_with("<<< ")) {
                request.push_str(l);
                request.push('\n');
            }
            let status_line = lines.next().ok_or_else(|| bad("missing response"))?;
            let status: u16 = status_line[4..].trim().parse().map_err(|_| bad("bad status"))?;
            let mut response = String::new();
            while let Some(l) = lines.next_if(|l| !l.starts_with(">>> ")) {
                response.push_str(l);
                response.push('\n');
            }
            let request: Value = serde_json::from_str(&request).map_err(|e| bad(&e.to_string()))?;
            exchanges.push(Exchange {
                path,
                request,
                status,
                response: response.trim_end_matches('\n').to_string() + "\n",
            });
        }
        Ok(Self { exchanges })
    }

    pub fn load(path: &Path) -> Result<Self, AssessmentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AssessmentError::InvalidQuery(format!("fixture {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for ex in &self.exchanges {
            out.push_str(&format!(
                ">>> POST {}\n{}\n<<< {}\n{}",
                ex.path, ex.request, ex.status, ex.response
            ));
        }
        out
    }
}

impl Transport for FixtureTransport {
    fn post_json(
        &self,
        url: &str,
        _token: Option<&str>,
        body: &str,
        _timeout: Duration,
    ) -> Result<(u16, String), AssessmentError> {
        let request: Value = serde_json::from_str(body).map_err(|e| AssessmentError::InvalidQuery(e.to_string()))?;
        self.exchanges
            .iter()
            .find(|ex| url.ends_with(ex.path.as_str()) && ex.request == request)
            .map(|ex| (ex.status, ex.response.clone()))
            .ok_or_else(|| AssessmentError::RemoteUnavailable(format!("no recorded exchange for {url}")))
    }
}
