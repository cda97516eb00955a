//! Hazard identification and grounding.
//!
//! A vision-language assessor names the single object most likely to
//! obstruct the task, and an open-vocabulary detector turns that name into a
//! bounding box. Both sit behind small traits; the mocks answer from the
//! scenario's ground truth and the remote clients speak JSON over HTTP.

pub mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::BBox;

pub use remote::{FixtureTransport, HttpTransport, RemoteAssessor, RemoteConfig, RemoteDetector, Transport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssessmentError {
    #[error("remote service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("malformed reply: {0:?}")]
    MalformedReply(String),
    #[error("no candidate box for {0:?}")]
    NotFound(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

const PROMPT_TEMPLATE: &str = "The robot must follow this instruction: [Instruction]. Based on both the instruction and the image, identify exactly one non-robot object that is most likely to obstruct the robot’s motion during task execution. You must output a uniquely identifiable obstacle name including both color and object type, preferably from this list when applicable: [List]. Output only the object name, with no additional words.";

/// Replies longer than this many words are treated as prose, not a name.
pub const MAX_NAME_WORDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardQuery {
    pub instruction: String,
    /// Path of the agent-view RGB frame.
    pub image_ref: String,
    #[serde(default)]
    pub candidates: Vec<String>,
}

impl HazardQuery {
    pub fn new(
        instruction: impl Into<String>,
        image_ref: impl Into<String>,
        candidates: Vec<String>,
    ) -> Result<Self, AssessmentError> {
        let q = Self {
            instruction: instruction.into(),
            image_ref: image_ref.into(),
            candidates,
        };
        if q.instruction.trim().is_empty() {
            return Err(AssessmentError::InvalidQuery("instruction is empty".into()));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardResult {
    pub object_name: String,
    pub source: Source,
}

/// The hazard-identification prompt with the instruction and candidate list
/// substituted. The list renders as `[a, b, c]`.
pub fn build_prompt(q: &HazardQuery) -> String {
    let list = format!("[{}]", q.candidates.join(", "));
    PROMPT_TEMPLATE
        .replacen("[Instruction]", &q.instruction, 1)
        .replacen("[List]", &list, 1)
}

/// Validates a raw assessor reply: trims whitespace and rejects empty,
/// multi-line or sentence-like answers.
pub fn parse_hazard_reply(raw: &str) -> Result<String, AssessmentError> {
    let name = raw.trim();
    let malformed = || AssessmentError::MalformedReply(raw.to_string());
    if name.is_empty() || name.contains('\n') || name.contains('\r') {
        return Err(malformed());
    }
    if name.ends_with(['.', '!', '?', ':', ';']) || name.split_whitespace().count() > MAX_NAME_WORDS {
        return Err(malformed());
    }
    Ok(name.to_string())
}

pub trait AssessorBackend {
    fn identify(&self, query: &HazardQuery) -> Result<HazardResult, AssessmentError>;
}

pub trait DetectorBackend {
    fn ground(&self, name: &str, image_ref: &str) -> Result<BBox, AssessmentError>;
}

pub fn identify_hazard(query: &HazardQuery, backend: &dyn AssessorBackend) -> Result<HazardResult, AssessmentError> {
    backend.identify(query)
}

pub fn ground_object(name: &str, image_ref: &str, backend: &dyn DetectorBackend) -> Result<BBox, AssessmentError> {
    if name.trim().is_empty() {
        return Err(AssessmentError::InvalidQuery("object name is empty".into()));
    }
    backend.ground(name, image_ref)
}

/// Highest-confidence candidate; the first one wins ties.
pub fn select_best(candidates: &[BBox]) -> Option<BBox> {
    candidates
        .iter()
        .copied()
        .fold(None, |best: Option<BBox>, c| match best {
            Some(b) if b.confidence >= c.confidence => Some(b),
            _ => Some(c),
        })
}

/// Answers with the scenario's declared hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct MockAssessor {
    pub hazard_name: String,
}

impl AssessorBackend for MockAssessor {
    fn identify(&self, _query: &HazardQuery) -> Result<HazardResult, AssessmentError> {
        Ok(HazardResult {
            object_name: parse_hazard_reply(&self.hazard_name)?,
            source: Source::Mock,
        })
    }
}

/// Answers with ground-truth boxes keyed by object name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockDetector {
    pub boxes: BTreeMap<String, BBox>,
}

impl DetectorBackend for MockDetector {
    fn ground(&self, name: &str, _image_ref: &str) -> Result<BBox, AssessmentError> {
        self.boxes
            .get(name)
            .map(|b| BBox { confidence: 1.0, ..*b })
            .ok_or_else(|| AssessmentError::NotFound(name.to_string()))
    }
}
