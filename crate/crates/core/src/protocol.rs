//! Classifier wire protocol shared by the disambiguation and regard stages.
//!
//! One JSON object per line in each direction. Requests look like
//! `{"task":"wsd","text":...,"keyword":...,"gloss":...,"span":[s,e]}`; responses are
//! `{"label":...,"confidence":...}` with the label drawn from the task's closed set, or
//! `{"error":...}` when the peer could not handle a request.

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::detect::WsdLabel;
use crate::regard::RegardLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Wsd,
    Regard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolRequest {
    pub task: Task,
    pub text: String,
    pub keyword: String,
    pub gloss: String,
    /// Byte offsets of the keyword occurrence in `text`.
    pub span: [usize; 2],
}

impl ProtocolRequest {
    pub fn validate(&self) -> Result<(), String> {
        let [s, e] = self.span;
        if s >= e || e > self.text.len() {
            return Err(format!("span [{s},{e}] out of range"));
        }
        if !self.text.is_char_boundary(s) || !self.text.is_char_boundary(e) {
            return Err(format!("span [{s},{e}] splits a character"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResponse {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Wsd(WsdLabel),
    Regard(RegardLabel),
}

impl ProtocolResponse {
    pub fn wsd(label: WsdLabel, confidence: f64) -> Self {
        ProtocolResponse {
            label: label.as_str().to_owned(),
            confidence,
        }
    }

    pub fn regard(label: RegardLabel, confidence: f64) -> Self {
        ProtocolResponse {
            label: label.as_str().to_owned(),
            confidence,
        }
    }

    /// Checks the label against the task's closed set and the confidence range.
    pub fn interpret(&self, task: Task) -> Result<Label, BackendError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(BackendError::protocol(
                format!("confidence {} outside [0,1]", self.confidence),
                &serde_json::to_string(self).unwrap_or_default(),
            ));
        }
        let label = match task {
            Task::Wsd => self.label.parse().map(Label::Wsd),
            Task::Regard => self.label.parse().map(Label::Regard),
        };
        label.map_err(|_: String| {
            BackendError::protocol(
                format!("label {:?} not valid for task {task:?}", self.label),
                &serde_json::to_string(self).unwrap_or_default(),
            )
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResponseLine {
    Ok(ProtocolResponse),
    Err { error: serde_json::Value },
}

/// Parses one response line. Error objects and anything unparseable become protocol
/// errors carrying an excerpt of the payload.
pub fn parse_response_line(task: Task, line: &str) -> Result<ProtocolResponse, BackendError> {
    match serde_json::from_str::<ResponseLine>(line.trim()) {
        Ok(ResponseLine::Ok(resp)) => {
            resp.interpret(task)?;
            Ok(resp)
        }
        Ok(ResponseLine::Err { error }) => Err(BackendError::protocol(
            format!("peer reported error {error}"),
            line,
        )),
        Err(e) => Err(BackendError::protocol(
            format!("malformed response: {e}"),
            line,
        )),
    }
}

/// A request/response pair from the shared conformance fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenPair {
    pub request: ProtocolRequest,
    pub response: ProtocolResponse,
}

const GOLDEN: &str = include_str!("../../../fixtures/protocol/golden.jsonl");

/// The conformance fixtures both the built-in backend and external sidecars are tested
/// against. Only labels are normative; confidences are informative.
pub fn conformance_fixtures() -> Vec<GoldenPair> {
    GOLDEN
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture line parses"))
        .collect()
}
