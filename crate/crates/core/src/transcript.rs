//! Diarized transcript sessions.
//!
//! A session collects speaker-labelled segments while open and is frozen by
//! [`TranscriptSession::finalize`]. Rendering merges consecutive segments of
//! the same speaker into one `[Speaker]: text` line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::normalize_text;

/// Default out-of-order tolerance, in seconds.
pub const DEFAULT_ORDER_TOLERANCE_S: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptError {
    #[error("session {0} is finalized")]
    Finalized(String),
    #[error("segment starting at {start}s arrives before {last}s (tolerance {tolerance}s)")]
    Ordering { start: f64, last: f64, tolerance: f64 },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("session {0} has no segments")]
    EmptySession(String),
    #[error("export line {line}: {message}")]
    Export { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Doctor,
    Patient,
    Other(String),
}

impl Speaker {
    /// Tag used in rendered dialogue, e.g. `Doctor` in `[Doctor]: ...`.
    pub fn tag(&self) -> &str {
        match self {
            Speaker::Doctor => "Doctor",
            Speaker::Patient => "Patient",
            Speaker::Other(label) => label,
        }
    }

    /// Wire/export name: `doctor`, `patient`, or the raw label.
    pub fn wire_name(&self) -> &str {
        match self {
            Speaker::Doctor => "doctor",
            Speaker::Patient => "patient",
            Speaker::Other(label) => label,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Speaker {
    type Err = TranscriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let label = s.trim();
        if label.is_empty() {
            return Err(TranscriptError::InvalidSegment("empty speaker label".into()));
        }
        if label.contains(['\t', '\n', '[', ']']) {
            return Err(TranscriptError::InvalidSegment(format!("bad speaker label {label:?}")));
        }
        Ok(match label.to_ascii_lowercase().as_str() {
            "doctor" => Speaker::Doctor,
            "patient" => Speaker::Patient,
            _ => Speaker::Other(label.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub speaker: Speaker,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl Segment {
    /// Builds a validated segment. Text is normalized and flattened to a
    /// single line.
    pub fn new(speaker: Speaker, start_s: f64, end_s: f64, text: &str) -> Result<Self, TranscriptError> {
        if !start_s.is_finite() || !end_s.is_finite() {
            return Err(TranscriptError::InvalidSegment("non-finite timestamp".into()));
        }
        if start_s < 0.0 {
            return Err(TranscriptError::InvalidSegment(format!("negative start {start_s}")));
        }
        if end_s < start_s {
            return Err(TranscriptError::InvalidSegment(format!("end {end_s} before start {start_s}")));
        }
        let text = normalize_text(text).split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(TranscriptError::InvalidSegment("empty text".into()));
        }
        if let Speaker::Other(label) = &speaker {
            label.parse::<Speaker>()?;
        }
        Ok(Segment { speaker, start_s, end_s, text })
    }

    /// Re-checks the invariants of an already-built segment.
    pub fn validate(&self) -> Result<(), TranscriptError> {
        let rebuilt = Segment::new(self.speaker.clone(), self.start_s, self.end_s, &self.text)?;
        if rebuilt.text != self.text {
            return Err(TranscriptError::InvalidSegment("text not normalized".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSession {
    session_id: String,
    segments: Vec<Segment>,
    state: SessionState,
    tolerance_s: f64,
}

impl TranscriptSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self::with_tolerance(session_id, DEFAULT_ORDER_TOLERANCE_S)
    }

    pub fn with_tolerance(session_id: impl Into<String>, tolerance_s: f64) -> Self {
        TranscriptSession {
            session_id: session_id.into(),
            segments: Vec::new(),
            state: SessionState::Open,
            tolerance_s: tolerance_s.max(0.0),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn is_finalized(&self) -> bool {
        self.state == SessionState::Finalized
    }

    /// Appends a segment. A segment may start up to the tolerance before the
    /// latest start seen; it is then placed in start order so the segment
    /// list stays sorted.
    pub fn append_segment(&mut self, seg: Segment) -> Result<(), TranscriptError> {
        if self.is_finalized() {
            return Err(TranscriptError::Finalized(self.session_id.clone()));
        }
        seg.validate()?;
        match self.segments.last() {
            Some(last) if seg.start_s < last.start_s => {
                if last.start_s - seg.start_s > self.tolerance_s {
                    return Err(TranscriptError::Ordering {
                        start: seg.start_s,
                        last: last.start_s,
                        tolerance: self.tolerance_s,
                    });
                }
                let pos = self.segments.partition_point(|s| s.start_s <= seg.start_s);
                self.segments.insert(pos, seg);
            }
            _ => self.segments.push(seg),
        }
        Ok(())
    }

    pub fn finalize(&mut self) -> Result<(), TranscriptError> {
        if self.is_finalized() {
            return Err(TranscriptError::Finalized(self.session_id.clone()));
        }
        self.state = SessionState::Finalized;
        Ok(())
    }

    /// Renders `[Doctor]: ...` / `[Patient]: ...` lines, one per maximal run of
    /// same-speaker segments.
    pub fn render_dialogue(&self) -> Result<String, TranscriptError> {
        if self.segments.is_empty() {
            return Err(TranscriptError::EmptySession(self.session_id.clone()));
        }
        let mut lines: Vec<(&Speaker, String)> = Vec::new();
        for seg in &self.segments {
            match lines.last_mut() {
                Some((speaker, text)) if *speaker == &seg.speaker => {
                    text.push(' ');
                    text.push_str(&seg.text);
                }
                _ => lines.push((&seg.speaker, seg.text.clone())),
            }
        }
        Ok(lines
            .iter()
            .map(|(speaker, text)| format!("[{}]: {}", speaker.tag(), text))
            .collect::<Vec<_>>()
            .join("\n"))
    }

    /// Tab-separated export, one `start<TAB>end<TAB>speaker<TAB>text` line
    /// per segment.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", s.start_s, s.end_s, s.speaker.wire_name(), s.text));
        }
        out
    }
}

/// Parses the tab-separated segment export.
pub fn parse_export(text: &str) -> Result<Vec<Segment>, TranscriptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TranscriptError::Export { line: i + 1, message };
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [start, end, speaker, body] = fields[..] else {
            return Err(err("expected 4 tab-separated fields".into()));
        };
        let start: f64 = start.trim().parse().map_err(|_| err(format!("bad start {start:?}")))?;
        let end: f64 = end.trim().parse().map_err(|_| err(format!("bad end {end:?}")))?;
        let speaker: Speaker = speaker.parse().map_err(|e: TranscriptError| err(e.to_string()))?;
        out.push(Segment::new(speaker, start, end, body).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

/// Checks a provider-supplied segment list against session invariants:
/// each segment valid, starts nondecreasing.
pub fn validate_segments(segments: &[Segment]) -> Result<(), TranscriptError> {
    for s in segments {
        s.validate()?;
    }
    for w in segments.windows(2) {
        if w[1].start_s < w[0].start_s {
            return Err(TranscriptError::Ordering { start: w[1].start_s, last: w[0].start_s, tolerance: 0.0 });
        }
    }
    Ok(())
}
