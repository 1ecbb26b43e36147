//! SOAP note model: instruction prompts, parsing generator output into the
//! six conventional sections, canonical rendering and export.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoapError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no known section header found in note text")]
    NoHeaders { raw: String },
    #[error("note {0} has no nonempty section")]
    EmptyNote(String),
    #[error("bad note json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SectionKey {
    ChiefComplaint,
    HistoryOfPresentIllness,
    ReviewOfSystems,
    PhysicalExamination,
    Results,
    AssessmentAndPlan,
}

impl SectionKey {
    pub const ALL: [SectionKey; 6] = [
        SectionKey::ChiefComplaint,
        SectionKey::HistoryOfPresentIllness,
        SectionKey::ReviewOfSystems,
        SectionKey::PhysicalExamination,
        SectionKey::Results,
        SectionKey::AssessmentAndPlan,
    ];

    pub fn header(self) -> &'static str {
        match self {
            SectionKey::ChiefComplaint => "CHIEF COMPLAINT",
            SectionKey::HistoryOfPresentIllness => "HISTORY OF PRESENT ILLNESS",
            SectionKey::ReviewOfSystems => "REVIEW OF SYSTEMS",
            SectionKey::PhysicalExamination => "PHYSICAL EXAMINATION",
            SectionKey::Results => "RESULTS",
            SectionKey::AssessmentAndPlan => "ASSESSMENT AND PLAN",
        }
    }

    /// Field name in the JSON note schema.
    pub fn json_field(self) -> &'static str {
        match self {
            SectionKey::ChiefComplaint => "chief_complaint",
            SectionKey::HistoryOfPresentIllness => "history_of_present_illness",
            SectionKey::ReviewOfSystems => "review_of_systems",
            SectionKey::PhysicalExamination => "physical_examination",
            SectionKey::Results => "results",
            SectionKey::AssessmentAndPlan => "assessment_and_plan",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LogicalSection {
    Subjective,
    ObjectiveExam,
    ObjectiveResults,
    AssessmentAndPlan,
}

impl LogicalSection {
    pub const ALL: [LogicalSection; 4] = [
        LogicalSection::Subjective,
        LogicalSection::ObjectiveExam,
        LogicalSection::ObjectiveResults,
        LogicalSection::AssessmentAndPlan,
    ];

    pub fn of(key: SectionKey) -> LogicalSection {
        match key {
            SectionKey::ChiefComplaint | SectionKey::HistoryOfPresentIllness | SectionKey::ReviewOfSystems => {
                LogicalSection::Subjective
            }
            SectionKey::PhysicalExamination => LogicalSection::ObjectiveExam,
            SectionKey::Results => LogicalSection::ObjectiveResults,
            SectionKey::AssessmentAndPlan => LogicalSection::AssessmentAndPlan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoapNote {
    pub note_id: String,
    sections: [String; 6],
    pub source_session: Option<String>,
}

impl SoapNote {
    pub fn new(note_id: impl Into<String>) -> Self {
        SoapNote { note_id: note_id.into(), sections: Default::default(), source_session: None }
    }

    pub fn with_section(mut self, key: SectionKey, body: impl Into<String>) -> Self {
        self.set(key, body);
        self
    }

    pub fn get(&self, key: SectionKey) -> &str {
        &self.sections[key.index()]
    }

    pub fn set(&mut self, key: SectionKey, body: impl Into<String>) {
        self.sections[key.index()] = body.into();
    }

    pub fn sections(&self) -> impl Iterator<Item = (SectionKey, &str)> {
        SectionKey::ALL.iter().map(move |&k| (k, self.get(k)))
    }

    pub fn is_valid(&self) -> bool {
        self.sections.iter().any(|s| !s.trim().is_empty())
    }

    pub fn validate(&self) -> Result<(), SoapError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(SoapError::EmptyNote(self.note_id.clone()))
        }
    }

    /// Same note with the section contents of `other`.
    pub fn same_sections(&self, other: &SoapNote) -> bool {
        self.sections == other.sections
    }
}

pub const DEFAULT_TEMPLATE_ID: &str = "soap-v1";

pub const DEFAULT_INSTRUCTION: &str = "Summarize medical dialogues into a SOAP note format, where the note is divided into four continuous sections: SUBJECTIVE, OBJECTIVE_EXAM, OBJECTIVE_RESULTS, and ASSESSMENT_AND_PLAN. The SUBJECTIVE section covers the CHIEF COMPLAINT, HISTORY OF PRESENT ILLNESS and REVIEW OF SYSTEMS drawn from the verbal examination. OBJECTIVE_EXAM holds the PHYSICAL EXAMINATION, OBJECTIVE_RESULTS holds the RESULTS of tests and imaging, and ASSESSMENT_AND_PLAN holds the ASSESSMENT AND PLAN. Use those six headers in that order.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub id: String,
    pub instruction_text: String,
    pub header_map: BTreeMap<SectionKey, LogicalSection>,
}

impl Default for InstructionTemplate {
    fn default() -> Self {
        InstructionTemplate {
            id: DEFAULT_TEMPLATE_ID.to_string(),
            instruction_text: DEFAULT_INSTRUCTION.to_string(),
            header_map: SectionKey::ALL.iter().map(|&k| (k, LogicalSection::of(k))).collect(),
        }
    }
}

impl InstructionTemplate {
    pub fn logical_sections(&self) -> &'static [LogicalSection] {
        &LogicalSection::ALL
    }

    /// Every header maps to exactly one logical section.
    pub fn is_total(&self) -> bool {
        SectionKey::ALL.iter().all(|k| self.header_map.contains_key(k))
    }
}

/// `instruction`, blank line, `The conversation:`, the dialogue, then
/// `The clinic note:`.
pub fn build_instruction_prompt(dialogue: &str, tmpl: &InstructionTemplate) -> Result<String, SoapError> {
    if dialogue.trim().is_empty() {
        return Err(SoapError::Precondition("empty dialogue".into()));
    }
    Ok(format!("{}\n\nThe conversation:\n{}\nThe clinic note:", tmpl.instruction_text, dialogue))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderMatch {
    pub key: SectionKey,
    /// Byte range of the header text, including a trailing colon if any.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedNote {
    pub note: SoapNote,
    pub headers: Vec<HeaderMatch>,
    pub missing: Vec<SectionKey>,
    pub duplicates: Vec<SectionKey>,
    pub unknown_headers: Vec<String>,
}

fn header_at(text: &str, pos: usize, line_start: bool) -> Option<HeaderMatch> {
    let mut best: Option<HeaderMatch> = None;
    for key in SectionKey::ALL {
        let h = key.header();
        let Some(cand) = text.get(pos..pos + h.len()) else { continue };
        let hit = if line_start { cand.eq_ignore_ascii_case(h) } else { cand == h };
        if !hit {
            continue;
        }
        let mut end = pos + h.len();
        match text[end..].chars().next() {
            None => {}
            Some(':') => end += 1,
            Some(c) if c.is_whitespace() => {}
            Some(_) => continue,
        }
        if best.as_ref().is_none_or(|b| end > b.end) {
            best = Some(HeaderMatch { key, start: pos, end });
        }
    }
    best
}

fn find_headers(text: &str) -> Vec<HeaderMatch> {
    let mut out = Vec::new();
    let mut line_start = true;
    let mut prev_ws = true;
    let mut skip_to = 0;
    for (i, c) in text.char_indices() {
        if i >= skip_to && prev_ws {
            if let Some(m) = header_at(text, i, line_start) {
                skip_to = m.end;
                out.push(m);
            }
        }
        if c == '\n' {
            line_start = true;
        } else if !c.is_whitespace() {
            line_start = false;
        }
        prev_ws = c.is_whitespace();
    }
    out
}

fn unknown_header_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim().trim_end_matches(':').trim_end())
        .filter(|l| {
            (3..=40).contains(&l.len())
                && l.chars().all(|c| c.is_ascii_uppercase() || c == ' ' || c == '&' || c == '/')
                && l.chars().filter(|c| c.is_ascii_uppercase()).count() >= 3
                && !SectionKey::ALL.iter().any(|k| l.starts_with(k.header()))
        })
        .map(str::to_string)
        .collect()
}

/// Parses note text into sections, with diagnostics.
///
/// Headers are recognised case-insensitively at the start of a line, and
/// inline (after whitespace) only when written in upper case, so prose such
/// as "lab results were normal" is not split. A header must be followed by
/// whitespace, a colon, or the end of the text.
pub fn parse_note_detailed(text: &str) -> Result<ParsedNote, SoapError> {
    if text.trim().is_empty() {
        return Err(SoapError::Precondition("empty note text".into()));
    }
    let headers = find_headers(text);
    if headers.is_empty() {
        return Err(SoapError::NoHeaders { raw: text.to_string() });
    }
    let mut note = SoapNote::new("");
    let mut seen = [false; 6];
    let mut duplicates = Vec::new();
    for (i, m) in headers.iter().enumerate() {
        let stop = headers.get(i + 1).map_or(text.len(), |n| n.start);
        let body = text[m.end..stop].trim();
        let idx = m.key.index();
        if seen[idx] {
            duplicates.push(m.key);
            if !body.is_empty() {
                let joined = if note.sections[idx].is_empty() { body.to_string() } else { format!("{}\n\n{}", note.sections[idx], body) };
                note.sections[idx] = joined;
            }
        } else {
            seen[idx] = true;
            note.sections[idx] = body.to_string();
        }
    }
    let preamble = text[..headers[0].start].trim();
    if !preamble.is_empty() {
        let cc = &mut note.sections[SectionKey::ChiefComplaint.index()];
        *cc = if cc.is_empty() { preamble.to_string() } else { format!("{preamble}\n{cc}") };
    }
    let missing = SectionKey::ALL.iter().copied().filter(|k| !seen[k.index()]).collect();
    Ok(ParsedNote { note, headers, missing, duplicates, unknown_headers: unknown_header_lines(text) })
}

/// Parses note text into a [`SoapNote`] with an empty `note_id`.
pub fn parse_note_text(text: &str) -> Result<SoapNote, SoapError> {
    parse_note_detailed(text).map(|p| p.note)
}

/// Canonical rendering: the six headers in fixed order, each on its own line
/// with its body below, sections separated by one blank line.
pub fn render_note(note: &SoapNote) -> String {
    note.sections()
        .map(|(k, body)| format!("{}\n{}", k.header(), body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteJson {
    pub note_id: String,
    pub chief_complaint: String,
    pub history_of_present_illness: String,
    pub review_of_systems: String,
    pub physical_examination: String,
    pub results: String,
    pub assessment_and_plan: String,
    pub source_session: Option<String>,
}

impl From<&SoapNote> for NoteJson {
    fn from(n: &SoapNote) -> Self {
        NoteJson {
            note_id: n.note_id.clone(),
            chief_complaint: n.get(SectionKey::ChiefComplaint).to_string(),
            history_of_present_illness: n.get(SectionKey::HistoryOfPresentIllness).to_string(),
            review_of_systems: n.get(SectionKey::ReviewOfSystems).to_string(),
            physical_examination: n.get(SectionKey::PhysicalExamination).to_string(),
            results: n.get(SectionKey::Results).to_string(),
            assessment_and_plan: n.get(SectionKey::AssessmentAndPlan).to_string(),
            source_session: n.source_session.clone(),
        }
    }
}

impl From<NoteJson> for SoapNote {
    fn from(j: NoteJson) -> Self {
        SoapNote {
            note_id: j.note_id,
            sections: [
                j.chief_complaint,
                j.history_of_present_illness,
                j.review_of_systems,
                j.physical_examination,
                j.results,
                j.assessment_and_plan,
            ],
            source_session: j.source_session,
        }
    }
}

pub fn export_note(note: &SoapNote, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Text => render_note(note).into_bytes(),
        ExportFormat::Json => serde_json::to_vec_pretty(&NoteJson::from(note)).expect("note json"),
    }
}

pub fn note_from_json(bytes: &[u8]) -> Result<SoapNote, SoapError> {
    serde_json::from_slice::<NoteJson>(bytes).map(SoapNote::from).map_err(|e| SoapError::Json(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::BACK_PAIN_REFERENCE_NOTE;

    #[test]
    fn prompt_layout() {
        let t = InstructionTemplate::default();
        let p = build_instruction_prompt("[Doctor]: Hi.", &t).unwrap();
        assert_eq!(p, format!("{}\n\nThe conversation:\n[Doctor]: Hi.\nThe clinic note:", DEFAULT_INSTRUCTION));
        assert!(build_instruction_prompt("  ", &t).is_err());
    }

    #[test]
    fn parses_inline_reference_note() {
        let p = parse_note_detailed(BACK_PAIN_REFERENCE_NOTE).unwrap();
        assert_eq!(p.note.get(SectionKey::ChiefComplaint), "Back pain.");
        assert!(p.note.get(SectionKey::HistoryOfPresentIllness).starts_with("Bryan Smith is a 55-year-old male"));
        for k in &SectionKey::ALL[2..] {
            assert_eq!(p.note.get(*k), "");
        }
        assert!(p.missing.is_empty());
        assert_eq!(p.headers.len(), 6);
    }

    #[test]
    fn no_headers_is_an_error() {
        assert!(matches!(parse_note_text("no headers here"), Err(SoapError::NoHeaders { .. })));
    }

    #[test]
    fn lowercase_inline_words_are_body_text() {
        let n = parse_note_text("Results:\nlab results were normal\nchief complaint: cough").unwrap();
        assert_eq!(n.get(SectionKey::Results), "lab results were normal");
        assert_eq!(n.get(SectionKey::ChiefComplaint), "cough");
    }

    #[test]
    fn preamble_goes_to_chief_complaint_and_order_is_free() {
        let p = parse_note_detailed("Seen today.\nRESULTS\nX-ray clear.\nCHIEF COMPLAINT\nKnee pain.").unwrap();
        assert_eq!(p.note.get(SectionKey::ChiefComplaint), "Seen today.\nKnee pain.");
        assert_eq!(p.note.get(SectionKey::Results), "X-ray clear.");
        assert_eq!(p.missing.len(), 4);
    }

    #[test]
    fn unknown_headers_stay_in_body() {
        let p = parse_note_detailed("CHIEF COMPLAINT\nCough.\nSOCIAL HISTORY\nNonsmoker.").unwrap();
        assert_eq!(p.note.get(SectionKey::ChiefComplaint), "Cough.\nSOCIAL HISTORY\nNonsmoker.");
        assert_eq!(p.unknown_headers, vec!["SOCIAL HISTORY".to_string()]);
    }

    #[test]
    fn render_single_section() {
        let n = SoapNote::new("n").with_section(SectionKey::ChiefComplaint, "Back pain.");
        let r = render_note(&n);
        assert_eq!(SectionKey::ALL.iter().filter(|k| r.contains(k.header())).count(), 6);
        assert!(r.starts_with("CHIEF COMPLAINT\nBack pain.\n\nHISTORY OF PRESENT ILLNESS\n\n\n"));
        assert!(parse_note_text(&r).unwrap().same_sections(&n));
    }

    #[test]
    fn json_schema_has_eight_fields() {
        let mut n = SoapNote::new("note-1").with_section(SectionKey::Results, "ok");
        n.source_session = Some("s1".into());
        let bytes = export_note(&n, ExportFormat::Json);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 8);
        for k in SectionKey::ALL {
            assert!(obj.contains_key(k.json_field()));
        }
        assert_eq!(note_from_json(&bytes).unwrap(), n);
        assert_eq!(export_note(&n, ExportFormat::Text), render_note(&n).into_bytes());
    }

    #[test]
    fn header_map_is_total_onto_four_sections() {
        let t = InstructionTemplate::default();
        assert!(t.is_total());
        let mut targets: Vec<_> = t.header_map.values().copied().collect();
        targets.sort();
        targets.dedup();
        assert_eq!(targets, LogicalSection::ALL.to_vec());
    }

    #[test]
    fn validity() {
        assert!(SoapNote::new("x").validate().is_err());
        assert!(SoapNote::new("x").with_section(SectionKey::Results, "r").validate().is_ok());
    }
}
