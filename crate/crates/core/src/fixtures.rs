//! Built-in fixtures: a short back-pain consultation and its reference note.
//!
//! The mock ASR provider replays [`BACK_PAIN_TURNS`] under the id
//! [`BACK_PAIN_FIXTURE_ID`]; tests and the offline CLI use the same data.

use crate::transcript::{Segment, Speaker, TranscriptSession};

pub const BACK_PAIN_FIXTURE_ID: &str = "back-pain";

/// (speaker, text) turns of the consultation, in order.
pub const BACK_PAIN_TURNS: &[(&str, &str)] = &[
    ("doctor", "Hi, Bryan. How are you?"),
    ("patient", "I'm doing well. I'm a little sore."),
    (
        "doctor",
        "So, Bryan is a 55-year-old male with a past medical history significant for a prior discectomy, presenting with back pain. So, Bryan, what happened to your back?",
    ),
    (
        "patient",
        "You know... my wife made me push, uh, a refrigerator through the other room, and when I was helping move it, I felt something in my back on the lower right side.",
    ),
    ("doctor", "Okay, on the lower right side of your back?"),
    ("patient", "Yes."),
    ("doctor", "Okay. Those wives, always making you do stuff!"),
    ("patient", "Yes."),
    ("doctor", "And what day did this happen? How long ago?"),
    ("patient", "Uh, this was about five days ago."),
];

/// Reference note for the consultation, as a generator would emit it.
pub const BACK_PAIN_REFERENCE_NOTE: &str = "CHIEF COMPLAINT Back pain. HISTORY OF PRESENT ILLNESS Bryan Smith is a 55-year-old male with a past medical history significant for and prior discectomy, who presents with back pain. REVIEW OF SYSTEMS PHYSICAL EXAMINATION RESULTS ASSESSMENT AND PLAN";

/// Segments with synthetic timestamps: turn `i` spans `[4i, 4i + 3.5]`.
pub fn back_pain_segments() -> Vec<Segment> {
    BACK_PAIN_TURNS
        .iter()
        .enumerate()
        .map(|(i, (speaker, text))| {
            let speaker: Speaker = speaker.parse().expect("fixture speaker");
            let start = 4.0 * i as f64;
            Segment::new(speaker, start, start + 3.5, text).expect("fixture segment")
        })
        .collect()
}

/// An open session holding every fixture segment.
pub fn back_pain_session(session_id: &str) -> TranscriptSession {
    let mut s = TranscriptSession::new(session_id);
    for seg in back_pain_segments() {
        s.append_segment(seg).expect("fixture ordering");
    }
    s
}

/// The consultation rendered the way it appears inline in an instruction
/// example: every turn on one line.
pub fn back_pain_dialogue_inline() -> String {
    BACK_PAIN_TURNS
        .iter()
        .map(|(sp, text)| {
            let tag = if *sp == "doctor" { "Doctor" } else { "Patient" };
            format!("[{tag}]: {text}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}
