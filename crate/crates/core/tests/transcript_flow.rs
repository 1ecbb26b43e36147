use medipipe_core::fixtures::{back_pain_segments, back_pain_session, BACK_PAIN_TURNS};
use medipipe_core::transcript::{parse_export, Segment, SessionState, Speaker, TranscriptError, TranscriptSession};
use proptest::prelude::*;

/// Maximal same-speaker runs, counted directly on the speaker list.
fn runs(speakers: &[Speaker]) -> usize {
    speakers.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!speakers.is_empty())
}

proptest! {
    #[test]
    fn one_line_per_speaker_run(picks in prop::collection::vec(0u8..3, 1..40)) {
        let mut s = TranscriptSession::new("p");
        let speakers: Vec<Speaker> = picks
            .iter()
            .map(|p| match p { 0 => Speaker::Doctor, 1 => Speaker::Patient, _ => Speaker::Other("Nurse".into()) })
            .collect();
        for (i, sp) in speakers.iter().enumerate() {
            s.append_segment(Segment::new(sp.clone(), i as f64, i as f64 + 0.5, &format!("line {i}")).unwrap()).unwrap();
        }
        let before = s.render_dialogue().unwrap();
        prop_assert_eq!(before.lines().count(), runs(&speakers));
        s.finalize().unwrap();
        prop_assert_eq!(s.render_dialogue().unwrap(), before);
        prop_assert_eq!(parse_export(&s.export()).unwrap(), s.segments().to_vec());
    }
}

#[test]
fn fixture_session_state_machine() {
    let mut s = back_pain_session("s1");
    assert_eq!(s.segments().len(), BACK_PAIN_TURNS.len());
    let text = s.render_dialogue().unwrap();
    assert!(text.starts_with("[Doctor]: Hi, Bryan. How are you?\n[Patient]: I'm doing well."));
    assert_eq!(text.lines().count(), BACK_PAIN_TURNS.len());
    s.finalize().unwrap();
    assert_eq!(s.state(), SessionState::Finalized);
    assert!(matches!(s.finalize(), Err(TranscriptError::Finalized(_))));
    assert!(matches!(s.append_segment(back_pain_segments().remove(0)), Err(TranscriptError::Finalized(_))));
}

#[test]
fn ordering_tolerance() {
    let mut s = TranscriptSession::new("t");
    s.append_segment(Segment::new(Speaker::Doctor, 10.0, 11.0, "a").unwrap()).unwrap();
    s.append_segment(Segment::new(Speaker::Patient, 9.6, 10.5, "b").unwrap()).unwrap();
    assert_eq!(s.segments()[0].text, "b");
    assert!(matches!(
        s.append_segment(Segment::new(Speaker::Patient, 9.0, 9.5, "c").unwrap()),
        Err(TranscriptError::Ordering { .. })
    ));
    assert!(Segment::new(Speaker::Doctor, 2.0, 1.0, "x").is_err());
    assert!(TranscriptSession::new("e").render_dialogue().is_err());
}
