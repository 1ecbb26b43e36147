use medipipe_core::corpus::normalize_text;
use medipipe_core::providers::GenerationRequest;
use medipipe_core::rag::NOTE_MAX_TOKENS;
use medipipe_core::soap::{build_instruction_prompt, export_note, parse_note_text, ExportFormat, InstructionTemplate};

use crate::io::{emit, file_id, providers, read_text};
use crate::{CliError, NoteFormat, NoteGenerateArgs};

pub fn generate(args: NoteGenerateArgs) -> Result<(), CliError> {
    let dialogue = normalize_text(&read_text(&args.dialogue)?);
    if dialogue.is_empty() {
        return Err(CliError::usage(format!("{}: empty dialogue", args.dialogue.display())));
    }
    let note_id = match args.note_id {
        Some(id) => id,
        None => file_id(&args.dialogue)
            .ok_or_else(|| CliError::usage("cannot derive a note id from the dialogue path; pass --note-id"))?,
    };
    let format = args.format.unwrap_or_else(|| match &args.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => NoteFormat::Json,
        _ => NoteFormat::Text,
    });

    let p = providers(&args.provider)?;
    let prompt = build_instruction_prompt(&dialogue, &InstructionTemplate::default())?;
    let raw = p.generator.generate(&GenerationRequest::new(prompt, NOTE_MAX_TOKENS, 0.0))?;
    let mut note = parse_note_text(&raw).map_err(|e| CliError::Provider(format!("generate: unusable output: {e}")))?;
    note.note_id = note_id;

    let mut bytes = export_note(
        &note,
        match format {
            NoteFormat::Text => ExportFormat::Text,
            NoteFormat::Json => ExportFormat::Json,
        },
    );
    bytes.push(b'\n');
    emit(args.out.as_deref(), &bytes)
}
