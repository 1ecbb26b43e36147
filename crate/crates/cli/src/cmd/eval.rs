use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use medipipe_core::corpus::normalize_text;
use medipipe_core::metrics::{evaluate_system_with, parse_report_csv, render_report};
use medipipe_core::par::Execution;
use medipipe_core::soap::{note_from_json, render_note};

use crate::io::{emit, file_id, providers, read_bytes, read_text, write_atomic};
use crate::{CliError, EvalRunArgs};

/// Note texts keyed by file id. `.json` files are note documents and are
/// rendered to text; anything else is read as text.
fn load_notes(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{}: not a directory", dir.display())));
    }
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::read(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::read(dir, e)))
        .collect::<Result<_, _>>()?;
    paths.sort();
    for path in paths.into_iter().filter(|p| p.is_file()) {
        let Some(id) = file_id(&path) else { continue };
        let text = if path.extension().is_some_and(|e| e == "json") {
            let note = note_from_json(&read_bytes(&path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            render_note(&note)
        } else {
            normalize_text(&read_text(&path)?)
        };
        if out.insert(id.clone(), text).is_some() {
            return Err(CliError::usage(format!("{}: id {id} appears in more than one file", dir.display())));
        }
    }
    Ok(out)
}

fn pair_up(
    pred: BTreeMap<String, String>,
    mut reference: BTreeMap<String, String>,
) -> Result<Vec<(String, String)>, CliError> {
    let no_ref: Vec<&str> = pred.keys().filter(|k| !reference.contains_key(*k)).map(String::as_str).collect();
    let no_pred: Vec<&str> = reference.keys().filter(|k| !pred.contains_key(*k)).map(String::as_str).collect();
    if !no_ref.is_empty() || !no_pred.is_empty() {
        let mut msg = String::from("prediction and reference ids differ");
        if !no_pred.is_empty() {
            msg.push_str(&format!("; missing predictions: {}", no_pred.join(", ")));
        }
        if !no_ref.is_empty() {
            msg.push_str(&format!("; missing references: {}", no_ref.join(", ")));
        }
        return Err(CliError::Usage(msg));
    }
    if pred.is_empty() {
        return Err(CliError::usage("no prediction files"));
    }
    Ok(pred.into_iter().map(|(id, p)| (p, reference.remove(&id).expect("paired"))).collect())
}

pub fn run(args: EvalRunArgs) -> Result<(), CliError> {
    if args.name.trim().is_empty() {
        return Err(CliError::usage("--name is empty"));
    }
    let pairs = pair_up(load_notes(&args.pred)?, load_notes(&args.reference)?)?;
    let p = providers(&args.provider)?;
    let row = evaluate_system_with(&pairs, &args.name, p.embedder.as_ref(), None, Execution::default())?;
    let report = render_report(std::slice::from_ref(&row))?;

    let csv = if args.append && args.out.exists() {
        let existing = read_text(&args.out)?;
        let rows = parse_report_csv(&existing).map_err(|e| CliError::usage(format!("{}: {e}", args.out.display())))?;
        if rows.iter().any(|r| r.system_name == args.name) {
            return Err(CliError::usage(format!("{}: system {:?} already reported", args.out.display(), args.name)));
        }
        let body = report.csv.split_once('\n').map_or("", |(_, rest)| rest);
        let mut s = existing;
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s.push_str(body);
        s
    } else {
        report.csv
    };
    write_atomic(&args.out, csv.as_bytes())?;
    emit(None, report.table.as_bytes())
}
