use medipipe_core::corpus::{load_corpus, Split};

use crate::{CliError, CorpusAction};

pub fn run(action: CorpusAction) -> Result<(), CliError> {
    let (args, with_stats) = match action {
        CorpusAction::Validate(a) => (a, false),
        CorpusAction::Stats(a) => (a, true),
    };
    let corpus = load_corpus(&args.root, &args.manifest)?;
    let stats = corpus.stats();
    let mut out = stats.summary_line();
    out.push('\n');
    if with_stats {
        for split in Split::ALL {
            out.push_str(&format!("{split}\t{}\n", stats.count(split)));
        }
        out.push_str(&format!("mean_dialogue_tokens\t{:.2}\n", stats.mean_dialogue_tokens));
        out.push_str(&format!("mean_note_tokens\t{:.2}\n", stats.mean_note_tokens));
    }
    crate::io::emit(None, out.as_bytes())
}
