use medipipe_core::tuning::{emit_finetune_spec, parse_finetune_spec, FinetuneSpec};

use crate::io::{emit, read_text};
use crate::{CliError, FinetuneAction};

pub fn run(action: FinetuneAction) -> Result<(), CliError> {
    match action {
        FinetuneAction::Emit(a) => {
            let spec = FinetuneSpec {
                base_model: a.base,
                rank_r: a.rank,
                lora_alpha: a.alpha,
                quant_bits: a.quant_bits,
                dataset_ref: a.dataset,
                ..FinetuneSpec::default()
            };
            emit(a.out.as_deref(), emit_finetune_spec(&spec)?.as_bytes())
        }
        FinetuneAction::Check { input } => {
            let spec = parse_finetune_spec(&read_text(&input)?)?;
            emit(None, format!("ok base_model={} r={} alpha={} bits={}\n", spec.base_model, spec.rank_r, spec.lora_alpha, spec.quant_bits).as_bytes())
        }
    }
}
