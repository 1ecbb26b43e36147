//! Fine-tuning job description for an external trainer (LoRA adapters on a
//! 4-bit quantized base model).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::soap::DEFAULT_TEMPLATE_ID;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BASE_MODEL: &str = "llama3-8b";
pub const DEFAULT_DATASET: &str = "aci-bench";
pub const DEFAULT_TARGET_MODULES: [&str; 7] =
    ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"];

#[derive(Debug, Error, PartialEq)]
pub enum TuningError {
    #[error("invalid field {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("bad job document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSpec {
    pub base_model: String,
    pub rank_r: u32,
    pub lora_alpha: u32,
    pub target_modules: Vec<String>,
    pub quant_bits: u8,
    pub instruction_template_id: String,
    pub dataset_ref: String,
    /// Trainer settings with no fixed default (learning rate, epochs, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Default for FinetuneSpec {
    fn default() -> Self {
        FinetuneSpec {
            base_model: DEFAULT_BASE_MODEL.to_string(),
            rank_r: 16,
            lora_alpha: 16,
            target_modules: DEFAULT_TARGET_MODULES.iter().map(|s| s.to_string()).collect(),
            quant_bits: 4,
            instruction_template_id: DEFAULT_TEMPLATE_ID.to_string(),
            dataset_ref: DEFAULT_DATASET.to_string(),
            extra: BTreeMap::new(),
        }
    }
}

impl FinetuneSpec {
    pub fn validate(&self) -> Result<(), TuningError> {
        let bad = |field, message: &str| Err(TuningError::Invalid { field, message: message.to_string() });
        if self.base_model.trim().is_empty() {
            return bad("base_model", "must be nonempty");
        }
        if self.rank_r == 0 {
            return bad("rank_r", "must be >= 1");
        }
        if self.lora_alpha == 0 {
            return bad("lora_alpha", "must be >= 1");
        }
        if self.target_modules.is_empty() || self.target_modules.iter().any(|m| m.trim().is_empty()) {
            return bad("target_modules", "must be a nonempty list of names");
        }
        if ![4, 8, 16].contains(&self.quant_bits) {
            return bad("quant_bits", "must be 4, 8 or 16");
        }
        if self.instruction_template_id.trim().is_empty() {
            return bad("instruction_template_id", "must be nonempty");
        }
        if self.dataset_ref.trim().is_empty() {
            return bad("dataset_ref", "must be nonempty");
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct JobDocument {
    schema_version: u32,
    #[serde(flatten)]
    spec: FinetuneSpec,
}

/// Key-sorted, pretty-printed JSON job document with a `schema_version`.
pub fn emit_finetune_spec(spec: &FinetuneSpec) -> Result<String, TuningError> {
    spec.validate()?;
    let doc = JobDocument { schema_version: SCHEMA_VERSION, spec: spec.clone() };
    let value = sort_keys(serde_json::to_value(&doc).map_err(|e| TuningError::Parse(e.to_string()))?);
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| TuningError::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn parse_finetune_spec(text: &str) -> Result<FinetuneSpec, TuningError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| TuningError::Parse(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| TuningError::Parse("expected a JSON object".into()))?;
    match obj.remove("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        other => return Err(TuningError::Parse(format!("unsupported schema_version {other:?}"))),
    }
    let spec: FinetuneSpec = serde_json::from_value(value).map_err(|e| TuningError::Parse(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let doc = emit_finetune_spec(&FinetuneSpec::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(v["rank_r"], 16);
        assert_eq!(v["lora_alpha"], 16);
        assert_eq!(v["quant_bits"], 4);
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["target_modules"].as_array().unwrap().len(), 7);
    }

    #[test]
    fn keys_are_sorted_and_output_stable() {
        let mut spec = FinetuneSpec::default();
        spec.extra.insert("zeta".into(), 1.into());
        spec.extra.insert("alpha".into(), 2.into());
        let a = emit_finetune_spec(&spec).unwrap();
        assert_eq!(a, emit_finetune_spec(&spec).unwrap());
        let keys: Vec<&str> = a
            .lines()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("    "))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(parse_finetune_spec(&a).unwrap(), spec);
    }

    #[test]
    fn validation_names_the_field() {
        let spec = FinetuneSpec { rank_r: 0, ..FinetuneSpec::default() };
        assert!(matches!(emit_finetune_spec(&spec), Err(TuningError::Invalid { field: "rank_r", .. })));
        let spec = FinetuneSpec { quant_bits: 3, ..FinetuneSpec::default() };
        assert!(matches!(spec.validate(), Err(TuningError::Invalid { field: "quant_bits", .. })));
        let spec = FinetuneSpec { target_modules: vec![], ..FinetuneSpec::default() };
        assert!(matches!(spec.validate(), Err(TuningError::Invalid { field: "target_modules", .. })));
    }
}
