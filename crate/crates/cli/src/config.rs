//! Experiment configuration: JSON documents with a schema version, preset
//! templates, and flag overrides layered on top.
//!
//! Precedence is preset < config file < command-line flags. The merged
//! document is what gets hashed and embedded into artifacts, so two runs
//! with the same effective config produce identical provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sid_core::alterations::{susy_policy, AugmentationPolicy};
use sid_core::backends::BackendDescriptor;
use sid_core::datasets::Split;
use sid_core::evaluation::{EvalMode, VotingPolicy};
use sid_core::refmodel::TrainConfig;

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A backend with the name it carries in a cross-evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedBackend {
    pub id: String,
    pub backend: BackendDescriptor,
}

/// A manifest with the name it carries in a cross-evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedManifest {
    pub id: String,
    pub manifest: PathBuf,
}

/// What number a cross-evaluation cell reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMetric {
    /// Binary recall of the synthetic side.
    SyntheticRecall,
    /// Binary recall of the authentic side.
    AuthenticRecall,
    /// Macro recall over the binary confusion matrix.
    MacroRecall,
}

impl Default for CellMetric {
    fn default() -> Self {
        CellMetric::SyntheticRecall
    }
}

/// One experiment, fully described. Commands read the fields they need and
/// reject configs that are missing them; unknown fields are typos and are
/// rejected outright.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Experiment seed; derives every internal RNG (shuffling,
    /// augmentation). Mandatory for commands that run experiments.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub backend: Option<BackendDescriptor>,
    /// Cross-evaluation rows.
    #[serde(default)]
    pub models: Option<Vec<NamedBackend>>,
    /// Cross-evaluation columns.
    #[serde(default)]
    pub datasets: Option<Vec<NamedManifest>>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub authentic_manifest: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_manifest: Option<PathBuf>,
    #[serde(default)]
    pub train_manifest: Option<PathBuf>,
    #[serde(default)]
    pub val_manifest: Option<PathBuf>,
    /// Restrict evaluation to one split of the manifest(s); absent means
    /// every record.
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub mode: Option<EvalMode>,
    #[serde(default)]
    pub policy: Option<VotingPolicy>,
    #[serde(default)]
    pub augmentation: Option<AugmentationPolicy>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Top-contrast patches extracted per training image.
    #[serde(default)]
    pub patches_per_image: Option<usize>,
    #[serde(default)]
    pub cell_metric: Option<CellMetric>,
    /// Grid CO2 intensity in kg per kWh for `sid co2`; a config value, not
    /// a built-in constant.
    #[serde(default)]
    pub co2_intensity_kg_per_kwh: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub csv_output: Option<PathBuf>,
    /// Where `sid train` writes its training report artifact; the model
    /// itself goes to `output`.
    #[serde(default)]
    pub report_output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::config("config has no seed; pass --seed or set \"seed\""))
    }

    pub fn policy(&self) -> VotingPolicy {
        self.policy.clone().unwrap_or_default()
    }

    pub fn mode(&self) -> EvalMode {
        self.mode.unwrap_or(EvalMode::Voted)
    }

}

/// Pull a mandatory field out of the config with a pointed error.
pub fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    field
        .as_ref()
        .ok_or_else(|| CliError::config(format!("config is missing \"{name}\"")))
}

/// Merge `over` onto `base`: top-level object fields in `over` replace the
/// same-named fields in `base`.
pub fn overlay(base: Value, over: Value) -> Result<Value, CliError> {
    match (base, over) {
        (Value::Object(mut b), Value::Object(o)) => {
            for (k, v) in o {
                b.insert(k, v);
            }
            Ok(Value::Object(b))
        }
        (_, o) if o.is_object() => Ok(o),
        _ => Err(CliError::config("config documents must be JSON objects")),
    }
}

/// Assemble the effective config: preset template, then the config file,
/// then individual flag overrides (passed as a JSON object).
pub fn effective_config(
    preset: Option<&str>,
    config_path: Option<&Path>,
    flag_overrides: Value,
) -> Result<(ExperimentConfig, Value), CliError> {
    let mut doc = match preset {
        Some(name) => preset_template(name)?,
        None => json!({ "schema_version": CONFIG_SCHEMA_VERSION }),
    };
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("reading config {}: {e}", path.display()))
        })?;
        let file: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        doc = overlay(doc, file)?;
    }
    doc = overlay(doc, flag_overrides)?;

    let config: ExperimentConfig = serde_json::from_value(doc.clone())
        .map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    if config.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "config schema_version {} is not the supported {CONFIG_SCHEMA_VERSION}",
            config.schema_version
        )));
    }
    // Canonical form: serialize the parsed struct, not the raw overlay, so
    // field order and defaults are stable regardless of input ordering.
    let canonical = serde_json::to_value(&config).expect("config reserializes");
    Ok((config, canonical))
}

pub const PRESET_NAMES: [&str; 6] = [
    "susy-train",
    "table3",
    "table5",
    "table6",
    "table7",
    "table8-resize",
];

/// Built-in config templates. Manifest and model paths are placeholders
/// the user replaces; everything protocol-shaped is filled in.
pub fn preset_template(name: &str) -> Result<Value, CliError> {
    let fill = |what: &str| format!("REPLACE_WITH/{what}");
    let reference = |what: &str| json!({ "kind": "reference", "model_path": fill(what) });
    let majority = serde_json::to_value(VotingPolicy::default()).unwrap();
    let strict = serde_json::to_value(VotingPolicy {
        threshold_k: 5,
        ..VotingPolicy::default()
    })
    .unwrap();
    let template = match name {
        // Robust-training recipe: mirror coin-flip plus the five
        // photometric alterations at 20%, monitoring validation loss.
        "susy-train" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "train_manifest": fill("train-manifest.jsonl"),
            "val_manifest": fill("val-manifest.jsonl"),
            "train": serde_json::to_value(TrainConfig {
                monitor: sid_core::refmodel::Monitor::ValidationLoss,
                ..TrainConfig::default()
            })
            .unwrap(),
            "augmentation": serde_json::to_value(susy_policy(0)).unwrap(),
            "patches_per_image": 5,
            "output": fill("model.json"),
        }),
        // Single-class cross grid, scored per patch on the center crop.
        "table3" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "models": (1..=5).map(|i| json!({
                "id": format!("gen{i}-trained"),
                "backend": reference(&format!("gen{i}-model.json")),
            })).collect::<Vec<_>>(),
            "datasets": (1..=5).map(|i| json!({
                "id": format!("gen{i}"),
                "manifest": fill(&format!("gen{i}-test.jsonl")),
            })).collect::<Vec<_>>(),
            "mode": "center",
            "split": "test",
            "policy": majority,
            "cell_metric": "synthetic_recall",
            "output": "table3-cross.json",
            "csv_output": "table3-cross.csv",
        }),
        // Alteration-robustness grid: models trained under one alteration,
        // columns are the altered test variants.
        "table5" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "models": (["plain", "jpeg", "blur", "brightness-contrast", "gamma"]
                .iter()
                .map(|a| json!({
                    "id": format!("{a}-trained"),
                    "backend": reference(&format!("{a}-model.json")),
                }))
                .collect::<Vec<_>>()),
            "datasets": (["plain", "jpeg", "blur", "brightness-contrast", "gamma"]
                .iter()
                .map(|a| json!({
                    "id": format!("{a}-altered"),
                    "manifest": fill(&format!("{a}-test.jsonl")),
                }))
                .collect::<Vec<_>>()),
            "mode": "center",
            "split": "test",
            "policy": majority,
            "cell_metric": "synthetic_recall",
            "output": "table5-cross.json",
            "csv_output": "table5-cross.csv",
        }),
        // Source-generalization grid at image level, 3-of-5 majority votes.
        "table6" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "models": [json!({
                "id": "detector",
                "backend": reference("model.json"),
            })],
            "datasets": (1..=5).map(|i| json!({
                "id": format!("source{i}"),
                "manifest": fill(&format!("source{i}.jsonl")),
            })).collect::<Vec<_>>(),
            "mode": "voted",
            "policy": majority,
            "cell_metric": "synthetic_recall",
            "output": "table6-cross.json",
            "csv_output": "table6-cross.csv",
        }),
        // Image-level threshold sweep, k = 1..5; the 3-of-5 and 5-of-5
        // rows are the two shipped operating points.
        "table7" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "backend": reference("model.json"),
            "authentic_manifest": fill("authentic.jsonl"),
            "synthetic_manifest": fill("synthetic.jsonl"),
            "policy": strict,
            "output": "table7-sweep.json",
            "csv_output": "table7-sweep.csv",
        }),
        // Whole-image resize versus center crop, per-class recall deltas.
        "table8-resize" => json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": 0,
            "backend": reference("model.json"),
            "manifest": fill("eval-manifest.jsonl"),
            "policy": majority,
            "output": "table8-deltas.json",
        }),
        other => {
            return Err(CliError::config(format!(
                "unknown preset {other:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(template)
}
