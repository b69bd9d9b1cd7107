//! One function per subcommand. Each takes the already-merged config (or
//! plain flags for the dataset utilities), runs the corresponding core
//! pipeline, and writes enveloped JSON artifacts.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use sid_core::alterations::{augment, AppliedAlteration, AugmentationPolicy};
use sid_core::backends::{load_backend, Backend};
use sid_core::datasets::{
    split_manifest, undersample, validate_manifest, DatasetManifest, Split, DEFAULT_CLASS_CAP,
};
use sid_core::evaluation::{
    build_cross_matrix, evaluate_dataset, format_pct, resize_vs_crop_report, threshold_sweep,
    EvalMode, EvalReport, SweepRow,
};
use sid_core::imageops::{
    compute_glcm, decode_image, encode_png, select_top_patches, to_grayscale, PatchSelectParams,
    RgbBuffer,
};
use sid_core::refmodel::{extract_features, train, FeatureSet};

use crate::artifacts::{write_artifact, write_csv};
use crate::config::{require, CellMetric, ExperimentConfig};
use crate::CliError;

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(path)?)
}

/// Apply the optional split filter from the config.
fn manifest_view(manifest: DatasetManifest, split: Option<Split>) -> DatasetManifest {
    match split {
        Some(s) => manifest.subset(s),
        None => manifest,
    }
}

fn load_image(path: &Path) -> Result<RgbBuffer, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
    Ok(decode_image(&bytes, None)?)
}

// --- dataset ---

pub fn dataset_ingest(
    dir: &Path,
    label: &str,
    generator: &str,
    year: Option<u32>,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = sid_core::datasets::ingest_directory(dir, label, generator, year)?;
    manifest.save(out)?;
    println!(
        "ingested {} records under label {:?} -> {}",
        manifest.records.len(),
        label,
        out.display()
    );
    Ok(())
}

pub fn dataset_split(
    manifest_path: &Path,
    ratios: (f64, f64, f64),
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let outcome = split_manifest(&manifest, ratios, seed)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    outcome.manifest.save(out)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!(
            "{}: {} records",
            split.name(),
            outcome.manifest.records_in(split).count()
        );
    }
    Ok(())
}

pub fn dataset_undersample(
    manifest_path: &Path,
    class: &str,
    cap: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let cap = cap.unwrap_or(DEFAULT_CLASS_CAP);
    let before = manifest.counts_by_label().get(class).copied().unwrap_or(0);
    let capped = undersample(&manifest, class, cap, seed)?;
    let after = capped.counts_by_label().get(class).copied().unwrap_or(0);
    capped.save(out)?;
    println!("class {class:?}: {before} -> {after} records (cap {cap})");
    Ok(())
}

pub fn dataset_validate(manifest_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let violations = validate_manifest(&manifest);
    for v in &violations {
        println!("{v}");
    }
    if let Some(out) = out {
        let config = json!({
            "schema_version": crate::config::CONFIG_SCHEMA_VERSION,
            "command": "dataset validate",
            "manifest": manifest_path,
        });
        write_artifact(out, "manifest_validation", &config, &violations)?;
    }
    if violations.is_empty() {
        println!("manifest is clean ({} records)", manifest.records.len());
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{} violation(s) in {}",
            violations.len(),
            manifest_path.display()
        )))
    }
}

// --- patchify ---

#[derive(Serialize)]
struct PatchEntry {
    origin_x: u32,
    origin_y: u32,
    side: u32,
    padded: bool,
    contrast: f64,
}

#[derive(Serialize)]
struct PatchReport {
    source: PathBuf,
    width: u32,
    height: u32,
    patches: Vec<PatchEntry>,
}

pub fn patchify(
    image: &Path,
    count: usize,
    out: Option<&Path>,
    patch_dir: Option<&Path>,
) -> Result<(), CliError> {
    let img = load_image(image)?;
    let params = PatchSelectParams {
        count,
        ..PatchSelectParams::default()
    };
    let patches = select_top_patches(&img, &params, &image.to_string_lossy())?;
    let entries: Vec<PatchEntry> = patches
        .iter()
        .map(|p| {
            let gray = to_grayscale(&p.pixels);
            let contrast = compute_glcm::<f64>(&gray, &params.glcm)
                .map(|m| m.contrast())
                .unwrap_or(0.0);
            PatchEntry {
                origin_x: p.origin_x,
                origin_y: p.origin_y,
                side: p.pixels.width(),
                padded: p.padded,
                contrast,
            }
        })
        .collect();
    for (i, e) in entries.iter().enumerate() {
        println!(
            "patch {i}: origin ({}, {}), contrast {:.3}{}",
            e.origin_x,
            e.origin_y,
            e.contrast,
            if e.padded { " (padded)" } else { "" }
        );
    }
    if let Some(dir) = patch_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("creating {}: {e}", dir.display())))?;
        let stem = image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patch".into());
        for (i, p) in patches.iter().enumerate() {
            let path = dir.join(format!("{stem}_p{i}.png"));
            std::fs::write(&path, encode_png(&p.pixels)?)
                .map_err(|e| CliError::config(format!("writing {}: {e}", path.display())))?;
        }
    }
    if let Some(out) = out {
        let config = json!({
            "schema_version": crate::config::CONFIG_SCHEMA_VERSION,
            "command": "patchify",
            "image": image,
            "count": count,
        });
        let report = PatchReport {
            source: image.to_path_buf(),
            width: img.width(),
            height: img.height(),
            patches: entries,
        };
        write_artifact(out, "patch_report", &config, &report)?;
    }
    Ok(())
}

// --- alter ---

#[derive(Serialize)]
struct AlterReport {
    source: PathBuf,
    image_index: u64,
    applied: Vec<AppliedAlteration>,
    output_image: PathBuf,
}

/// The policy an experiment uses: the configured steps, reseeded with the
/// experiment seed so one knob governs every random draw.
fn seeded_augmentation(
    config: &ExperimentConfig,
) -> Result<Option<AugmentationPolicy>, CliError> {
    match &config.augmentation {
        None => Ok(None),
        Some(policy) => {
            let mut policy = policy.clone();
            policy.seed = config.seed()?;
            Ok(Some(policy))
        }
    }
}

pub fn alter(
    config: &ExperimentConfig,
    canonical: &Value,
    image: &Path,
    index: u64,
    out_image: &Path,
) -> Result<(), CliError> {
    let policy = seeded_augmentation(config)?
        .ok_or_else(|| CliError::config("config has no \"augmentation\" policy"))?;
    let img = load_image(image)?;
    let (altered, applied) = augment(&img, &policy, index)?;
    std::fs::write(out_image, encode_png(&altered)?)
        .map_err(|e| CliError::config(format!("writing {}: {e}", out_image.display())))?;
    println!(
        "applied {} alteration(s) to {} -> {}",
        applied.len(),
        image.display(),
        out_image.display()
    );
    if let Some(out) = &config.report_output {
        let report = AlterReport {
            source: image.to_path_buf(),
            image_index: index,
            applied,
            output_image: out_image.to_path_buf(),
        };
        write_artifact(out, "alteration_report", canonical, &report)?;
    }
    Ok(())
}

// --- train ---

/// Extract per-patch features for every record of a manifest. Records are
/// indexed in manifest order; that index keys the augmentation draws.
fn feature_set_from_manifest(
    manifest: &DatasetManifest,
    label_space: &[String],
    patches_per_image: usize,
    augmentation: Option<&AugmentationPolicy>,
) -> Result<FeatureSet<f64>, CliError> {
    let mut set = FeatureSet::new(label_space.to_vec());
    let params = PatchSelectParams {
        count: patches_per_image,
        ..PatchSelectParams::default()
    };
    for (index, record) in manifest.records.iter().enumerate() {
        let label = label_space
            .iter()
            .position(|l| l == &record.label)
            .ok_or_else(|| {
                CliError::config(format!(
                    "label {:?} of {} is outside the training label space",
                    record.label,
                    record.path.display()
                ))
            })?;
        let bytes = std::fs::read(&record.path).map_err(|e| {
            CliError::config(format!("reading {}: {e}", record.path.display()))
        })?;
        let mut img = decode_image(&bytes, Some(record.format))?;
        if let Some(policy) = augmentation {
            img = augment(&img, policy, index as u64)?.0;
        }
        let patches = select_top_patches(&img, &params, &record.path.to_string_lossy())?;
        for patch in &patches {
            set.push(extract_features(&patch.pixels)?, label);
        }
    }
    Ok(set)
}

pub fn run_train(config: &ExperimentConfig, canonical: &Value) -> Result<(), CliError> {
    let seed = config.seed()?;
    let output = require(&config.output, "output")?;
    // Either two explicit manifests or one manifest with assigned splits.
    let (train_manifest, val_manifest) = match (&config.train_manifest, &config.val_manifest) {
        (Some(t), Some(v)) => (load_manifest(t)?, load_manifest(v)?),
        (None, None) => {
            let manifest = load_manifest(require(&config.manifest, "manifest")?)?;
            (manifest.subset(Split::Train), manifest.subset(Split::Val))
        }
        _ => {
            return Err(CliError::config(
                "set both train_manifest and val_manifest, or a single split manifest",
            ))
        }
    };
    // One label space for both sets, in training-manifest order.
    let mut label_space = train_manifest.label_space.clone();
    for label in &val_manifest.label_space {
        if !label_space.contains(label) {
            label_space.push(label.clone());
        }
    }
    let patches_per_image = config.patches_per_image.unwrap_or(5);
    let augmentation = seeded_augmentation(config)?;
    // Validation features are never augmented; the monitor must measure
    // the clean objective.
    let train_set = feature_set_from_manifest(
        &train_manifest,
        &label_space,
        patches_per_image,
        augmentation.as_ref(),
    )?;
    let val_set = feature_set_from_manifest(&val_manifest, &label_space, patches_per_image, None)?;

    let mut train_cfg = config.train.clone().unwrap_or_default();
    train_cfg.seed = seed;
    let (model, report) = train(&train_set, &val_set, &train_cfg)?;
    model.save(output)?;
    println!(
        "trained on {} patches, validated on {}; best epoch {}{}; model -> {}",
        train_set.samples.len(),
        val_set.samples.len(),
        report.best_epoch,
        if report.stopped_early {
            " (early stop)"
        } else {
            ""
        },
        output.display()
    );
    if let Some(report_path) = &config.report_output {
        write_artifact(report_path, "train_report", canonical, &report)?;
    }
    Ok(())
}

// --- eval ---

fn print_eval_summary(report: &EvalReport) {
    let fmt = |v: Option<f64>| v.map(format_pct).unwrap_or_else(|| "n/a".into());
    println!(
        "{} on {} [{}]: authentic recall {}, synthetic recall {}, {} image(s), {} skipped",
        report.backend_id,
        report.dataset_id,
        report.mode.name(),
        fmt(report.binary.recall_pct_of("authentic")),
        fmt(report.binary.recall_pct_of("synthetic")),
        report.outcomes.len(),
        report.skipped.len()
    );
}

fn run_single_eval(
    config: &ExperimentConfig,
    backend: &Backend,
    mode: EvalMode,
) -> Result<EvalReport, CliError> {
    let manifest = manifest_view(
        load_manifest(require(&config.manifest, "manifest")?)?,
        config.split,
    );
    Ok(evaluate_dataset(backend, &manifest, mode, &config.policy())?)
}

pub fn run_eval(config: &ExperimentConfig, canonical: &Value) -> Result<(), CliError> {
    config.seed()?;
    let out = require(&config.output, "output")?;
    let backend = load_backend(require(&config.backend, "backend")?)?;
    let report = run_single_eval(config, &backend, config.mode())?;
    print_eval_summary(&report);
    write_artifact(out, "eval_report", canonical, &report)?;
    Ok(())
}

// --- cross ---

fn cell_value(report: &EvalReport, metric: CellMetric) -> Result<f64, CliError> {
    let missing = |what: &str| {
        CliError::validation(format!("cell has no {what} support to report"))
    };
    match metric {
        CellMetric::SyntheticRecall => report
            .binary
            .recall_pct_of("synthetic")
            .ok_or_else(|| missing("synthetic")),
        CellMetric::AuthenticRecall => report
            .binary
            .recall_pct_of("authentic")
            .ok_or_else(|| missing("authentic")),
        CellMetric::MacroRecall => report
            .binary
            .macro_recall_pct
            .ok_or_else(|| missing("binary")),
    }
}

pub fn run_cross(config: &ExperimentConfig, canonical: &Value) -> Result<(), CliError> {
    config.seed()?;
    let out = require(&config.output, "output")?;
    let models = require(&config.models, "models")?;
    let datasets = require(&config.datasets, "datasets")?;
    if models.is_empty() || datasets.is_empty() {
        return Err(CliError::config("models and datasets must be nonempty"));
    }
    let metric = config.cell_metric.unwrap_or_default();
    let mode = config.mode.unwrap_or(EvalMode::Center);
    let policy = config.policy();

    // Load every backend and manifest once; a failed row or column shows
    // up as missing cells, not an aborted grid.
    let backends: Vec<Result<Backend, CliError>> = models
        .iter()
        .map(|m| Ok(load_backend(&m.backend)?))
        .collect();
    let manifests: Vec<Result<DatasetManifest, CliError>> = datasets
        .iter()
        .map(|d| Ok(manifest_view(load_manifest(&d.manifest)?, config.split)))
        .collect();
    for (slot, result) in backends.iter().enumerate() {
        if let Err(e) = result {
            eprintln!("warning: model {:?}: {}", models[slot].id, e.message);
        }
    }
    for (slot, result) in manifests.iter().enumerate() {
        if let Err(e) = result {
            eprintln!("warning: dataset {:?}: {}", datasets[slot].id, e.message);
        }
    }

    let matrix = build_cross_matrix(
        models.iter().map(|m| m.id.clone()).collect(),
        datasets.iter().map(|d| d.id.clone()).collect(),
        |r, c| {
            let backend = backends[r]
                .as_ref()
                .map_err(|e| sid_core::Error::Parameter(e.message.clone()))?;
            let manifest = manifests[c]
                .as_ref()
                .map_err(|e| sid_core::Error::Parameter(e.message.clone()))?;
            let report = evaluate_dataset(backend, manifest, mode, &policy)?;
            cell_value(&report, metric).map_err(|e| sid_core::Error::Parameter(e.message))
        },
    );
    if !matrix.complete {
        eprintln!("warning: {} cell(s) missing",
            matrix.values.iter().filter(|v| v.is_none()).count());
    }
    print!("{}", matrix.to_csv());
    write_artifact(out, "cross_matrix", canonical, &matrix)?;
    if let Some(csv_path) = &config.csv_output {
        write_csv(csv_path, canonical, &matrix.to_csv())?;
    }
    Ok(())
}

// --- sweep ---

fn sweep_csv(rows: &[SweepRow]) -> String {
    let fmt = |v: Option<f64>| v.map(format_pct).unwrap_or_default();
    let mut out = String::from("k,authentic_recall,synthetic_recall\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.k,
            fmt(row.authentic_recall_pct),
            fmt(row.synthetic_recall_pct)
        ));
    }
    out
}

pub fn run_sweep(config: &ExperimentConfig, canonical: &Value) -> Result<(), CliError> {
    config.seed()?;
    let out = require(&config.output, "output")?;
    let backend = load_backend(require(&config.backend, "backend")?)?;
    let authentic = manifest_view(
        load_manifest(require(&config.authentic_manifest, "authentic_manifest")?)?,
        config.split,
    );
    let synthetic = manifest_view(
        load_manifest(require(&config.synthetic_manifest, "synthetic_manifest")?)?,
        config.split,
    );
    let rows = threshold_sweep(&backend, &authentic, &synthetic, &config.policy())?;
    print!("{}", sweep_csv(&rows));
    write_artifact(out, "threshold_sweep", canonical, &rows)?;
    if let Some(csv_path) = &config.csv_output {
        write_csv(csv_path, canonical, &sweep_csv(&rows))?;
    }
    Ok(())
}

// --- resize-study ---

pub fn run_resize_study(config: &ExperimentConfig, canonical: &Value) -> Result<(), CliError> {
    config.seed()?;
    let out = require(&config.output, "output")?;
    let backend = load_backend(require(&config.backend, "backend")?)?;
    let center = run_single_eval(config, &backend, EvalMode::Center)?;
    let resized = run_single_eval(config, &backend, EvalMode::Resized)?;
    print_eval_summary(&center);
    print_eval_summary(&resized);
    let delta = resize_vs_crop_report(&center, &resized)?;
    for class in &delta.per_class {
        if let Some(d) = class.delta_pct {
            println!(
                "{}: {}",
                class.label,
                sid_core::evaluation::format_signed_pct(d)
            );
        }
    }
    write_artifact(out, "resize_delta", canonical, &delta)?;
    Ok(())
}

// --- co2 ---

/// Energy-to-emissions arithmetic record.
#[derive(Debug, Serialize)]
pub struct EnergyEstimate {
    pub energy_kwh: f64,
    pub intensity_kg_per_kwh: f64,
    pub emissions_kg: f64,
}

pub fn estimate_co2(energy_kwh: f64, intensity: f64) -> Result<EnergyEstimate, CliError> {
    if !(energy_kwh >= 0.0) || !(intensity >= 0.0) {
        return Err(CliError::validation(
            "energy and intensity must be finite and nonnegative",
        ));
    }
    Ok(EnergyEstimate {
        energy_kwh,
        intensity_kg_per_kwh: intensity,
        emissions_kg: energy_kwh * intensity,
    })
}

pub fn run_co2(
    config: &ExperimentConfig,
    kwh: f64,
    intensity: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let intensity = intensity
        .or(config.co2_intensity_kg_per_kwh)
        .ok_or_else(|| {
            CliError::config(
                "no intensity given: pass --intensity or set co2_intensity_kg_per_kwh",
            )
        })?;
    let estimate = estimate_co2(kwh, intensity)?;
    println!(
        "{}",
        serde_json::to_string(&estimate).map_err(|e| CliError::internal(e.to_string()))?
    );
    if let Some(out) = out {
        let flags = json!({
            "schema_version": crate::config::CONFIG_SCHEMA_VERSION,
            "command": "co2",
            "kwh": kwh,
            "intensity": intensity,
        });
        write_artifact(out, "energy_estimate", &flags, &estimate)?;
    }
    Ok(())
}
