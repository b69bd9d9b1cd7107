//! Measurement protocols: patch- and image-level recall, k-of-n voting,
//! cross-generalization matrices, threshold sweeps and the resize-vs-crop
//! comparison.
//!
//! Image-level work runs in parallel, but reports are assembled by an
//! ordered reduction keyed on manifest order, so a deterministic backend
//! produces bit-identical reports at any worker count. Wall time is kept
//! out of the serialized form for the same reason.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, PredictionDistribution};
use crate::datasets::{DatasetManifest, ManifestRecord};
use crate::imageops::{
    center_crop, decode_image, resize_bilinear, select_top_patches, Patch, PatchSelectParams,
    PATCH_SIDE,
};
use crate::{Error, Result};

/// Image-level binary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Synthetic,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Authentic => "authentic",
            Verdict::Synthetic => "synthetic",
        }
    }
}

/// How a class distribution collapses to authentic-vs-synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Binarization {
    /// Argmax; synthetic iff the winning class is not the authentic one.
    /// An exact probability tie involving the authentic class resolves to
    /// authentic.
    AnySynthetic { authentic_label: String },
    /// Synthetic when the combined non-authentic mass strictly exceeds the
    /// threshold.
    ProbabilityThreshold {
        authentic_label: String,
        threshold: f64,
    },
}

impl Binarization {
    pub fn authentic_label(&self) -> &str {
        match self {
            Binarization::AnySynthetic { authentic_label }
            | Binarization::ProbabilityThreshold {
                authentic_label, ..
            } => authentic_label,
        }
    }
}

impl Default for Binarization {
    fn default() -> Self {
        Binarization::AnySynthetic {
            authentic_label: "authentic".into(),
        }
    }
}

/// Collapse one prediction to a binary verdict under the given rule.
pub fn binarize_prediction(
    dist: &PredictionDistribution<f64>,
    label_space: &[String],
    rule: &Binarization,
) -> Result<Verdict> {
    let authentic = rule.authentic_label();
    let auth_idx = label_space
        .iter()
        .position(|l| l == authentic)
        .ok_or_else(|| {
            Error::Parameter(format!(
                "authentic label {authentic:?} is not in the backend label space {label_space:?}"
            ))
        })?;
    if dist.probabilities.len() != label_space.len() {
        return Err(Error::DimensionMismatch {
            expected: label_space.len(),
            got: dist.probabilities.len(),
        });
    }
    let verdict = match rule {
        Binarization::AnySynthetic { .. } => {
            let max = dist
                .probabilities
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if dist.probabilities[auth_idx] >= max {
                Verdict::Authentic
            } else {
                Verdict::Synthetic
            }
        }
        Binarization::ProbabilityThreshold { threshold, .. } => {
            let synthetic_mass: f64 = dist
                .probabilities
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != auth_idx)
                .map(|(_, p)| p)
                .sum();
            if synthetic_mass > *threshold {
                Verdict::Synthetic
            } else {
                Verdict::Authentic
            }
        }
    };
    Ok(verdict)
}

/// Which patches feed the vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// The top contrast-ranked patches only.
    TopContrast,
    /// The center patch is forced into the set; the remaining slots go to
    /// the contrast ranking.
    Center,
}

/// k-of-n image-level decision rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingPolicy {
    /// Patches per image the vote is designed for.
    pub n_patches: usize,
    /// Synthetic verdicts needed to call the image synthetic.
    pub threshold_k: usize,
    pub binarization: Binarization,
    pub selection: SelectionMode,
    /// When an image yields fewer than `n_patches` candidates, the
    /// threshold becomes `ceil(fraction * available)`; 0.6 reproduces both
    /// 3-of-5 and the 2-of-3 small-image adjustment.
    pub small_image_fraction: f64,
}

impl Default for VotingPolicy {
    fn default() -> Self {
        VotingPolicy {
            n_patches: 5,
            threshold_k: 3,
            binarization: Binarization::default(),
            selection: SelectionMode::TopContrast,
            small_image_fraction: 0.6,
        }
    }
}

impl VotingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_k < 1 || self.threshold_k > self.n_patches {
            return Err(Error::Parameter(format!(
                "voting threshold {} must lie in 1..={}",
                self.threshold_k, self.n_patches
            )));
        }
        if !(self.small_image_fraction > 0.0 && self.small_image_fraction <= 1.0) {
            return Err(Error::Parameter(
                "small image fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Threshold for a vote over `available` patches.
    pub fn effective_threshold(&self, available: usize) -> usize {
        if available >= self.n_patches {
            return self.threshold_k;
        }
        // Nudge below the exact product so ceil never overshoots on float
        // representation (0.6 * 5 evaluates slightly above 3).
        let t = (self.small_image_fraction * available as f64 - 1e-9).ceil() as usize;
        t.clamp(1, available)
    }
}

/// Aggregate patch verdicts into an image verdict.
pub fn vote(verdicts: &[Verdict], policy: &VotingPolicy) -> Result<Verdict> {
    policy.validate()?;
    if verdicts.is_empty() {
        return Err(Error::Parameter("no patch verdicts to vote on".into()));
    }
    if verdicts.len() > policy.n_patches {
        return Err(Error::Parameter(format!(
            "{} verdicts exceed the policy's {} patches",
            verdicts.len(),
            policy.n_patches
        )));
    }
    let synthetic = verdicts.iter().filter(|v| **v == Verdict::Synthetic).count();
    Ok(if synthetic >= policy.effective_threshold(verdicts.len()) {
        Verdict::Synthetic
    } else {
        Verdict::Authentic
    })
}

/// Row-major confusion counts; rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub label_space: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(label_space: Vec<String>) -> Self {
        let c = label_space.len();
        assert!(c > 0, "confusion matrix needs at least one class");
        ConfusionMatrix {
            label_space,
            counts: vec![0; c * c],
        }
    }

    fn classes(&self) -> usize {
        self.label_space.len()
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        let c = self.classes();
        assert!(truth < c && pred < c);
        self.counts[truth * c + pred] += 1;
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes() + pred]
    }

    /// Number of truth instances of a class (row sum).
    pub fn support(&self, class: usize) -> u64 {
        let c = self.classes();
        self.counts[class * c..(class + 1) * c].iter().sum()
    }

    pub fn correct(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.label_space.iter().position(|l| l == label)
    }

    /// Fractional recall of one class; zero support is undefined.
    pub fn recall(&self, class: usize) -> Result<f64> {
        let support = self.support(class);
        if support == 0 {
            return Err(Error::Undefined(format!(
                "recall of {:?} with zero support",
                self.label_space[class]
            )));
        }
        Ok(self.correct(class) as f64 / support as f64)
    }

    /// Mean recall over classes with support; zero-support classes are
    /// skipped. Undefined when nothing has support.
    pub fn macro_recall(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for class in 0..self.classes() {
            if self.support(class) > 0 {
                sum += self.recall(class)?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Undefined("macro recall of an empty matrix".into()));
        }
        Ok(sum / n as f64)
    }

    pub fn zero_support_classes(&self) -> Vec<String> {
        (0..self.classes())
            .filter(|&c| self.support(c) == 0)
            .map(|c| self.label_space[c].clone())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Recall in percent with the two decimals used by every table output.
pub fn format_pct(v: f64) -> String {
    format!("{v:.2}")
}

/// Signed delta in percent ("+3.10", "-0.25").
pub fn format_signed_pct(v: f64) -> String {
    format!("{v:+.2}")
}

/// Per-class recall line derived from a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub label: String,
    pub support: u64,
    pub correct: u64,
    /// `None` when the class has no support.
    pub recall_pct: Option<f64>,
}

/// A confusion matrix plus the recalls read off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassRecall>,
    /// Mean over supported classes, in percent.
    pub macro_recall_pct: Option<f64>,
    /// Classes with zero support, excluded from the macro average.
    pub excluded: Vec<String>,
}

impl ConfusionSummary {
    pub fn from_matrix(confusion: ConfusionMatrix) -> Self {
        let per_class = confusion
            .label_space
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let support = confusion.support(i);
                ClassRecall {
                    label: label.clone(),
                    support,
                    correct: confusion.correct(i),
                    recall_pct: (support > 0)
                        .then(|| 100.0 * confusion.correct(i) as f64 / support as f64),
                }
            })
            .collect();
        let macro_recall_pct = confusion.macro_recall().ok().map(|r| 100.0 * r);
        let excluded = confusion.zero_support_classes();
        ConfusionSummary {
            confusion,
            per_class,
            macro_recall_pct,
            excluded,
        }
    }

    pub fn recall_pct_of(&self, label: &str) -> Option<f64> {
        self.per_class
            .iter()
            .find(|c| c.label == label)
            .and_then(|c| c.recall_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Classify the single center patch.
    Center,
    /// Classify the selected patch set and vote.
    Voted,
    /// Resize the whole image to the patch side and classify once.
    Resized,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Center => "center",
            EvalMode::Voted => "voted",
            EvalMode::Resized => "resized",
        }
    }
}

/// One evaluated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub path: PathBuf,
    pub truth: String,
    /// Argmax label over the backend space; absent in voted mode.
    pub strict_prediction: Option<String>,
    /// Patch-level verdicts feeding the vote; empty outside voted mode.
    pub patch_verdicts: Vec<Verdict>,
    pub verdict: Verdict,
}

/// An image excluded from all denominators, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: PathBuf,
    pub reason: String,
}

/// Everything a single-dataset evaluation produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub backend_id: String,
    pub mode: EvalMode,
    /// Multi-class view over the backend label space; present when that
    /// space covers every manifest label and the mode is per-patch.
    pub strict: Option<ConfusionSummary>,
    /// Authentic-vs-synthetic view, always present. Its label space is the
    /// canonical pair, independent of the dataset's class names.
    pub binary: ConfusionSummary,
    pub policy: VotingPolicy,
    pub outcomes: Vec<ImageOutcome>,
    pub skipped: Vec<SkippedImage>,
    /// Measured but never serialized: reports must be byte-identical
    /// across runs and worker counts.
    #[serde(skip)]
    pub wall_time: Option<Duration>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

const BINARY_SPACE: [&str; 2] = ["authentic", "synthetic"];

fn binary_index(v: Verdict) -> usize {
    match v {
        Verdict::Authentic => 0,
        Verdict::Synthetic => 1,
    }
}

enum Processed {
    Done(ImageOutcome),
    Skipped(SkippedImage),
}

fn load_record_image(record: &ManifestRecord) -> std::result::Result<crate::imageops::RgbBuffer, String> {
    let bytes = std::fs::read(&record.path).map_err(|e| format!("read failed: {e}"))?;
    decode_image(&bytes, Some(record.format)).map_err(|e| e.to_string())
}

fn voted_patches(
    img: &crate::imageops::RgbBuffer,
    policy: &VotingPolicy,
    source_id: &str,
) -> Result<Vec<Patch>> {
    let params = PatchSelectParams {
        count: policy.n_patches,
        ..PatchSelectParams::default()
    };
    let mut patches = select_top_patches(img, &params, source_id)?;
    if policy.selection == SelectionMode::Center {
        let center = center_crop(img, params.side, source_id);
        let already_in = patches
            .iter()
            .any(|p| (p.origin_x, p.origin_y) == (center.origin_x, center.origin_y));
        if !already_in {
            // The center patch takes the lowest-ranked slot.
            if patches.len() == policy.n_patches {
                patches.pop();
            }
            patches.push(center);
        }
    }
    Ok(patches)
}

fn process_record(
    backend: &Backend,
    record: &ManifestRecord,
    mode: EvalMode,
    policy: &VotingPolicy,
) -> Result<Processed> {
    let img = match load_record_image(record) {
        Ok(img) => img,
        Err(reason) => {
            return Ok(Processed::Skipped(SkippedImage {
                path: record.path.clone(),
                reason,
            }))
        }
    };
    let label_space = backend.label_space();
    let outcome = match mode {
        EvalMode::Center | EvalMode::Resized => {
            let patch = match mode {
                EvalMode::Center => center_crop(&img, PATCH_SIDE, &record.path.to_string_lossy()).pixels,
                _ => resize_bilinear(&img, PATCH_SIDE, PATCH_SIDE)?,
            };
            let dist = backend.classify_patch(&patch)?;
            let verdict = binarize_prediction(&dist, label_space, &policy.binarization)?;
            ImageOutcome {
                path: record.path.clone(),
                truth: record.label.clone(),
                strict_prediction: Some(label_space[dist.argmax()].clone()),
                patch_verdicts: Vec::new(),
                verdict,
            }
        }
        EvalMode::Voted => {
            let patches = voted_patches(&img, policy, &record.path.to_string_lossy())?;
            let mut patch_verdicts = Vec::with_capacity(patches.len());
            for patch in &patches {
                let dist = backend.classify_patch(&patch.pixels)?;
                patch_verdicts.push(binarize_prediction(&dist, label_space, &policy.binarization)?);
            }
            let verdict = vote(&patch_verdicts, policy)?;
            ImageOutcome {
                path: record.path.clone(),
                truth: record.label.clone(),
                strict_prediction: None,
                patch_verdicts,
                verdict,
            }
        }
    };
    Ok(Processed::Done(outcome))
}

/// Evaluate every record of a manifest under one protocol.
///
/// Unreadable images become [`SkippedImage`] entries and leave every
/// denominator; backend contract violations abort the run. The caller
/// picks which split to evaluate by subsetting the manifest first.
pub fn evaluate_dataset(
    backend: &Backend,
    manifest: &DatasetManifest,
    mode: EvalMode,
    policy: &VotingPolicy,
) -> Result<EvalReport> {
    policy.validate()?;
    if manifest.is_empty() {
        return Err(Error::Parameter("cannot evaluate an empty manifest".into()));
    }
    let label_space = backend.label_space();
    let authentic = policy.binarization.authentic_label();
    if !label_space.iter().any(|l| l == authentic) {
        return Err(Error::Parameter(format!(
            "backend label space {label_space:?} lacks the authentic label {authentic:?}"
        )));
    }
    let covered = manifest
        .label_space
        .iter()
        .all(|l| label_space.iter().any(|b| b == l));
    let strict_enabled = covered && mode != EvalMode::Voted;

    let started = Instant::now();
    let processed: Vec<Result<Processed>> = manifest
        .records
        .par_iter()
        .map(|record| process_record(backend, record, mode, policy))
        .collect();

    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    let mut binary_cm = ConfusionMatrix::new(BINARY_SPACE.iter().map(|s| s.to_string()).collect());
    let mut strict_cm = strict_enabled.then(|| ConfusionMatrix::new(label_space.to_vec()));

    for (item, record) in processed.into_iter().zip(&manifest.records) {
        match item? {
            Processed::Skipped(skip) => skipped.push(skip),
            Processed::Done(outcome) => {
                let truth_binary = if record.label == authentic {
                    Verdict::Authentic
                } else {
                    Verdict::Synthetic
                };
                binary_cm.record(binary_index(truth_binary), binary_index(outcome.verdict));
                if let (Some(cm), Some(pred)) = (strict_cm.as_mut(), &outcome.strict_prediction) {
                    let truth = cm.index_of(&outcome.truth).expect("covered label space");
                    let pred = cm.index_of(pred).expect("prediction from backend space");
                    cm.record(truth, pred);
                }
                outcomes.push(outcome);
            }
        }
    }

    Ok(EvalReport {
        dataset_id: manifest.provenance.clone(),
        backend_id: backend.kind_name().to_string(),
        mode,
        strict: strict_cm.map(ConfusionSummary::from_matrix),
        binary: ConfusionSummary::from_matrix(binary_cm),
        policy: policy.clone(),
        outcomes,
        skipped,
        wall_time: Some(started.elapsed()),
    })
}

/// Trained-on x evaluated-on recall grid with row and column averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    /// Row-major recall percents; `None` marks a failed evaluation.
    pub values: Vec<Option<f64>>,
    pub row_averages: Vec<Option<f64>>,
    pub col_averages: Vec<Option<f64>>,
    /// False when any cell is missing; averages then cover present cells.
    pub complete: bool,
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

impl CrossMatrix {
    pub fn from_cells(row_ids: Vec<String>, col_ids: Vec<String>, values: Vec<Option<f64>>) -> Self {
        assert_eq!(values.len(), row_ids.len() * col_ids.len());
        let cols = col_ids.len();
        let row_averages = (0..row_ids.len())
            .map(|r| mean_present(values[r * cols..(r + 1) * cols].iter().copied()))
            .collect();
        let col_averages = (0..cols)
            .map(|c| mean_present(values.iter().skip(c).step_by(cols).copied()))
            .collect();
        let complete = values.iter().all(Option::is_some);
        CrossMatrix {
            row_ids,
            col_ids,
            values,
            row_averages,
            col_averages,
            complete,
        }
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.col_ids.len() + col]
    }

    /// CSV with a trailing average column and row; the corner holds the
    /// grand mean over present cells.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(format_pct).unwrap_or_default();
        let mut out = String::from("trained_on");
        for c in &self.col_ids {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",avg\n");
        for (r, row_id) in self.row_ids.iter().enumerate() {
            out.push_str(row_id);
            for c in 0..self.col_ids.len() {
                out.push(',');
                out.push_str(&fmt(self.value(r, c)));
            }
            out.push(',');
            out.push_str(&fmt(self.row_averages[r]));
            out.push('\n');
        }
        out.push_str("avg");
        for avg in &self.col_averages {
            out.push(',');
            out.push_str(&fmt(*avg));
        }
        out.push(',');
        out.push_str(&fmt(mean_present(self.values.iter().copied())));
        out.push('\n');
        out
    }
}

/// Fill a cross matrix by calling `cell(row, col)` for every pair.
///
/// A failing cell is recorded as missing rather than aborting the grid;
/// `complete` reflects whether any cell failed.
pub fn build_cross_matrix(
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    mut cell: impl FnMut(usize, usize) -> Result<f64>,
) -> CrossMatrix {
    let mut values = Vec::with_capacity(row_ids.len() * col_ids.len());
    for r in 0..row_ids.len() {
        for c in 0..col_ids.len() {
            values.push(cell(r, c).ok());
        }
    }
    CrossMatrix::from_cells(row_ids, col_ids, values)
}

/// One row of a voting-threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub authentic_recall_pct: Option<f64>,
    pub synthetic_recall_pct: Option<f64>,
}

/// Patch verdicts per readable image of a manifest, in manifest order.
fn manifest_patch_verdicts(
    backend: &Backend,
    manifest: &DatasetManifest,
    policy: &VotingPolicy,
) -> Result<Vec<Vec<Verdict>>> {
    let collected: Vec<Result<Option<Vec<Verdict>>>> = manifest
        .records
        .par_iter()
        .map(|record| {
            let img = match load_record_image(record) {
                Ok(img) => img,
                Err(_) => return Ok(None),
            };
            let patches = voted_patches(&img, policy, &record.path.to_string_lossy())?;
            let mut verdicts = Vec::with_capacity(patches.len());
            for patch in &patches {
                let dist = backend.classify_patch(&patch.pixels)?;
                verdicts.push(binarize_prediction(
                    &dist,
                    backend.label_space(),
                    &policy.binarization,
                )?);
            }
            Ok(Some(verdicts))
        })
        .collect();
    let mut out = Vec::new();
    for item in collected {
        if let Some(v) = item? {
            out.push(v);
        }
    }
    Ok(out)
}

/// Sweep the voting threshold k from 1 to n over an authentic and a
/// synthetic manifest, classifying each patch exactly once.
pub fn threshold_sweep(
    backend: &Backend,
    authentic: &DatasetManifest,
    synthetic: &DatasetManifest,
    policy: &VotingPolicy,
) -> Result<Vec<SweepRow>> {
    policy.validate()?;
    if authentic.is_empty() || synthetic.is_empty() {
        return Err(Error::Parameter(
            "threshold sweep needs both an authentic and a synthetic manifest".into(),
        ));
    }
    let authentic_votes = manifest_patch_verdicts(backend, authentic, policy)?;
    let synthetic_votes = manifest_patch_verdicts(backend, synthetic, policy)?;

    let recall_at = |votes: &[Vec<Verdict>], want: Verdict, k: usize| -> Result<Option<f64>> {
        if votes.is_empty() {
            return Ok(None);
        }
        let mut policy_k = policy.clone();
        policy_k.threshold_k = k;
        let mut hits = 0usize;
        for verdicts in votes {
            if vote(verdicts, &policy_k)? == want {
                hits += 1;
            }
        }
        Ok(Some(100.0 * hits as f64 / votes.len() as f64))
    };

    let mut rows = Vec::with_capacity(policy.n_patches);
    for k in 1..=policy.n_patches {
        rows.push(SweepRow {
            k,
            authentic_recall_pct: recall_at(&authentic_votes, Verdict::Authentic, k)?,
            synthetic_recall_pct: recall_at(&synthetic_votes, Verdict::Synthetic, k)?,
        });
    }
    Ok(rows)
}

/// Per-class recall difference between a resized and a center-patch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub label: String,
    pub center_pct: Option<f64>,
    pub resized_pct: Option<f64>,
    /// Resized minus center, in percentage points.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub dataset_id: String,
    pub backend_id: String,
    pub per_class: Vec<ClassDelta>,
    pub macro_delta_pct: Option<f64>,
}

/// Compare a center-patch report against a resized report of the same
/// dataset and backend: per class, resized recall minus center recall.
pub fn resize_vs_crop_report(center: &EvalReport, resized: &EvalReport) -> Result<DeltaReport> {
    if center.mode != EvalMode::Center || resized.mode != EvalMode::Resized {
        return Err(Error::Parameter(format!(
            "expected a center and a resized report, got {} and {}",
            center.mode.name(),
            resized.mode.name()
        )));
    }
    if center.dataset_id != resized.dataset_id || center.backend_id != resized.backend_id {
        return Err(Error::Parameter(format!(
            "reports disagree on dataset or backend: {} / {} vs {} / {}",
            center.dataset_id, center.backend_id, resized.dataset_id, resized.backend_id
        )));
    }
    // Prefer the strict view when both runs have it.
    let (a, b) = match (&center.strict, &resized.strict) {
        (Some(a), Some(b)) => (a, b),
        _ => (&center.binary, &resized.binary),
    };
    if a.confusion.label_space != b.confusion.label_space {
        return Err(Error::Parameter(
            "reports were built over different label spaces".into(),
        ));
    }
    let per_class = a
        .per_class
        .iter()
        .zip(&b.per_class)
        .map(|(c, r)| ClassDelta {
            label: c.label.clone(),
            center_pct: c.recall_pct,
            resized_pct: r.recall_pct,
            delta_pct: c.recall_pct.zip(r.recall_pct).map(|(c, r)| r - c),
        })
        .collect();
    let macro_delta_pct = a
        .macro_recall_pct
        .zip(b.macro_recall_pct)
        .map(|(c, r)| r - c);
    Ok(DeltaReport {
        dataset_id: center.dataset_id.clone(),
        backend_id: center.backend_id.clone(),
        per_class,
        macro_delta_pct,
    })
}
