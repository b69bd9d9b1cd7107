//! Manifest-based dataset bookkeeping: ingest, split, undersample, validate.
//!
//! A manifest is a list of records serialized as JSON Lines, one record per
//! line. Files carry records only; the label space and provenance are
//! derived on load (or declared explicitly via [`DatasetManifest::new`]),
//! so concatenating two manifest files is a valid merge.
//!
//! All operations return new manifests and are deterministic under a fixed
//! seed; record order is never disturbed, only membership and the `split`
//! field change.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imageops::ImageFileFormat;
use crate::{Error, Result};

/// Class size cap used by the shipped presets.
pub const DEFAULT_CLASS_CAP: usize = 5_435;

/// Earliest plausible release year for a generator in scope.
const MIN_YEAR: u32 = 2014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

/// One image in a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub label: String,
    /// Generating model name, or "none" for authentic imagery.
    pub generator: String,
    /// Release year of the generator, when known.
    pub year: Option<u32>,
    pub format: ImageFileFormat,
    pub split: Split,
}

/// Immutable set of records plus the label space they are judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub label_space: Vec<String>,
    pub provenance: String,
}

impl DatasetManifest {
    /// Build with an explicit label space (may be wider than the records).
    pub fn new(
        records: Vec<ManifestRecord>,
        label_space: Vec<String>,
        provenance: impl Into<String>,
    ) -> Self {
        DatasetManifest {
            records,
            label_space,
            provenance: provenance.into(),
        }
    }

    /// Build with the label space derived from the records, in order of
    /// first appearance.
    pub fn from_records(records: Vec<ManifestRecord>, provenance: impl Into<String>) -> Self {
        let mut label_space = Vec::new();
        for r in &records {
            if !label_space.contains(&r.label) {
                label_space.push(r.label.clone());
            }
        }
        Self::new(records, label_space, provenance)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records carrying the given split marker, in manifest order.
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// New manifest containing only the given split.
    pub fn subset(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            records: self.records_in(split).cloned().collect(),
            label_space: self.label_space.clone(),
            provenance: format!("{} [{}]", self.provenance, split.name()),
        }
    }

    pub fn counts_by_label(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Write as JSON Lines, one record per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        std::fs::write(path, out)
            .map_err(|e| Error::io(format!("writing manifest {}", path.display()), e))
    }

    /// Read JSON Lines; blank lines are ignored, anything else must parse.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(line).map_err(|e| {
                Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records, path.display().to_string()))
    }
}

/// Image format implied by a file extension, if any.
fn format_for_path(path: &Path) -> Option<ImageFileFormat> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" => Some(ImageFileFormat::Png),
        "jpg" | "jpeg" => Some(ImageFileFormat::Jpeg),
        _ => None,
    }
}

/// Recursively list PNG/JPEG files under `root` as one labeled class.
///
/// Records come out sorted lexicographically by path and unassigned to any
/// split. Non-image files are skipped. An empty result is an error: a
/// dataset of zero images is always a mistake upstream.
pub fn ingest_directory(
    root: &Path,
    label: &str,
    generator: &str,
    year: Option<u32>,
) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Manifest(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut files: Vec<(PathBuf, ImageFileFormat)> = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| Error::Manifest(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        if let Some(format) = format_for_path(entry.path()) {
            files.push((entry.path().to_path_buf(), format));
        }
    }
    if files.is_empty() {
        return Err(Error::Manifest(format!(
            "no PNG/JPEG files under {}",
            root.display()
        )));
    }
    // Walk order is filesystem dependent; path order is the contract.
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let records = files
        .into_iter()
        .map(|(path, format)| ManifestRecord {
            path,
            label: label.to_string(),
            generator: generator.to_string(),
            year,
            format,
            split: Split::Unassigned,
        })
        .collect();
    Ok(DatasetManifest::new(
        records,
        vec![label.to_string()],
        format!("ingested from {}", root.display()),
    ))
}

/// Largest-remainder apportionment of `total` items over `ratios`.
///
/// Leftover units go to the largest fractional remainders; exact ties fall
/// back to position order, so the earlier bucket wins.
fn apportion(total: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..total - assigned {
        counts[order[i % ratios.len()]] += 1;
    }
    counts
}

/// Result of [`split_manifest`]: the new manifest plus non-fatal warnings.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

/// Key a deterministic RNG on the seed, a stage index and a domain tag.
fn stage_rng(seed: u64, stage: u64, tag: &[u8; 8]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stage.to_le_bytes());
    key[16..24].copy_from_slice(tag);
    ChaCha8Rng::from_seed(key)
}

/// Assign unassigned records to train/val/test per class.
///
/// Records that already carry a split keep it. Each class's unassigned
/// records are shuffled by the seed and partitioned with largest-remainder
/// rounding, so 100 records at (0.6, 0.2, 0.2) give exactly 60/20/20.
/// Classes too small to reach every requested split produce a warning and
/// fill in priority order train, val, test.
pub fn split_manifest(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitOutcome> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Parameter("split ratios must lie in [0, 1]".into()));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split ratios {r:?} must sum to 1"
        )));
    }

    let mut out = manifest.clone();
    let mut warnings = Vec::new();
    let requested = r.iter().filter(|&&x| x > 0.0).count();

    for (class_idx, label) in manifest.label_space.iter().enumerate() {
        let mut pool: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, rec)| rec.label == *label && rec.split == Split::Unassigned)
            .map(|(i, _)| i)
            .collect();
        if pool.is_empty() {
            continue;
        }
        if pool.len() < requested {
            warnings.push(format!(
                "class {label:?} has only {} unassigned record(s) for {requested} splits; \
                 filling train, then val, then test",
                pool.len()
            ));
        }
        let mut rng = stage_rng(seed, class_idx as u64, b"SID_SPL1");
        pool.shuffle(&mut rng);
        let counts = apportion(pool.len(), &r);
        let mut cursor = 0;
        for (split, count) in Split::ASSIGNED.into_iter().zip(counts) {
            for &record_idx in &pool[cursor..cursor + count] {
                out.records[record_idx].split = split;
            }
            cursor += count;
        }
    }
    Ok(SplitOutcome {
        manifest: out,
        warnings,
    })
}

/// Cap one class at `cap` records with a seeded uniform sample.
///
/// When the class is already split, sampling is stratified: each split
/// keeps its largest-remainder share of the cap, so per-split proportions
/// move by at most one record. Surviving records keep manifest order.
/// Classes at or below the cap come back untouched, which makes the
/// operation idempotent.
pub fn undersample(
    manifest: &DatasetManifest,
    class: &str,
    cap: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if cap == 0 {
        return Err(Error::Parameter("undersample cap must be at least 1".into()));
    }
    if !manifest.label_space.iter().any(|l| l == class) {
        return Err(Error::Manifest(format!(
            "unknown class {class:?}; label space is {:?}",
            manifest.label_space
        )));
    }
    let class_indices: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == class)
        .map(|(i, _)| i)
        .collect();
    if class_indices.len() <= cap {
        return Ok(manifest.clone());
    }

    // Group by split; a fully unassigned class is one stratum.
    let mut strata: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
    for &i in &class_indices {
        strata.entry(manifest.records[i].split).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let ratios: Vec<f64> = sizes.iter().map(|&s| s as f64 / total as f64).collect();
    let keep_counts = apportion(cap, &ratios);

    let mut keep: BTreeSet<usize> = BTreeSet::new();
    for (stratum_idx, (indices, quota)) in strata.values().zip(keep_counts).enumerate() {
        let mut shuffled = indices.clone();
        let mut rng = stage_rng(seed, stratum_idx as u64, b"SID_CAP1");
        shuffled.shuffle(&mut rng);
        keep.extend(shuffled.into_iter().take(quota));
    }

    let records = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.label != class || keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    Ok(DatasetManifest {
        records,
        label_space: manifest.label_space.clone(),
        provenance: format!("{} [capped {class} at {cap}]", manifest.provenance),
    })
}

/// A problem found by [`validate_manifest`]. Violations are data, not
/// errors: callers decide whether any of them is fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingFile { path: PathBuf },
    DuplicatePath { path: PathBuf },
    UnknownLabel { path: PathBuf, label: String },
    /// A class has no records in an assigned split even though the
    /// manifest has been split.
    EmptySplit { label: String, split: String },
    ImplausibleYear { path: PathBuf, year: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingFile { path } => {
                write!(f, "missing file: {}", path.display())
            }
            Violation::DuplicatePath { path } => {
                write!(f, "duplicate path: {}", path.display())
            }
            Violation::UnknownLabel { path, label } => {
                write!(f, "unknown label {label:?} on {}", path.display())
            }
            Violation::EmptySplit { label, split } => {
                write!(f, "class {label:?} has no records in split {split}")
            }
            Violation::ImplausibleYear { path, year } => {
                write!(f, "implausible year {year} on {}", path.display())
            }
        }
    }
}

/// Check a manifest for broken invariants without failing.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &manifest.records {
        if !seen.insert(&r.path) {
            violations.push(Violation::DuplicatePath {
                path: r.path.clone(),
            });
        }
        if !manifest.label_space.contains(&r.label) {
            violations.push(Violation::UnknownLabel {
                path: r.path.clone(),
                label: r.label.clone(),
            });
        }
        if let Some(year) = r.year {
            if year < MIN_YEAR {
                violations.push(Violation::ImplausibleYear {
                    path: r.path.clone(),
                    year,
                });
            }
        }
        if !r.path.exists() {
            violations.push(Violation::MissingFile {
                path: r.path.clone(),
            });
        }
    }
    // Split coverage only matters once something has been assigned.
    if manifest.records.iter().any(|r| r.split != Split::Unassigned) {
        for label in &manifest.label_space {
            for split in Split::ASSIGNED {
                let any = manifest
                    .records
                    .iter()
                    .any(|r| r.label == *label && r.split == split);
                if !any {
                    violations.push(Violation::EmptySplit {
                        label: label.clone(),
                        split: split.name().to_string(),
                    });
                }
            }
        }
    }
    violations
}
