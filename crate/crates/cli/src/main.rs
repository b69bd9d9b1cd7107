//! `sid`: command-line front end for the synthetic-image detection
//! toolkit. Subcommands wire manifests, backends and the evaluation
//! protocols together; every artifact embeds the effective config and its
//! hash so results are reproducible byte for byte.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::effective_config;

/// Failure with the exit code dictated by its class: 2 for usage (clap
/// handles those), 3 for config and validation problems, 1 for internal
/// faults.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 3,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 3,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 1,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<sid_core::Error> for CliError {
    fn from(e: sid_core::Error) -> Self {
        use sid_core::Error;
        let kind = match &e {
            Error::Decode { .. } | Error::UnsupportedFormat(_) => "decode",
            Error::Parameter(_) | Error::EmptyPairs { .. } | Error::DimensionMismatch { .. } => {
                "parameter"
            }
            Error::DegenerateClass(_) | Error::Undefined(_) => "data",
            Error::BackendLoad { .. } | Error::Model(_) | Error::Version { .. } => "backend",
            Error::Contract(_) => "contract",
            Error::Manifest(_) | Error::Json(_) => "manifest",
            Error::Io { .. } => "io",
        };
        CliError {
            exit_code: 3,
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sid",
    version,
    about = "Benchmarking and inference toolkit for synthetic-image detectors"
)]
struct Cli {
    /// Worker threads for evaluation; also settable via SID_WORKERS.
    /// Defaults to the available parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every config-driven experiment command.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in template to start from (susy-train, table3, table5,
    /// table6, table7, table8-resize).
    #[arg(long)]
    preset: Option<String>,
    /// Experiment seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output artifact path; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective config and exit without running.
    #[arg(long)]
    dump_config: bool,
}

impl ConfigArgs {
    /// Flag overrides as a JSON overlay document. `--out` lands in the
    /// config field named by `out_key`; commands whose main product is not
    /// the JSON artifact (alter, train) point it elsewhere.
    fn overrides(&self, out_key: &str) -> Map<String, Value> {
        let mut map = Map::new();
        if let Some(seed) = self.seed {
            map.insert("seed".into(), json!(seed));
        }
        if let Some(out) = &self.out {
            map.insert(out_key.into(), json!(out));
        }
        map
    }

    /// Resolve the effective config, honoring --dump-config: `None` means
    /// the config was printed and the command should exit successfully.
    fn resolve_or_dump(
        &self,
        out_key: &str,
        extra: Map<String, Value>,
    ) -> Result<Option<(config::ExperimentConfig, Value)>, CliError> {
        let mut overrides = self.overrides(out_key);
        overrides.extend(extra);
        let (config, canonical) = effective_config(
            self.preset.as_deref(),
            self.config.as_deref(),
            Value::Object(overrides),
        )?;
        if self.dump_config {
            println!(
                "{}",
                serde_json::to_string_pretty(&canonical)
                    .map_err(|e| CliError::internal(e.to_string()))?
            );
            return Ok(None);
        }
        Ok(Some((config, canonical)))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Manifest utilities: ingest, split, undersample, validate.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Select the top-contrast patches of one image.
    Patchify {
        #[arg(long)]
        image: PathBuf,
        /// Patches to keep.
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for the selected patches as PNGs.
        #[arg(long)]
        patch_dir: Option<PathBuf>,
    },
    /// Apply a seeded augmentation policy to one image.
    Alter {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        image: PathBuf,
        /// Image index keying the augmentation draws.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Where the altered image is written (PNG).
        #[arg(long)]
        out_image: PathBuf,
    },
    /// Train the reference model on a manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate one backend on one manifest.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Manifest to evaluate; overrides the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Backend descriptor JSON file; overrides the config.
        #[arg(long)]
        backend: Option<PathBuf>,
        /// center, voted or resized; overrides the config.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Models-by-datasets recall grid with averages.
    Cross {
        #[command(flatten)]
        config: ConfigArgs,
        /// CSV output path; overrides the config.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep the voting threshold k from 1 to n.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// CSV output path; overrides the config.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare whole-image resizing against the center crop.
    ResizeStudy {
        #[command(flatten)]
        config: ConfigArgs,
        /// Manifest to evaluate; overrides the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Backend descriptor JSON file; overrides the config.
        #[arg(long)]
        backend: Option<PathBuf>,
    },
    /// Convert measured energy into CO2 emissions.
    Co2 {
        /// Energy drawn, in kWh.
        #[arg(long)]
        kwh: f64,
        /// Grid intensity in kg CO2 per kWh; falls back to the config's
        /// co2_intensity_kg_per_kwh.
        #[arg(long)]
        intensity: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Walk a directory of images into a JSONL manifest.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        /// Class label for every record.
        #[arg(long)]
        label: String,
        /// Generating model name; "none" for authentic imagery.
        #[arg(long, default_value = "none")]
        generator: String,
        /// Release year of the generator.
        #[arg(long)]
        year: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/val/test splits per class.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        train: f64,
        #[arg(long, default_value_t = 0.2)]
        val: f64,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cap one class by stratified random undersampling.
    Undersample {
        #[arg(long)]
        manifest: PathBuf,
        /// Class label to cap.
        #[arg(long)]
        class: String,
        /// Maximum records kept; defaults to the standard cap.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report manifest violations; exits 3 when any are found.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Worker-count resolution: flag, then SID_WORKERS, then automatic.
fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("SID_WORKERS") {
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                CliError::config(format!("SID_WORKERS={raw:?} is not a thread count"))
            })?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn path_value(path: &Option<PathBuf>, key: &str, map: &mut Map<String, Value>) {
    if let Some(p) = path {
        map.insert(key.into(), json!(p));
    }
}

/// Read a backend descriptor file into a config overlay value.
fn backend_overlay(
    path: &Option<PathBuf>,
    map: &mut Map<String, Value>,
) -> Result<(), CliError> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("reading backend {}: {e}", path.display()))
        })?;
        let descriptor: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!("backend {} is not valid JSON: {e}", path.display()))
        })?;
        map.insert("backend".into(), descriptor);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Dataset(cmd) => match cmd {
            DatasetCommand::Ingest {
                dir,
                label,
                generator,
                year,
                out,
            } => commands::dataset_ingest(&dir, &label, &generator, year, &out),
            DatasetCommand::Split {
                manifest,
                train,
                val,
                test,
                seed,
                out,
            } => commands::dataset_split(&manifest, (train, val, test), seed, &out),
            DatasetCommand::Undersample {
                manifest,
                class,
                cap,
                seed,
                out,
            } => commands::dataset_undersample(&manifest, &class, cap, seed, &out),
            DatasetCommand::Validate { manifest, out } => {
                commands::dataset_validate(&manifest, out.as_deref())
            }
        },
        Command::Patchify {
            image,
            count,
            out,
            patch_dir,
        } => commands::patchify(&image, count, out.as_deref(), patch_dir.as_deref()),
        Command::Alter {
            config,
            image,
            index,
            out_image,
        } => {
            let Some((cfg, canonical)) = config.resolve_or_dump("report_output", Map::new())? else {
                return Ok(());
            };
            commands::alter(&cfg, &canonical, &image, index, &out_image)
        }
        Command::Train { config } => {
            let Some((cfg, canonical)) = config.resolve_or_dump("output", Map::new())? else {
                return Ok(());
            };
            commands::run_train(&cfg, &canonical)
        }
        Command::Eval {
            config,
            manifest,
            backend,
            mode,
        } => {
            let mut extra = Map::new();
            path_value(&manifest, "manifest", &mut extra);
            backend_overlay(&backend, &mut extra)?;
            if let Some(mode) = mode {
                extra.insert("mode".into(), json!(mode));
            }
            let Some((cfg, canonical)) = config.resolve_or_dump("output", extra)? else {
                return Ok(());
            };
            commands::run_eval(&cfg, &canonical)
        }
        Command::Cross { config, csv } => {
            let mut extra = Map::new();
            path_value(&csv, "csv_output", &mut extra);
            let Some((cfg, canonical)) = config.resolve_or_dump("output", extra)? else {
                return Ok(());
            };
            commands::run_cross(&cfg, &canonical)
        }
        Command::Sweep { config, csv } => {
            let mut extra = Map::new();
            path_value(&csv, "csv_output", &mut extra);
            let Some((cfg, canonical)) = config.resolve_or_dump("output", extra)? else {
                return Ok(());
            };
            commands::run_sweep(&cfg, &canonical)
        }
        Command::ResizeStudy {
            config,
            manifest,
            backend,
        } => {
            let mut extra = Map::new();
            path_value(&manifest, "manifest", &mut extra);
            backend_overlay(&backend, &mut extra)?;
            let Some((cfg, canonical)) = config.resolve_or_dump("output", extra)? else {
                return Ok(());
            };
            commands::run_resize_study(&cfg, &canonical)
        }
        Command::Co2 {
            kwh,
            intensity,
            config,
            out,
        } => {
            let (cfg, _) = effective_config(None, config.as_deref(), json!({}))?;
            commands::run_co2(&cfg, kwh, intensity, out.as_deref())
        }
    }
}

fn fail(e: CliError) -> ! {
    eprintln!(
        "{}",
        json!({ "error": { "kind": e.kind, "message": e.message } })
    );
    std::process::exit(e.exit_code);
}

fn main() {
    let cli = Cli::parse();
    match resolve_workers(cli.workers) {
        Ok(Some(n)) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(None) => {}
        Err(e) => fail(e),
    }
    if let Err(e) = run(cli) {
        fail(e);
    }
}
