//! Pluggable patch classifiers.
//!
//! Three kinds exist behind one `classify_patch` call:
//! - `reference`: the built-in texture-feature model trained by this crate;
//! - `external`: an ONNX classifier head executed by [`onnx`];
//! - `stub`: deterministic rules for wiring tests, a pure function of the
//!   patch bytes so results never depend on scheduling or worker count.
//!
//! Every prediction is checked against the same contract before it leaves
//! this module: one probability per declared class, all finite and
//! non-negative, summing to one. Violations surface as [`Error::Contract`]
//! rather than silently skewed reports.

pub mod onnx;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imageops::{resize_bilinear, to_grayscale, RgbBuffer};
use crate::refmodel::{extract_features, RefModel};
use crate::{Error, Real, Result};

use onnx::{OnnxModel, Tensor};

/// Tolerance for the sum-to-one contract check.
const SUM_TOLERANCE: f64 = 1e-6;

/// Class probabilities in the order of the backend's label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution<T> {
    pub probabilities: Vec<T>,
}

impl<T: Real> PredictionDistribution<T> {
    pub fn new(probabilities: Vec<T>) -> Self {
        PredictionDistribution { probabilities }
    }

    /// Index of the most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probabilities.iter().enumerate().skip(1) {
            if *p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    pub fn top(&self) -> (usize, T) {
        let i = self.argmax();
        (i, self.probabilities[i])
    }

    /// Enforce the backend contract for a `classes`-way distribution.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.probabilities.len() != classes {
            return Err(Error::Contract(format!(
                "expected {classes} class probabilities, backend produced {}",
                self.probabilities.len()
            )));
        }
        let mut sum = 0.0f64;
        for (i, p) in self.probabilities.iter().enumerate() {
            let p = p.to_f64_lossy();
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Contract(format!(
                    "probability {i} is {p}, outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Contract(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Memory layout of the tensor handed to an external model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorLayout {
    /// Channels first: `[1, 3, H, W]`.
    Chw,
    /// Channels last: `[1, H, W, 3]`.
    Hwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    Rgb,
    Bgr,
}

/// How a patch becomes the input tensor of an external model.
///
/// Each channel value is `(raw / 255 - mean[c]) / std[c]`. Patches whose
/// side differs from `height`/`width` are bilinearly resized first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub height: u32,
    pub width: u32,
    #[serde(default = "default_layout")]
    pub layout: TensorLayout,
    #[serde(default = "default_order")]
    pub channel_order: ChannelOrder,
    #[serde(default = "zeros3")]
    pub mean: [f64; 3],
    #[serde(default = "ones3")]
    pub std: [f64; 3],
}

fn default_layout() -> TensorLayout {
    TensorLayout::Chw
}

fn default_order() -> ChannelOrder {
    ChannelOrder::Rgb
}

fn zeros3() -> [f64; 3] {
    [0.0; 3]
}

fn ones3() -> [f64; 3] {
    [1.0; 3]
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            height: crate::imageops::PATCH_SIDE,
            width: crate::imageops::PATCH_SIDE,
            layout: TensorLayout::Chw,
            channel_order: ChannelOrder::Rgb,
            mean: zeros3(),
            std: ones3(),
        }
    }
}

impl InputSpec {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Parameter("input spec dims must be positive".into()));
        }
        if self.std.iter().any(|s| s.abs() < 1e-12) {
            return Err(Error::Parameter("input spec std must be non-zero".into()));
        }
        Ok(())
    }
}

/// Deterministic test classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StubRule {
    /// The same distribution for every patch.
    Fixed { probabilities: Vec<f64> },
    /// Pick by mean patch luma: `below` when the mean is under `threshold`,
    /// `at_or_above` otherwise.
    LumaThreshold {
        threshold: f64,
        below: Vec<f64>,
        at_or_above: Vec<f64>,
    },
}

/// Serializable description of which classifier to load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    Reference {
        model_path: PathBuf,
    },
    External {
        model_path: PathBuf,
        label_space: Vec<String>,
        #[serde(default)]
        input: InputSpec,
        /// `None` lets the output decide: values already forming a
        /// distribution are taken as-is, anything else goes through softmax.
        #[serde(default)]
        outputs_probabilities: Option<bool>,
    },
    Stub {
        label_space: Vec<String>,
        rule: StubRule,
    },
}

/// A loaded classifier, ready to score patches.
#[derive(Debug, Clone)]
pub enum Backend {
    Reference(RefModel<f64>),
    External(ExternalBackend),
    Stub(StubBackend),
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    model: OnnxModel,
    input: InputSpec,
    label_space: Vec<String>,
    outputs_probabilities: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    label_space: Vec<String>,
    rule: StubRule,
}

impl Backend {
    pub fn label_space(&self) -> &[String] {
        match self {
            Backend::Reference(m) => &m.label_space,
            Backend::External(b) => &b.label_space,
            Backend::Stub(b) => &b.label_space,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Backend::Reference(_) => "reference",
            Backend::External(_) => "external",
            Backend::Stub(_) => "stub",
        }
    }

    /// Score one patch. The returned distribution always satisfies
    /// [`PredictionDistribution::validate`] for this backend's label space.
    pub fn classify_patch(&self, patch: &RgbBuffer) -> Result<PredictionDistribution<f64>> {
        let pred = match self {
            Backend::Reference(model) => {
                let fv = extract_features::<f64>(patch)?;
                model.predict(&fv)?
            }
            Backend::External(b) => b.classify(patch)?,
            Backend::Stub(b) => b.classify(patch),
        };
        pred.validate(self.label_space().len())?;
        Ok(pred)
    }
}

impl ExternalBackend {
    fn classify(&self, patch: &RgbBuffer) -> Result<PredictionDistribution<f64>> {
        let resized;
        let src = if patch.width() == self.input.width && patch.height() == self.input.height {
            patch
        } else {
            resized = resize_bilinear(patch, self.input.width, self.input.height)?;
            &resized
        };
        let out = self.model.run(build_input(src, &self.input))?;
        let raw: Vec<f64> = match &out.data {
            onnx::TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            onnx::TensorData::I64(_) => {
                return Err(Error::Contract("model produced an integer output".into()))
            }
        };
        // Accept [C], [1, C] or [1, C, 1, 1] shaped outputs.
        let trailing: usize = out.dims.iter().filter(|&&d| d != 1).product::<usize>().max(1);
        if trailing != raw.len() {
            return Err(Error::Contract(format!(
                "output shape {:?} is not a single distribution",
                out.dims
            )));
        }
        let already_probs = match self.outputs_probabilities {
            Some(flag) => flag,
            None => {
                let sum: f64 = raw.iter().sum();
                raw.iter().all(|&p| (-1e-6..=1.0 + 1e-6).contains(&p))
                    && (sum - 1.0).abs() < 1e-3
            }
        };
        let probabilities = if already_probs {
            // Clean up float32 rounding so the contract check is exact.
            let sum: f64 = raw.iter().sum();
            if sum <= 0.0 || !sum.is_finite() {
                return Err(Error::Contract(format!(
                    "declared probability output sums to {sum}"
                )));
            }
            raw.iter().map(|&p| p.max(0.0) / sum).collect()
        } else {
            softmax64(&raw)
        };
        Ok(PredictionDistribution::new(probabilities))
    }
}

impl StubBackend {
    fn classify(&self, patch: &RgbBuffer) -> PredictionDistribution<f64> {
        let probabilities = match &self.rule {
            StubRule::Fixed { probabilities } => probabilities.clone(),
            StubRule::LumaThreshold {
                threshold,
                below,
                at_or_above,
            } => {
                if mean_luma(patch) < *threshold {
                    below.clone()
                } else {
                    at_or_above.clone()
                }
            }
        };
        PredictionDistribution::new(probabilities)
    }
}

/// Mean of the luma plane, used by [`StubRule::LumaThreshold`].
pub fn mean_luma(patch: &RgbBuffer) -> f64 {
    let gray = to_grayscale(patch);
    let sum: u64 = gray.data().iter().map(|&v| v as u64).sum();
    sum as f64 / gray.data().len() as f64
}

fn softmax64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn build_input(patch: &RgbBuffer, spec: &InputSpec) -> Tensor {
    let (w, h) = (patch.width() as usize, patch.height() as usize);
    let mut data = vec![0.0f32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let px = patch.pixel(x as u32, y as u32);
            for c in 0..3 {
                let raw = match spec.channel_order {
                    ChannelOrder::Rgb => px[c],
                    ChannelOrder::Bgr => px[2 - c],
                };
                let v = ((raw as f64 / 255.0 - spec.mean[c]) / spec.std[c]) as f32;
                let idx = match spec.layout {
                    TensorLayout::Chw => c * h * w + y * w + x,
                    TensorLayout::Hwc => (y * w + x) * 3 + c,
                };
                data[idx] = v;
            }
        }
    }
    let dims = match spec.layout {
        TensorLayout::Chw => vec![1, 3, h, w],
        TensorLayout::Hwc => vec![1, h, w, 3],
    };
    Tensor::f32(dims, data)
}

fn check_label_space(labels: &[String]) -> Result<()> {
    if labels.len() < 2 {
        return Err(Error::Parameter(
            "label space needs at least two classes".into(),
        ));
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::Parameter(format!("duplicate label {l:?}")));
        }
    }
    Ok(())
}

fn check_stub_distribution(probs: &[f64], classes: usize, what: &str) -> Result<()> {
    PredictionDistribution::new(probs.to_vec())
        .validate(classes)
        .map_err(|e| Error::Parameter(format!("stub {what} distribution: {e}")))
}

/// Instantiate the classifier a descriptor points at.
///
/// Missing or malformed model files fail here, naming the offending path;
/// `classify_patch` afterwards only fails on contract violations.
pub fn load_backend(desc: &BackendDescriptor) -> Result<Backend> {
    match desc {
        BackendDescriptor::Reference { model_path } => {
            Ok(Backend::Reference(RefModel::load(model_path)?))
        }
        BackendDescriptor::External {
            model_path,
            label_space,
            input,
            outputs_probabilities,
        } => {
            check_label_space(label_space)?;
            input.validate()?;
            let bytes = read_model_bytes(model_path)?;
            let model = OnnxModel::from_bytes(&bytes).map_err(|e| Error::BackendLoad {
                path: model_path.display().to_string(),
                detail: e.to_string(),
            })?;
            if let Some(classes) = model.declared_classes() {
                if classes != label_space.len() {
                    return Err(Error::BackendLoad {
                        path: model_path.display().to_string(),
                        detail: format!(
                            "model outputs {classes} classes but the label space has {}",
                            label_space.len()
                        ),
                    });
                }
            }
            Ok(Backend::External(ExternalBackend {
                model,
                input: input.clone(),
                label_space: label_space.clone(),
                outputs_probabilities: *outputs_probabilities,
            }))
        }
        BackendDescriptor::Stub { label_space, rule } => {
            check_label_space(label_space)?;
            match rule {
                StubRule::Fixed { probabilities } => {
                    check_stub_distribution(probabilities, label_space.len(), "fixed")?;
                }
                StubRule::LumaThreshold {
                    threshold,
                    below,
                    at_or_above,
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::Parameter("stub threshold must be finite".into()));
                    }
                    check_stub_distribution(below, label_space.len(), "below")?;
                    check_stub_distribution(at_or_above, label_space.len(), "at_or_above")?;
                }
            }
            Ok(Backend::Stub(StubBackend {
                label_space: label_space.clone(),
                rule: rule.clone(),
            }))
        }
    }
}

fn read_model_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::BackendLoad {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}
