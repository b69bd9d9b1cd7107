//! Pixel alterations used both as training augmentation and as robustness
//! test transforms.
//!
//! Every alteration does its intermediate math in `f64` and writes back with
//! round-half-up, so an identity-parameter pass (gamma 1, brightness and
//! contrast 0, flip applied twice) is byte-exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imageops::{decode_image, reflect_index, round_u8, ImageFileFormat, RgbBuffer};
use crate::{Error, Result};

/// An alteration family plus the parameter ranges it samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlterationSpec {
    /// Encode to baseline JPEG at a sampled quality and decode back.
    JpegCompress { quality: (u8, u8) },
    /// Separable Gaussian blur; kernel radius is `ceil(3 sigma)`.
    GaussianBlur { sigma: (f64, f64) },
    /// Generalized-Gaussian blur `exp(-(d / sigma)^beta)` with multiplicative
    /// per-cell kernel noise, renormalized after the noise is applied.
    AdvancedBlur {
        beta: (f64, f64),
        sigma: (f64, f64),
        noise: (f64, f64),
    },
    /// `out = ((in/255 - 0.5) * (1 + contrast) + 0.5 + brightness) * 255`.
    BrightnessContrast {
        brightness: (f64, f64),
        contrast: (f64, f64),
    },
    /// `out = 255 * (in/255)^gamma`.
    Gamma { gamma: (f64, f64) },
    HorizontalFlip,
}

impl AlterationSpec {
    /// Default recompression range, quality 40 to 100.
    pub fn jpeg() -> Self {
        AlterationSpec::JpegCompress { quality: (40, 100) }
    }

    /// Default Gaussian blur, sigma 0.2 to 3.0.
    pub fn gaussian_blur() -> Self {
        AlterationSpec::GaussianBlur { sigma: (0.2, 3.0) }
    }

    /// Default generalized blur: beta 0.5 to 8, sigma 0.2 to 1.0, kernel
    /// noise 0.75 to 1.25.
    pub fn advanced_blur() -> Self {
        AlterationSpec::AdvancedBlur {
            beta: (0.5, 8.0),
            sigma: (0.2, 1.0),
            noise: (0.75, 1.25),
        }
    }

    /// Default brightness/contrast jitter, both limited to +-0.2.
    pub fn brightness_contrast() -> Self {
        AlterationSpec::BrightnessContrast {
            brightness: (-0.2, 0.2),
            contrast: (-0.2, 0.2),
        }
    }

    /// Default gamma jitter, 0.8 to 1.2.
    pub fn gamma() -> Self {
        AlterationSpec::Gamma { gamma: (0.8, 1.2) }
    }

    pub fn horizontal_flip() -> Self {
        AlterationSpec::HorizontalFlip
    }

    /// Reject ranges that are inverted or outside the legal parameter space.
    pub fn validate(&self) -> Result<()> {
        fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Parameter(format!("{name} range ({lo}, {hi}) is invalid")));
            }
            Ok(())
        }
        match *self {
            AlterationSpec::JpegCompress { quality: (lo, hi) } => {
                if lo < 1 || hi > 100 || lo > hi {
                    return Err(Error::Parameter(format!(
                        "JPEG quality range ({lo}, {hi}) not within 1..=100"
                    )));
                }
            }
            AlterationSpec::GaussianBlur { sigma } => {
                ordered("sigma", sigma)?;
                if sigma.0 <= 0.0 {
                    return Err(Error::Parameter("blur sigma must be positive".into()));
                }
            }
            AlterationSpec::AdvancedBlur { beta, sigma, noise } => {
                ordered("beta", beta)?;
                ordered("sigma", sigma)?;
                ordered("noise", noise)?;
                if beta.0 <= 0.0 || sigma.0 <= 0.0 || noise.0 <= 0.0 {
                    return Err(Error::Parameter(
                        "advanced blur parameters must be positive".into(),
                    ));
                }
            }
            AlterationSpec::BrightnessContrast { brightness, contrast } => {
                ordered("brightness", brightness)?;
                ordered("contrast", contrast)?;
                for (name, (lo, hi)) in [("brightness", brightness), ("contrast", contrast)] {
                    if lo < -1.0 || hi > 1.0 {
                        return Err(Error::Parameter(format!(
                            "{name} range ({lo}, {hi}) not within -1..=1"
                        )));
                    }
                }
            }
            AlterationSpec::Gamma { gamma } => {
                ordered("gamma", gamma)?;
                if gamma.0 <= 0.0 {
                    return Err(Error::Parameter("gamma must be positive".into()));
                }
            }
            AlterationSpec::HorizontalFlip => {}
        }
        Ok(())
    }
}

/// Concrete parameters drawn from an [`AlterationSpec`]; applying the same
/// values to the same pixels is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AppliedAlteration {
    JpegCompress { quality: u8 },
    GaussianBlur { sigma: f64 },
    AdvancedBlur {
        beta: f64,
        sigma: f64,
        /// Per-cell kernel noise, row-major, one value per kernel cell.
        noise: Vec<f64>,
    },
    BrightnessContrast { brightness: f64, contrast: f64 },
    Gamma { gamma: f64 },
    HorizontalFlip,
}

/// Blur kernel radius for a given sigma.
fn blur_radius(sigma: f64) -> i64 {
    (3.0 * sigma).ceil() as i64
}

/// Kernel cell count for an advanced blur at the given sigma.
pub fn advanced_kernel_len(sigma: f64) -> usize {
    let side = 2 * blur_radius(sigma) + 1;
    (side * side) as usize
}

/// Check sampled parameters against the spec they claim to come from, then
/// apply them. Mismatched kinds or out-of-range values are parameter errors.
pub fn apply_alteration(
    img: &RgbBuffer,
    spec: &AlterationSpec,
    params: &AppliedAlteration,
) -> Result<RgbBuffer> {
    spec.validate()?;
    let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    match (spec, params) {
        (AlterationSpec::JpegCompress { quality: range }, AppliedAlteration::JpegCompress { quality }) => {
            if *quality < range.0 || *quality > range.1 {
                return Err(Error::Parameter(format!(
                    "quality {quality} outside sampled range {range:?}"
                )));
            }
            jpeg_compress(img, *quality)
        }
        (AlterationSpec::GaussianBlur { sigma: range }, AppliedAlteration::GaussianBlur { sigma }) => {
            if !in_range(*sigma, *range) {
                return Err(Error::Parameter(format!(
                    "sigma {sigma} outside sampled range {range:?}"
                )));
            }
            Ok(gaussian_blur(img, *sigma))
        }
        (
            AlterationSpec::AdvancedBlur { beta: br, sigma: sr, noise: nr },
            AppliedAlteration::AdvancedBlur { beta, sigma, noise },
        ) => {
            if !in_range(*beta, *br) || !in_range(*sigma, *sr) {
                return Err(Error::Parameter(
                    "advanced blur parameters outside sampled range".into(),
                ));
            }
            if noise.len() != advanced_kernel_len(*sigma) {
                return Err(Error::Parameter(format!(
                    "advanced blur noise has {} cells, kernel needs {}",
                    noise.len(),
                    advanced_kernel_len(*sigma)
                )));
            }
            if noise.iter().any(|&n| !in_range(n, *nr)) {
                return Err(Error::Parameter("kernel noise outside sampled range".into()));
            }
            advanced_blur(img, *beta, *sigma, noise)
        }
        (
            AlterationSpec::BrightnessContrast { brightness: br, contrast: cr },
            AppliedAlteration::BrightnessContrast { brightness, contrast },
        ) => {
            if !in_range(*brightness, *br) || !in_range(*contrast, *cr) {
                return Err(Error::Parameter(
                    "brightness/contrast outside sampled range".into(),
                ));
            }
            Ok(brightness_contrast(img, *brightness, *contrast))
        }
        (AlterationSpec::Gamma { gamma: range }, AppliedAlteration::Gamma { gamma }) => {
            if !in_range(*gamma, *range) {
                return Err(Error::Parameter(format!(
                    "gamma {gamma} outside sampled range {range:?}"
                )));
            }
            Ok(gamma_map(img, *gamma))
        }
        (AlterationSpec::HorizontalFlip, AppliedAlteration::HorizontalFlip) => {
            Ok(horizontal_flip(img))
        }
        (spec, params) => Err(Error::Parameter(format!(
            "sampled parameters {params:?} do not match spec {spec:?}"
        ))),
    }
}

/// Round-trip through a baseline JPEG encoder at the given quality.
/// Dimensions are preserved; pixels change.
pub fn jpeg_compress(img: &RgbBuffer, quality: u8) -> Result<RgbBuffer> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Parameter(format!("JPEG quality {quality} not in 1..=100")));
    }
    let mut encoded = Vec::new();
    let enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut encoded, quality);
    image::ImageEncoder::write_image(
        enc,
        img.data(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Parameter(format!("JPEG encode failed: {e}")))?;
    let out = decode_image(&encoded, Some(ImageFileFormat::Jpeg))?;
    debug_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = blur_radius(sigma);
    let mut k: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with mirrored borders. Constant images pass
/// through unchanged; output extrema never exceed input extrema.
pub fn gaussian_blur(img: &RgbBuffer, sigma: f64) -> RgbBuffer {
    let kernel = gaussian_kernel(sigma);
    let r = blur_radius(sigma);
    let (w, h) = (img.width(), img.height());

    // Horizontal pass in f64 to keep the vertical pass exact.
    let mut mid = vec![0.0f64; w as usize * h as usize * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = reflect_index(x as i64 + ki as i64 - r, w);
                let px = img.pixel(sx, y);
                for c in 0..3 {
                    acc[c] += kv * px[c] as f64;
                }
            }
            let base = (y as usize * w as usize + x as usize) * 3;
            mid[base..base + 3].copy_from_slice(&acc);
        }
    }
    let mut out = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = reflect_index(y as i64 + ki as i64 - r, h);
                let base = (sy as usize * w as usize + x as usize) * 3;
                for c in 0..3 {
                    acc[c] += kv * mid[base + c];
                }
            }
            out.set_pixel(x, y, [round_u8(acc[0]), round_u8(acc[1]), round_u8(acc[2])]);
        }
    }
    out
}

fn advanced_kernel(beta: f64, sigma: f64, noise: &[f64]) -> Vec<f64> {
    let r = blur_radius(sigma);
    let side = (2 * r + 1) as usize;
    debug_assert_eq!(noise.len(), side * side);
    let mut k = Vec::with_capacity(side * side);
    for y in -r..=r {
        for x in -r..=r {
            let d = ((x * x + y * y) as f64).sqrt();
            k.push((-(d / sigma).powf(beta)).exp());
        }
    }
    for (kv, &n) in k.iter_mut().zip(noise) {
        *kv *= n;
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Generalized-Gaussian blur with noisy kernel cells, mirrored borders.
pub fn advanced_blur(img: &RgbBuffer, beta: f64, sigma: f64, noise: &[f64]) -> Result<RgbBuffer> {
    if noise.len() != advanced_kernel_len(sigma) {
        return Err(Error::Parameter(format!(
            "noise has {} cells, kernel needs {}",
            noise.len(),
            advanced_kernel_len(sigma)
        )));
    }
    let kernel = advanced_kernel(beta, sigma, noise);
    let r = blur_radius(sigma);
    let side = (2 * r + 1) as usize;
    let (w, h) = (img.width(), img.height());
    let mut out = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for ky in 0..side {
                let sy = reflect_index(y as i64 + ky as i64 - r, h);
                for kx in 0..side {
                    let sx = reflect_index(x as i64 + kx as i64 - r, w);
                    let kv = kernel[ky * side + kx];
                    let px = img.pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += kv * px[c] as f64;
                    }
                }
            }
            out.set_pixel(x, y, [round_u8(acc[0]), round_u8(acc[1]), round_u8(acc[2])]);
        }
    }
    Ok(out)
}

/// Linear brightness/contrast around mid-grey, clamped to the pixel range.
pub fn brightness_contrast(img: &RgbBuffer, brightness: f64, contrast: f64) -> RgbBuffer {
    map_pixels(img, |v| {
        ((v / 255.0 - 0.5) * (1.0 + contrast) + 0.5 + brightness) * 255.0
    })
}

/// Power-law remap of the normalized pixel value.
pub fn gamma_map(img: &RgbBuffer, gamma: f64) -> RgbBuffer {
    map_pixels(img, |v| 255.0 * (v / 255.0).powf(gamma))
}

/// Mirror columns; applying twice restores the input bytes.
pub fn horizontal_flip(img: &RgbBuffer) -> RgbBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(x, y, img.pixel(w - 1 - x, y));
        }
    }
    out
}

fn map_pixels(img: &RgbBuffer, f: impl Fn(f64) -> f64) -> RgbBuffer {
    // Channel values repeat heavily; precompute the 256-entry map.
    let lut: Vec<u8> = (0..=255u16).map(|v| round_u8(f(v as f64))).collect();
    let mut out = img.clone();
    for b in out.data_mut() {
        *b = lut[*b as usize];
    }
    out
}

/// Ordered augmentation steps with independent activation draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationStep {
    pub spec: AlterationSpec,
    /// Activation probability in [0, 1]; parameters are sampled only when
    /// the step activates.
    pub probability: f64,
}

/// Augmentation recipe: steps applied in order, seeded as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub steps: Vec<AugmentationStep>,
    pub seed: u64,
}

/// Training-time augmentation recipe for the robust protocol: a coin-flip
/// mirror first, then each photometric alteration at probability 0.2.
pub fn susy_policy(seed: u64) -> AugmentationPolicy {
    let p = |spec, probability| AugmentationStep { spec, probability };
    AugmentationPolicy {
        steps: vec![
            p(AlterationSpec::horizontal_flip(), 0.5),
            p(AlterationSpec::jpeg(), 0.2),
            p(AlterationSpec::gaussian_blur(), 0.2),
            p(AlterationSpec::advanced_blur(), 0.2),
            p(AlterationSpec::brightness_contrast(), 0.2),
            p(AlterationSpec::gamma(), 0.2),
        ],
        seed,
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        for step in &self.steps {
            step.spec.validate()?;
            if !(0.0..=1.0).contains(&step.probability) {
                return Err(Error::Parameter(format!(
                    "step probability {} not in 0..=1",
                    step.probability
                )));
            }
        }
        Ok(())
    }
}

/// Stream for one (seed, image, step) triple. Keying every step separately
/// makes the sampled plan independent of evaluation order, so parallel and
/// serial runs agree.
fn step_rng(seed: u64, image_index: u64, step_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&image_index.to_le_bytes());
    key[16..24].copy_from_slice(&step_index.to_le_bytes());
    key[24..32].copy_from_slice(b"SID_AUG1");
    ChaCha8Rng::from_seed(key)
}

/// Decide, for one image, which steps activate and with which parameters.
/// Pure function of `(policy.seed, image_index)`.
pub fn sample_plan(policy: &AugmentationPolicy, image_index: u64) -> Result<Vec<AppliedAlteration>> {
    policy.validate()?;
    let mut plan = Vec::new();
    for (step_index, step) in policy.steps.iter().enumerate() {
        let mut rng = step_rng(policy.seed, image_index, step_index as u64);
        if rng.gen::<f64>() >= step.probability {
            continue;
        }
        let applied = match step.spec {
            AlterationSpec::JpegCompress { quality: (lo, hi) } => {
                AppliedAlteration::JpegCompress { quality: rng.gen_range(lo..=hi) }
            }
            AlterationSpec::GaussianBlur { sigma: (lo, hi) } => {
                AppliedAlteration::GaussianBlur { sigma: rng.gen_range(lo..=hi) }
            }
            AlterationSpec::AdvancedBlur { beta, sigma, noise } => {
                let beta = rng.gen_range(beta.0..=beta.1);
                let sigma = rng.gen_range(sigma.0..=sigma.1);
                let cells = advanced_kernel_len(sigma);
                let noise = (0..cells).map(|_| rng.gen_range(noise.0..=noise.1)).collect();
                AppliedAlteration::AdvancedBlur { beta, sigma, noise }
            }
            AlterationSpec::BrightnessContrast { brightness, contrast } => {
                AppliedAlteration::BrightnessContrast {
                    brightness: rng.gen_range(brightness.0..=brightness.1),
                    contrast: rng.gen_range(contrast.0..=contrast.1),
                }
            }
            AlterationSpec::Gamma { gamma: (lo, hi) } => {
                AppliedAlteration::Gamma { gamma: rng.gen_range(lo..=hi) }
            }
            AlterationSpec::HorizontalFlip => AppliedAlteration::HorizontalFlip,
        };
        plan.push(applied);
    }
    Ok(plan)
}

/// Apply the sampled plan for `image_index` and return the transformed image
/// together with the exact alterations applied, in order.
pub fn augment(
    img: &RgbBuffer,
    policy: &AugmentationPolicy,
    image_index: u64,
) -> Result<(RgbBuffer, Vec<AppliedAlteration>)> {
    let plan = sample_plan(policy, image_index)?;
    let mut out = img.clone();
    for applied in &plan {
        out = match applied {
            AppliedAlteration::JpegCompress { quality } => jpeg_compress(&out, *quality)?,
            AppliedAlteration::GaussianBlur { sigma } => gaussian_blur(&out, *sigma),
            AppliedAlteration::AdvancedBlur { beta, sigma, noise } => {
                advanced_blur(&out, *beta, *sigma, noise)?
            }
            AppliedAlteration::BrightnessContrast { brightness, contrast } => {
                brightness_contrast(&out, *brightness, *contrast)
            }
            AppliedAlteration::Gamma { gamma } => gamma_map(&out, *gamma),
            AppliedAlteration::HorizontalFlip => horizontal_flip(&out),
        };
    }
    Ok((out, plan))
}
