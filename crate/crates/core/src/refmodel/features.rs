//! Hand-crafted texture features for the reference classifier.

use serde::{Deserialize, Serialize};

use crate::imageops::{compute_glcm, to_grayscale, GlcmParams, GrayBuffer, RgbBuffer, DEFAULT_OFFSETS};
use crate::{Real, Result};

/// Length of [`FeatureVector`]: four co-occurrence statistics per direction,
/// then Laplacian variance, blockiness, luma mean and luma deviation.
pub const FEATURE_DIM: usize = 20;

/// Feature names in vector order, for reports and debugging.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "glcm_contrast_0",
    "glcm_homogeneity_0",
    "glcm_energy_0",
    "glcm_correlation_0",
    "glcm_contrast_45",
    "glcm_homogeneity_45",
    "glcm_energy_45",
    "glcm_correlation_45",
    "glcm_contrast_90",
    "glcm_homogeneity_90",
    "glcm_energy_90",
    "glcm_correlation_90",
    "glcm_contrast_135",
    "glcm_homogeneity_135",
    "glcm_energy_135",
    "glcm_correlation_135",
    "laplacian_variance",
    "blockiness",
    "luma_mean",
    "luma_std",
];

/// Fixed-length feature vector extracted from one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Extract the 20 texture features from a patch.
///
/// Same pixels, same features: every step is deterministic arithmetic.
/// Patches too small to host a co-occurrence pair are rejected.
pub fn extract_features<T: Real>(patch: &RgbBuffer) -> Result<FeatureVector<T>> {
    let gray = to_grayscale(patch);
    let mut values = Vec::with_capacity(FEATURE_DIM);

    for &offset in DEFAULT_OFFSETS.iter() {
        let params = GlcmParams {
            levels: 32,
            offsets: vec![offset],
            symmetric: true,
        };
        let m = compute_glcm::<T>(&gray, &params)?;
        values.push(m.contrast());
        values.push(m.homogeneity());
        values.push(m.energy());
        values.push(m.correlation());
    }

    values.push(laplacian_variance(&gray));
    values.push(blockiness(&gray));
    let (mean, std) = luma_stats(&gray);
    values.push(mean);
    values.push(std);
    Ok(FeatureVector { values })
}

/// Population variance of the 4-neighbor Laplacian over interior pixels.
/// Constant patches score 0; sharp noise scores high, blurred noise lower.
fn laplacian_variance<T: Real>(gray: &GrayBuffer) -> T {
    let (w, h) = (gray.width(), gray.height());
    if w < 3 || h < 3 {
        return T::zero();
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut n = 0u64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = gray.value(x - 1, y) as f64
                + gray.value(x + 1, y) as f64
                + gray.value(x, y - 1) as f64
                + gray.value(x, y + 1) as f64
                - 4.0 * gray.value(x, y) as f64;
            sum += r;
            sum_sq += r * r;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    T::from_f64_lossy(sum_sq / n as f64 - mean * mean)
}

/// Mean absolute luma step across 8-pixel grid boundaries minus the mean
/// step elsewhere. Compression block artifacts push this up; smooth or
/// uniformly textured content sits near 0.
fn blockiness<T: Real>(gray: &GrayBuffer) -> T {
    let (w, h) = (gray.width(), gray.height());
    let mut on = (0.0f64, 0u64);
    let mut off = (0.0f64, 0u64);
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let d = (gray.value(x + 1, y) as f64 - gray.value(x, y) as f64).abs();
            let t = if (x + 1) % 8 == 0 { &mut on } else { &mut off };
            t.0 += d;
            t.1 += 1;
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            let d = (gray.value(x, y + 1) as f64 - gray.value(x, y) as f64).abs();
            let t = if (y + 1) % 8 == 0 { &mut on } else { &mut off };
            t.0 += d;
            t.1 += 1;
        }
    }
    if on.1 == 0 || off.1 == 0 {
        return T::zero();
    }
    T::from_f64_lossy(on.0 / on.1 as f64 - off.0 / off.1 as f64)
}

fn luma_stats<T: Real>(gray: &GrayBuffer) -> (T, T) {
    let n = gray.data().len() as f64;
    let sum: f64 = gray.data().iter().map(|&v| v as f64).sum();
    let mean = sum / n;
    let var: f64 = gray
        .data()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (T::from_f64_lossy(mean), T::from_f64_lossy(var.sqrt()))
}
