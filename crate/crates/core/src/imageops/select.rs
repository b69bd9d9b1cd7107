//! Contrast-ranked patch selection.

use serde::{Deserialize, Serialize};

use super::{compute_glcm, extract_patch, to_grayscale, GlcmParams, Patch, RgbBuffer};
use crate::{Error, Result};

/// Grid and ranking knobs for [`select_top_patches`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSelectParams {
    /// Patches to keep (ranking prefix).
    pub count: usize,
    /// Square patch side in pixels.
    pub side: u32,
    /// Grid step between candidate origins.
    pub stride: u32,
    /// Hard cap on candidates; the stride doubles until the grid fits.
    pub max_candidates: usize,
    /// Texture statistic configuration used for ranking.
    pub glcm: GlcmParams,
}

impl Default for PatchSelectParams {
    fn default() -> Self {
        PatchSelectParams {
            count: 5,
            side: super::PATCH_SIDE,
            stride: super::PATCH_SIDE / 2,
            max_candidates: 64,
            glcm: GlcmParams::default(),
        }
    }
}

fn axis_origins(extent: u32, side: u32, stride: u32) -> Vec<u32> {
    if extent <= side {
        return vec![0];
    }
    let last = extent - side;
    let mut origins = Vec::new();
    let mut x = 0;
    while x < last {
        origins.push(x);
        x += stride;
    }
    // The trailing window is always a candidate, aligned to the far edge.
    origins.push(last);
    origins
}

/// Candidate origins for a `width` x `height` image: a stride-spaced grid
/// plus the edge-aligned last row and column. An image not larger than the
/// patch on both axes yields the single origin (0, 0). If the grid exceeds
/// `max_candidates` the stride doubles until it fits.
pub fn candidate_origins(
    width: u32,
    height: u32,
    side: u32,
    stride: u32,
    max_candidates: usize,
) -> Vec<(u32, u32)> {
    assert!(stride > 0 && max_candidates >= 4);
    let mut step = stride;
    loop {
        let xs = axis_origins(width, side, step);
        let ys = axis_origins(height, side, step);
        if xs.len() * ys.len() <= max_candidates {
            let mut grid = Vec::with_capacity(xs.len() * ys.len());
            for &y in &ys {
                for &x in &xs {
                    grid.push((x, y));
                }
            }
            return grid;
        }
        step *= 2;
    }
}

/// Rank all candidate patches by co-occurrence contrast and keep the best
/// `count`, ties broken by origin in row-major order.
///
/// Returns `min(count, candidates)` patches; a source smaller than the patch
/// side on both axes produces exactly one reflect-padded center patch.
/// Re-running on the same input is byte-identical.
pub fn select_top_patches(
    img: &RgbBuffer,
    params: &PatchSelectParams,
    source_id: &str,
) -> Result<Vec<Patch>> {
    if params.count == 0 {
        return Err(Error::Parameter("patch count must be positive".into()));
    }
    if params.stride == 0 {
        return Err(Error::Parameter("patch stride must be positive".into()));
    }
    let origins = candidate_origins(
        img.width(),
        img.height(),
        params.side,
        params.stride,
        params.max_candidates,
    );

    let mut ranked: Vec<(f64, Patch)> = Vec::with_capacity(origins.len());
    for (x, y) in origins {
        let patch = extract_patch(img, x, y, params.side, source_id);
        let gray = to_grayscale(&patch.pixels);
        let contrast = compute_glcm::<f64>(&gray, &params.glcm)?.contrast();
        ranked.push((contrast, patch));
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.origin_y.cmp(&b.1.origin_y))
            .then(a.1.origin_x.cmp(&b.1.origin_x))
    });
    ranked.truncate(params.count);
    Ok(ranked.into_iter().map(|(_, p)| p).collect())
}
