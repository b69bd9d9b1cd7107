//! Grey-level co-occurrence matrices and the texture statistics read off them.

use serde::{Deserialize, Serialize};

use super::GrayBuffer;
use crate::{Error, Real, Result};

/// Distance-1 offsets covering 0, 45, 90 and 135 degrees once symmetric
/// counting folds each direction with its opposite.
pub const DEFAULT_OFFSETS: [(i32, i32); 4] = [(1, 0), (1, -1), (0, 1), (1, 1)];

/// How pixel pairs are binned and counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlcmParams {
    /// Number of grey levels; pixel v lands in bin `v * levels / 256`.
    pub levels: usize,
    /// Pixel-pair displacements (dx right, dy down), accumulated into one matrix.
    pub offsets: Vec<(i32, i32)>,
    /// Count each pair in both directions.
    pub symmetric: bool,
}

impl Default for GlcmParams {
    fn default() -> Self {
        GlcmParams {
            levels: 32,
            offsets: DEFAULT_OFFSETS.to_vec(),
            symmetric: true,
        }
    }
}

/// Quantize an 8-bit value into one of `levels` equal-width bins.
#[inline]
pub fn quantize_level(v: u8, levels: usize) -> usize {
    v as usize * levels / 256
}

/// Normalized co-occurrence matrix; cells sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix<T> {
    levels: usize,
    cells: Vec<T>,
}

impl<T: Real> GlcmMatrix<T> {
    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.cells[i * self.levels + j]
    }

    /// Row-major cell slice, length `levels * levels`.
    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    /// Sum of cell * (i - j)^2; zero exactly when all mass is diagonal.
    pub fn contrast(&self) -> T {
        self.weighted_sum(|i, j| {
            let d = i as f64 - j as f64;
            d * d
        })
    }

    /// Sum of cell / (1 + (i - j)^2).
    pub fn homogeneity(&self) -> T {
        self.weighted_sum(|i, j| {
            let d = i as f64 - j as f64;
            1.0 / (1.0 + d * d)
        })
    }

    /// Sum of squared cells.
    pub fn energy(&self) -> T {
        let mut acc = T::zero();
        for &c in &self.cells {
            acc += c * c;
        }
        acc
    }

    /// Pearson correlation of the (i, j) pair distribution. Degenerate
    /// marginals (a single occupied level) report 1, the fully correlated
    /// limit, so constant patches stay finite.
    pub fn correlation(&self) -> T {
        let l = self.levels;
        let mut mu_i = T::zero();
        let mut mu_j = T::zero();
        for i in 0..l {
            for j in 0..l {
                let c = self.get(i, j);
                mu_i += c * T::from_f64_lossy(i as f64);
                mu_j += c * T::from_f64_lossy(j as f64);
            }
        }
        let mut var_i = T::zero();
        let mut var_j = T::zero();
        let mut cov = T::zero();
        for i in 0..l {
            for j in 0..l {
                let c = self.get(i, j);
                let di = T::from_f64_lossy(i as f64) - mu_i;
                let dj = T::from_f64_lossy(j as f64) - mu_j;
                var_i += c * di * di;
                var_j += c * dj * dj;
                cov += c * di * dj;
            }
        }
        let denom = (var_i * var_j).sqrt();
        if denom == T::zero() {
            T::one()
        } else {
            cov / denom
        }
    }

    fn weighted_sum(&self, weight: impl Fn(usize, usize) -> f64) -> T {
        let mut acc = T::zero();
        for i in 0..self.levels {
            for j in 0..self.levels {
                acc += self.get(i, j) * T::from_f64_lossy(weight(i, j));
            }
        }
        acc
    }
}

/// Count quantized pixel pairs at each offset and normalize to a distribution.
///
/// All offsets are accumulated into one matrix. With `symmetric` each pair
/// also counts in reverse, making the matrix exactly symmetric. Every offset
/// must produce at least one in-bounds pair.
pub fn compute_glcm<T: Real>(gray: &GrayBuffer, params: &GlcmParams) -> Result<GlcmMatrix<T>> {
    let l = params.levels;
    if !(2..=256).contains(&l) {
        return Err(Error::Parameter(format!("GLCM levels {l} not in 2..=256")));
    }
    if params.offsets.is_empty() {
        return Err(Error::Parameter("GLCM needs at least one offset".into()));
    }
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let mut counts = vec![0u64; l * l];
    let mut total = 0u64;

    for &(dx, dy) in &params.offsets {
        if dx == 0 && dy == 0 {
            return Err(Error::Parameter("GLCM offset (0,0) is invalid".into()));
        }
        let mut pairs_here = 0u64;
        let (dx64, dy64) = (dx as i64, dy as i64);
        for y in 0..h {
            let ny = y + dy64;
            if ny < 0 || ny >= h {
                continue;
            }
            for x in 0..w {
                let nx = x + dx64;
                if nx < 0 || nx >= w {
                    continue;
                }
                let a = quantize_level(gray.value(x as u32, y as u32), l);
                let b = quantize_level(gray.value(nx as u32, ny as u32), l);
                counts[a * l + b] += 1;
                pairs_here += 1;
                if params.symmetric {
                    counts[b * l + a] += 1;
                }
            }
        }
        if pairs_here == 0 {
            return Err(Error::EmptyPairs {
                dx,
                dy,
                width: gray.width(),
                height: gray.height(),
            });
        }
        total += if params.symmetric { 2 * pairs_here } else { pairs_here };
    }

    let t = T::from_f64_lossy(total as f64);
    let cells = counts
        .into_iter()
        .map(|c| T::from_f64_lossy(c as f64) / t)
        .collect();
    Ok(GlcmMatrix { levels: l, cells })
}
