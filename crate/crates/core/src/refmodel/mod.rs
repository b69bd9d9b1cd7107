//! Reference classifier: hand-crafted texture features into multinomial
//! logistic regression. Small enough to train in seconds, strong enough to
//! exercise every evaluation protocol end to end.

mod features;
mod train;

pub use features::{extract_features, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use train::{
    loss_and_gradient, train, EarlyStopping, EpochStats, FeatureSet, Gradient, LinearSoftmax,
    Monitor, StopDecision, TrainConfig, TrainReport,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::PredictionDistribution;
use crate::{Error, Real, Result};

/// Bump when the serialized model layout changes.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Per-dimension affine feature normalization, fitted on the training split
/// only. Scales are strictly positive; constant dimensions get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Normalization<T> {
    /// Fit mean and population deviation per dimension.
    pub fn fit<'a>(features: impl Iterator<Item = &'a FeatureVector<T>> + Clone) -> Self
    where
        T: 'a,
    {
        let dim = features.clone().next().map_or(0, |fv| fv.dim());
        let n = T::from_f64_lossy(features.clone().count() as f64);
        let mut mean = vec![T::zero(); dim];
        for fv in features.clone() {
            for (m, v) in mean.iter_mut().zip(&fv.values) {
                *m += *v / n;
            }
        }
        let mut scale = vec![T::zero(); dim];
        for fv in features {
            for ((s, v), m) in scale.iter_mut().zip(&fv.values).zip(&mean) {
                let d = *v - *m;
                *s += d * d / n;
            }
        }
        let floor = T::from_f64_lossy(1e-12);
        for s in &mut scale {
            *s = s.sqrt();
            if *s < floor {
                *s = T::one();
            }
        }
        Normalization { mean, scale }
    }

    /// Z-score a feature vector.
    pub fn apply(&self, fv: &FeatureVector<T>) -> Vec<T> {
        debug_assert_eq!(fv.dim(), self.mean.len());
        fv.values
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (*v - *m) / *s)
            .collect()
    }
}

/// Trained reference model: label space, normalization and linear layer.
///
/// Persisted as versioned JSON; loading checks the version and internal
/// shape coherence before anything is classified with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefModel<T> {
    pub version: u32,
    pub label_space: Vec<String>,
    pub normalization: Normalization<T>,
    pub linear: LinearSoftmax<T>,
}

impl<T: Real + Serialize + serde::de::DeserializeOwned> RefModel<T> {
    /// Class distribution for one feature vector.
    pub fn predict(&self, fv: &FeatureVector<T>) -> Result<PredictionDistribution<T>> {
        if fv.dim() != self.linear.dim {
            return Err(Error::DimensionMismatch {
                expected: self.linear.dim,
                got: fv.dim(),
            });
        }
        let x = self.normalization.apply(fv);
        Ok(PredictionDistribution {
            probabilities: self.linear.probabilities(&x),
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: RefModel<T> = serde_json::from_slice(bytes)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(format!("writing model {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading model {}", path.display()), e))?;
        Self::from_json(&bytes)
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_SCHEMA_VERSION {
            return Err(Error::Version {
                found: self.version.to_string(),
                expected: MODEL_SCHEMA_VERSION.to_string(),
            });
        }
        let c = self.label_space.len();
        let d = self.linear.dim;
        if self.linear.classes != c
            || self.linear.weights.len() != c * d
            || self.linear.bias.len() != c
            || self.normalization.mean.len() != d
            || self.normalization.scale.len() != d
        {
            return Err(Error::Parameter("model shapes are incoherent".into()));
        }
        if self.normalization.scale.iter().any(|s| *s <= T::zero()) {
            return Err(Error::Parameter("normalization scales must be positive".into()));
        }
        Ok(())
    }
}
