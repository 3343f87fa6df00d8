//! Classification-as-bandit environments: the agent sees a feature vector,
//! guesses a class, and earns reward 1 on a correct guess and 0 otherwise.

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub enum ContextualSource {
    /// Gaussian clusters: one mean per class, unit isotropic noise.
    Synthetic { means: Vec<Vec<f64>> },
    /// A fixed labelled dataset, sampled uniformly with replacement.
    Dataset {
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct ContextualBanditEnv {
    pub n_classes: usize,
    pub dim: usize,
    pub source: ContextualSource,
}

impl ContextualBanditEnv {
    pub fn from_dataset(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::EmptyInput("contextual dataset"));
        }
        let dim = features[0].len();
        let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;
        Ok(Self {
            n_classes,
            dim,
            source: ContextualSource::Dataset { features, labels },
        })
    }

    /// Draws one (context, label) pair.
    pub fn sample(&self, rng: &mut RngStream) -> (Vec<f64>, usize) {
        match &self.source {
            ContextualSource::Synthetic { means } => {
                let class = rng.index(self.n_classes);
                let x = means[class]
                    .iter()
                    .map(|&m| m + rng.standard_normal())
                    .collect();
                (x, class)
            }
            ContextualSource::Dataset { features, labels } => {
                let i = rng.index(features.len());
                (features[i].clone(), labels[i])
            }
        }
    }

    /// Reward for guessing `action` on a context with the given label.
    pub fn reward(&self, action: usize, label: usize) -> f64 {
        if action == label {
            1.0
        } else {
            0.0
        }
    }
}

/// Builds a synthetic cluster environment: class means drawn once from the
/// seed and scaled to norm `separation`, contexts drawn as mean + N(0, I).
pub fn synth_cluster_env(
    n_classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<ContextualBanditEnv> {
    if n_classes < 2 || dim < 1 || !(separation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need n_classes >= 2, dim >= 1, separation >= 0; got ({n_classes}, {dim}, {separation})"
        )));
    }
    let mut rng = RngStream::new(seed);
    let means = (0..n_classes)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            g.iter().map(|x| separation * x / norm).collect()
        })
        .collect();
    Ok(ContextualBanditEnv {
        n_classes,
        dim,
        source: ContextualSource::Synthetic { means },
    })
}
