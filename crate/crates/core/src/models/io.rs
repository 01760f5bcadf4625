use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BootstrapEnsemble, Classifier, LinearClassifier, MlpClassifier, RandomForest};
use crate::data::{DatasetSchema, SplitSpec, Standardizer};
use crate::error::{Error, Result};
use crate::uncertainty::EpistemicSource;

/// One of the three trained model families.
///
/// The model used for prediction and explanation can differ from the one
/// used for uncertainty: logistic regression explains with the full-data fit
/// and measures uncertainty with its bootstrap ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Logistic {
        model: LinearClassifier,
        bootstrap: BootstrapEnsemble,
    },
    RandomForest {
        forest: RandomForest,
    },
    Mlp {
        network: MlpClassifier,
    },
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Logistic { .. } => "lr",
            Self::RandomForest { .. } => "rf",
            Self::Mlp { .. } => "mlp",
        }
    }

    /// Model whose predictions are explained.
    pub fn predictor(&self) -> &dyn Classifier {
        match self {
            Self::Logistic { model, .. } => model,
            Self::RandomForest { forest } => forest,
            Self::Mlp { network } => network,
        }
    }

    /// Model whose member disagreement gives the native epistemic score.
    pub fn uncertainty_model(&self) -> &dyn Classifier {
        match self {
            Self::Logistic { bootstrap, .. } => bootstrap,
            Self::RandomForest { forest } => forest,
            Self::Mlp { network } => network,
        }
    }

    pub fn epistemic_source(&self) -> EpistemicSource {
        match self {
            Self::Logistic { .. } => EpistemicSource::Bootstrap,
            Self::RandomForest { .. } => EpistemicSource::TreeVariance,
            Self::Mlp { .. } => EpistemicSource::McDropout,
        }
    }

    pub fn forest(&self) -> Option<&RandomForest> {
        match self {
            Self::RandomForest { forest } => Some(forest),
            _ => None,
        }
    }
}

/// Self-describing model file: architecture and parameters, the schema and
/// standardizer the model expects, and every seed used in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub schema: DatasetSchema,
    pub standardizer: Standardizer,
    pub split: SplitSpec,
    pub seed: u64,
    pub model: TrainedModel,
}

impl ModelFile {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format_version != Self::FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file)
    }
}
