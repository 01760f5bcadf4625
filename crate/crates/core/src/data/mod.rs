//! Dataset ingestion, splitting, standardization and synthetic generators.

mod load;
mod split;
mod standardize;
mod synth;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_dataset, load_from_dir, Loaded};
pub use split::{split, SplitSpec, Splits};
pub use standardize::{fit_standardizer, Standardizer};
pub use synth::{gaussian_blobs, synth_linear_dataset, xor_dataset, SyntheticLinear};

/// How raw label values map to class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelTransform {
    /// Labels are class names (see `class_names`) or integer indices.
    #[default]
    None,
    /// Numeric quality score: `<= 5` is class 0, `>= 6` is class 1.
    WineBinarize,
}

/// Column layout and label space of a tabular dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    pub feature_names: Vec<String>,
    pub n_classes: usize,
    #[serde(default)]
    pub label_transform: LabelTransform,
    /// Class names in index order, for datasets with string labels.
    #[serde(default)]
    pub class_names: Vec<String>,
    /// Header names of ID-like columns dropped on ingestion.
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// Files (relative to the data directory) concatenated in order.
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl DatasetSchema {
    pub fn new(name: impl Into<String>, feature_names: Vec<String>, n_classes: usize) -> Result<Self> {
        let schema = Self {
            name: name.into(),
            feature_names,
            n_classes,
            label_transform: LabelTransform::None,
            class_names: Vec::new(),
            drop_columns: Vec::new(),
            files: Vec::new(),
            delimiter: ',',
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema with generated feature names `x0..x{d-1}`.
    pub fn anonymous(name: impl Into<String>, n_features: usize, n_classes: usize) -> Result<Self> {
        Self::new(name, (0..n_features).map(|i| format!("x{i}")).collect(), n_classes)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(Error::Config("schema needs at least one feature".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("schema needs at least two classes".into()));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.n_classes {
            return Err(Error::Config(format!(
                "{} class names given for {} classes",
                self.class_names.len(),
                self.n_classes
            )));
        }
        if self.label_transform == LabelTransform::WineBinarize && self.n_classes != 2 {
            return Err(Error::Config("wine_binarize requires n_classes = 2".into()));
        }
        Ok(())
    }

    /// Parse a schema from its TOML config text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

/// Names of the dataset schemas shipped with the crate.
pub const BUILTIN_DATASETS: [&str; 4] = ["wine", "bean", "rice", "ecoli"];

/// Environment variable naming the directory that holds dataset CSVs.
pub const DATA_DIR_ENV: &str = "EPIGATE_DATA_DIR";

/// Schema shipped in `configs/datasets/<name>.toml`.
pub fn builtin_schema(name: &str) -> Result<DatasetSchema> {
    let text = match name {
        "wine" => include_str!("../../../../configs/datasets/wine.toml"),
        "bean" => include_str!("../../../../configs/datasets/bean.toml"),
        "rice" => include_str!("../../../../configs/datasets/rice.toml"),
        "ecoli" => include_str!("../../../../configs/datasets/ecoli.toml"),
        other => return Err(Error::Config(format!("unknown dataset '{other}'"))),
    };
    DatasetSchema::from_toml(text)
}

/// `$EPIGATE_DATA_DIR`, or `./data` when unset.
pub fn data_dir() -> std::path::PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::PathBuf::from("data"))
}

/// Load a built-in dataset from [`data_dir`].
pub fn load_builtin(name: &str) -> Result<Loaded> {
    load_from_dir(&data_dir(), &builtin_schema(name)?)
}

/// Feature matrix with integer labels. Features are finite and labels are
/// in `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub schema: DatasetSchema,
}

impl TabularDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, schema: DatasetSchema) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.ncols() != schema.n_features() {
            return Err(Error::ColumnMismatch {
                expected: schema.n_features(),
                found: features.ncols(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features contain NaN or Inf".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= schema.n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside 0..{}",
                schema.n_classes
            )));
        }
        Ok(Self {
            features,
            labels,
            schema,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Copy with features replaced (same labels and schema).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.schema.clone())
    }

    /// Number of samples per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes()];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

/// Population (divide by n) standard deviation of every column.
pub fn column_std(x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows().max(1) as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n;
            (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Median of every column (mean of the two middle values for even counts).
pub fn column_median(x: &Array2<f64>) -> Vec<f64> {
    x.columns()
        .into_iter()
        .map(|c| median(&c.to_vec()).unwrap_or(0.0))
        .collect()
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dataset_rejects_out_of_range_labels() {
        let schema = DatasetSchema::anonymous("t", 1, 2).unwrap();
        let err = TabularDataset::new(array![[1.0], [2.0]], vec![0, 2], schema).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn dataset_rejects_nan() {
        let schema = DatasetSchema::anonymous("t", 1, 2).unwrap();
        assert!(TabularDataset::new(array![[f64::NAN]], vec![0], schema).is_err());
    }

    #[test]
    fn schema_invariants() {
        assert!(DatasetSchema::anonymous("t", 0, 2).is_err());
        assert!(DatasetSchema::anonymous("t", 3, 1).is_err());
        let text = r#"
            name = "wine"
            feature_names = ["a", "b"]
            n_classes = 3
            label_transform = "wine_binarize"
        "#;
        assert!(DatasetSchema::from_toml(text).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[1.0, 5.0]), Some(3.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }
}
