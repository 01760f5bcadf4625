use std::path::Path;

use ndarray::Array2;

use super::{DatasetSchema, LabelTransform, TabularDataset};
use crate::error::{Error, Result};

/// A dataset read from disk, with the number of rows skipped because a
/// value could not be parsed.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: TabularDataset,
    pub rejected_rows: usize,
}

/// Read one delimited file with a header row. After `drop_columns` are
/// removed the last column is the label and the rest must match the schema's
/// feature count.
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Loaded> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let rejected = read_into(path, schema, &mut features, &mut labels)?;
    finish(features, labels, schema, rejected)
}

/// Read and concatenate every file listed in `schema.files`, resolved
/// against `dir`.
pub fn load_from_dir(dir: &Path, schema: &DatasetSchema) -> Result<Loaded> {
    if schema.files.is_empty() {
        return Err(Error::Config(format!("schema '{}' lists no files", schema.name)));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rejected = 0;
    for f in &schema.files {
        rejected += read_into(&dir.join(f), schema, &mut features, &mut labels)?;
    }
    finish(features, labels, schema, rejected)
}

fn finish(
    features: Vec<f64>,
    labels: Vec<usize>,
    schema: &DatasetSchema,
    rejected_rows: usize,
) -> Result<Loaded> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((labels.len(), schema.n_features()), features)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(Loaded {
        dataset: TabularDataset::new(x, labels, schema.clone())?,
        rejected_rows,
    })
}

fn read_into(
    path: &Path,
    schema: &DatasetSchema,
    features: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) -> Result<usize> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let delim = u8::try_from(schema.delimiter)
        .map_err(|_| Error::Config("delimiter must be a single-byte character".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_matches('"').to_string())
        .collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !schema.drop_columns.iter().any(|d| d == &header[i]))
        .collect();
    let expected = schema.n_features() + 1;
    if keep.len() != expected {
        return Err(Error::ColumnMismatch {
            expected,
            found: keep.len(),
        });
    }

    let d = schema.n_features();
    let mut rejected = 0;
    let mut row = Vec::with_capacity(d);
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            rejected += 1;
            continue;
        }
        row.clear();
        let mut ok = true;
        for &c in &keep[..d] {
            match record[c].trim_matches('"').parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        let label = if ok {
            parse_label(record[keep[d]].trim_matches('"'), schema)
        } else {
            None
        };
        match label {
            Some(y) => {
                features.extend_from_slice(&row);
                labels.push(y);
            }
            None => rejected += 1,
        }
    }
    Ok(rejected)
}

fn parse_label(raw: &str, schema: &DatasetSchema) -> Option<usize> {
    match schema.label_transform {
        LabelTransform::WineBinarize => {
            let q: f64 = raw.parse().ok()?;
            if !q.is_finite() {
                None
            } else if q <= 5.0 {
                Some(0)
            } else if q >= 6.0 {
                Some(1)
            } else {
                None
            }
        }
        LabelTransform::None if !schema.class_names.is_empty() => {
            schema.class_names.iter().position(|c| c == raw)
        }
        LabelTransform::None => raw.parse::<usize>().ok().filter(|&y| y < schema.n_classes),
    }
}
