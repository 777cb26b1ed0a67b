//! Supervised dataset ingestion and preprocessing.
//!
//! Datasets arrive as numeric-featured CSV with one label column. Labels
//! (integers or strings) are mapped to dense indices in first-appearance
//! order, which keeps ingestion deterministic and file-order stable. Missing
//! or non-finite values are rejected, not imputed.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::IglError;
use crate::rng::rng_from_seed;
use crate::Result;

/// An N x d feature matrix with integer labels in [0, K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    /// Row-major N x d.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_features: usize,
    pub num_classes: usize,
    pub column_names: Option<Vec<String>>,
    /// Original label strings, indexed by dense label.
    pub label_names: Vec<String>,
}

impl SupervisedDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let num_features = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * num_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_features {
                return Err(IglError::Dataset(format!(
                    "row {i} has {} features, expected {num_features}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        let ds = Self {
            features,
            labels,
            num_features,
            num_classes,
            column_names: None,
            label_names: (0..num_classes).map(|c| c.to_string()).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(IglError::Dataset("empty dataset".into()));
        }
        if self.num_classes < 2 {
            return Err(IglError::Dataset(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.features.len() != self.labels.len() * self.num_features {
            return Err(IglError::Dataset("feature matrix shape mismatch".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(IglError::Dataset(format!(
                "label {bad} out of range for K={}",
                self.num_classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(IglError::Dataset("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    fn select_rows(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            num_features: self.num_features,
            num_classes: self.num_classes,
            column_names: self.column_names.clone(),
            label_names: self.label_names.clone(),
        }
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

/// CSV parsing options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// Load a CSV file into a validated dataset.
///
/// Every non-label cell must parse as a finite number; errors name the
/// offending row and column. Label values are mapped to dense indices
/// 0..K-1 in order of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &LabelColumn,
    options: &CsvOptions,
) -> Result<SupervisedDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_path(path)
        .map_err(|e| IglError::Dataset(format!("cannot open {}: {e}", path.display())))?;

    let headers: Option<Vec<String>> = if options.has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => match &headers {
            Some(h) => h.iter().position(|c| c == name).ok_or_else(|| {
                IglError::Dataset(format!("label column '{name}' not found in header"))
            })?,
            None => {
                return Err(IglError::Dataset(
                    "label column by name requires has_header=true".into(),
                ))
            }
        },
    };

    let column_name = |idx: usize| -> String {
        headers
            .as_ref()
            .and_then(|h| h.get(idx).cloned())
            .unwrap_or_else(|| format!("column {idx}"))
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_map: HashMap<String, usize> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if label_idx >= record.len() {
            return Err(IglError::Ingestion {
                row: row_idx,
                column: format!("column {label_idx}"),
                message: format!("label index {label_idx} out of range"),
            });
        }
        let mut row = Vec::with_capacity(record.len().saturating_sub(1));
        for (col_idx, cell) in record.iter().enumerate() {
            if col_idx == label_idx {
                let key = cell.trim().to_owned();
                let next = label_names.len();
                let dense = *label_map.entry(key.clone()).or_insert_with(|| {
                    label_names.push(key);
                    next
                });
                labels.push(dense);
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| IglError::Ingestion {
                row: row_idx,
                column: column_name(col_idx),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(IglError::Ingestion {
                    row: row_idx,
                    column: column_name(col_idx),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(IglError::Dataset(format!("{} is empty", path.display())));
    }

    let feature_names: Option<Vec<String>> = headers.map(|h| {
        h.iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, c)| c.clone())
            .collect()
    });

    let num_classes = label_names.len();
    let mut ds = SupervisedDataset::new(rows, labels, num_classes)?;
    ds.column_names = feature_names;
    ds.label_names = label_names;
    Ok(ds)
}

/// Per-column affine transform recorded by [`standardize`], applicable to
/// held-out data and invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population (N-divisor) standard deviations; 0 marks a constant column.
    pub stddevs: Vec<f64>,
}

impl Standardization {
    /// z = (x - mean) / stddev, with constant columns mapped to zero.
    pub fn apply(&self, ds: &SupervisedDataset) -> Result<SupervisedDataset> {
        if ds.num_features != self.means.len() {
            return Err(IglError::DimensionMismatch {
                what: "standardization",
                expected: self.means.len(),
                got: ds.num_features,
            });
        }
        let mut out = ds.clone();
        for i in 0..ds.num_rows() {
            for j in 0..ds.num_features {
                let v = &mut out.features[i * ds.num_features + j];
                *v = if self.stddevs[j] > 0.0 {
                    (*v - self.means[j]) / self.stddevs[j]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    /// x = z * stddev + mean; recovers the original features of [`apply`].
    pub fn invert(&self, ds: &SupervisedDataset) -> Result<SupervisedDataset> {
        if ds.num_features != self.means.len() {
            return Err(IglError::DimensionMismatch {
                what: "standardization",
                expected: self.means.len(),
                got: ds.num_features,
            });
        }
        let mut out = ds.clone();
        for i in 0..ds.num_rows() {
            for j in 0..ds.num_features {
                let v = &mut out.features[i * ds.num_features + j];
                *v = *v * self.stddevs[j] + self.means[j];
            }
        }
        Ok(out)
    }
}

/// Standardize each column to mean 0 and population stddev 1; constant
/// columns become all-zero. Returns the transformed dataset and the transform.
pub fn standardize(ds: &SupervisedDataset) -> Result<(SupervisedDataset, Standardization)> {
    let n = ds.num_rows();
    if n < 2 {
        return Err(IglError::Dataset("standardize needs at least 2 rows".into()));
    }
    let d = ds.num_features;
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += ds.features[i * d + j];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut vars = vec![0.0; d];
    for i in 0..n {
        for (j, v) in vars.iter_mut().enumerate() {
            let diff = ds.features[i * d + j] - means[j];
            *v += diff * diff;
        }
    }
    let stddevs: Vec<f64> = vars
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                0.0
            }
        })
        .collect();

    let transform = Standardization { means, stddevs };
    let transformed = transform.apply(ds)?;
    Ok((transformed, transform))
}

/// Balance verdict: no class may hold `threshold` or more of the rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub balanced: bool,
    pub max_class_fraction: f64,
}

/// A dataset is balanced when every class fraction is strictly below
/// `threshold` (default 0.5).
pub fn check_balanced(ds: &SupervisedDataset, threshold: f64) -> BalanceCheck {
    let mut counts = vec![0usize; ds.num_classes];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    let max_count = counts.into_iter().max().unwrap_or(0);
    let fraction = max_count as f64 / ds.num_rows() as f64;
    BalanceCheck {
        balanced: fraction < threshold,
        max_class_fraction: fraction,
    }
}

/// Seeded uniform split into train (floor(fraction * N) rows) and eval (rest).
pub fn train_eval_split(
    ds: &SupervisedDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(SupervisedDataset, SupervisedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(IglError::Contract(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = ds.num_rows();
    if n < 2 {
        return Err(IglError::Dataset("split needs at least 2 rows".into()));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    indices.shuffle(&mut rng);
    let train_size = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let (train_idx, eval_idx) = indices.split_at(train_size);
    Ok((ds.select_rows(train_idx), ds.select_rows(eval_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn labels_map_in_first_appearance_order() {
        let f = write_csv("f1,f2,label\n0,1,a\n1,0,b\n1,1,a\n");
        let ds = load_csv(f.path(), &LabelColumn::Name("label".into()), &CsvOptions::default())
            .unwrap();
        assert_eq!(ds.num_rows(), 3);
        assert_eq!(ds.num_features, 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.label_names, vec!["a", "b"]);
        assert_eq!(ds.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn nan_cell_is_rejected_with_location() {
        let f = write_csv("f1,label\n0.5,a\nNaN,b\n");
        let err = load_csv(f.path(), &LabelColumn::Name("label".into()), &CsvOptions::default())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "{msg}");
        assert!(msg.contains("f1"), "{msg}");
    }

    #[test]
    fn unparseable_cell_is_rejected() {
        let f = write_csv("f1,label\noops,a\n1.0,b\n");
        let err = load_csv(f.path(), &LabelColumn::Name("label".into()), &CsvOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("oops"));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_csv(
            "/nonexistent/xyz.csv",
            &LabelColumn::Index(0),
            &CsvOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("nonexistent"));
    }

    #[test]
    fn constructed_150_row_file_counts_correctly() {
        // 150 rows, 4 features, 3 classes.
        let mut content = String::from("a,b,c,d,label\n");
        for i in 0..150 {
            content.push_str(&format!("{i},{},{},{},c{}\n", i % 7, i % 3, i % 5, i % 3));
        }
        let f = write_csv(&content);
        let ds = load_csv(f.path(), &LabelColumn::Name("label".into()), &CsvOptions::default())
            .unwrap();
        assert_eq!(
            (ds.num_rows(), ds.num_features, ds.num_classes),
            (150, 4, 3)
        );
    }

    #[test]
    fn label_by_index_without_header() {
        let f = write_csv("1,0,x\n2,1,y\n");
        let opts = CsvOptions {
            delimiter: b',',
            has_header: false,
        };
        let ds = load_csv(f.path(), &LabelColumn::Index(2), &opts).unwrap();
        assert_eq!(ds.num_features, 2);
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn custom_delimiter() {
        let f = write_csv("f;label\n1;a\n2;b\n");
        let opts = CsvOptions {
            delimiter: b';',
            has_header: true,
        };
        let ds = load_csv(f.path(), &LabelColumn::Name("label".into()), &opts).unwrap();
        assert_eq!(ds.num_rows(), 2);
    }

    #[test]
    fn standardize_two_point_column() {
        // Column [1, 3]: mean 2, population stddev 1 -> [-1, 1].
        let ds = SupervisedDataset::new(vec![vec![1.0], vec![3.0]], vec![0, 1], 2).unwrap();
        let (z, t) = standardize(&ds).unwrap();
        assert!((z.features[0] + 1.0).abs() < 1e-12);
        assert!((z.features[1] - 1.0).abs() < 1e-12);
        assert!((t.means[0] - 2.0).abs() < 1e-12);
        assert!((t.stddevs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let ds =
            SupervisedDataset::new(vec![vec![5.0], vec![5.0], vec![5.0]], vec![0, 1, 0], 2)
                .unwrap();
        let (z, _) = standardize(&ds).unwrap();
        assert_eq!(z.features, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let ds = SupervisedDataset::new(
            vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let (z, _) = standardize(&ds).unwrap();
        for (a, b) in z.features.iter().zip(&ds.features) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_moments_and_inverse_roundtrip() {
        let rows: Vec<Vec<f64>> = (0..37)
            .map(|i| vec![i as f64 * 0.7 - 3.0, (i as f64).sin() * 10.0, 4.0])
            .collect();
        let labels = (0..37).map(|i| i % 3).collect();
        let ds = SupervisedDataset::new(rows, labels, 3).unwrap();
        let (z, t) = standardize(&ds).unwrap();

        let n = z.num_rows() as f64;
        for j in 0..z.num_features {
            let mean: f64 = (0..z.num_rows()).map(|i| z.row(i)[j]).sum::<f64>() / n;
            let var: f64 = (0..z.num_rows()).map(|i| (z.row(i)[j] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            if t.stddevs[j] > 0.0 {
                assert!((var - 1.0).abs() < 1e-9, "column {j} var {var}");
            }
        }

        let back = t.invert(&z).unwrap();
        for (a, b) in back.features.iter().zip(&ds.features) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn balance_examples() {
        let ds = SupervisedDataset::new(vec![vec![0.0]; 3], vec![0, 1, 2], 3).unwrap();
        let check = check_balanced(&ds, 0.5);
        assert!(check.balanced);
        assert!((check.max_class_fraction - 1.0 / 3.0).abs() < 1e-12);

        let ds = SupervisedDataset::new(vec![vec![0.0]; 3], vec![0, 0, 1], 2).unwrap();
        let check = check_balanced(&ds, 0.5);
        assert!(!check.balanced);
        assert!((check.max_class_fraction - 2.0 / 3.0).abs() < 1e-12);

        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let ds = SupervisedDataset::new(vec![vec![0.0]; 1000], labels, 10).unwrap();
        let check = check_balanced(&ds, 0.5);
        assert!(check.balanced);
        assert!((check.max_class_fraction - 0.1).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_and_partition() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let labels = (0..100).map(|i| i % 2).collect();
        let ds = SupervisedDataset::new(rows, labels, 2).unwrap();

        let (train, eval) = train_eval_split(&ds, 0.9, 7).unwrap();
        assert_eq!((train.num_rows(), eval.num_rows()), (90, 10));

        // Union of rows equals the original multiset.
        let mut seen: Vec<f64> = train
            .features
            .iter()
            .chain(&eval.features)
            .copied()
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let ds = SupervisedDataset::new(rows, (0..20).map(|i| i % 2).collect(), 2).unwrap();
        let (a1, b1) = train_eval_split(&ds, 0.5, 99).unwrap();
        let (a2, b2) = train_eval_split(&ds, 0.5, 99).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.num_rows(), 10);
        assert_eq!(b1.num_rows(), 10);
    }
}
