//! Dataset loading, encoding, normalization, and splitting.
//!
//! Three CSV schemas are supported:
//!
//! * `covid`: columns `age, sex, fever, headache, cough` and label `covid`.
//! * `stroke`: columns `gender, age, hypertension, heart_disease,
//!   ever_married, work_type, Residence_type, avg_glucose_level, bmi,
//!   smoking_status` and label `stroke`; an `id` column is dropped.
//! * `generic`: every column named `label:<name>` is a binary label, every
//!   other column is a numeric feature.
//!
//! Categorical encodings are fixed dictionaries (see [`schema`]), matched
//! case-insensitively after numeric passthrough. Missing feature cells
//! (empty, `na`, `n/a`, `nan`, `null`) are imputed with the column median;
//! rows with missing labels are dropped and the count logged.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("required column '{0}' not found")]
    MissingColumn(String),
    #[error("no data rows in '{0}'")]
    EmptyFile(String),
    #[error("column '{column}': cannot map value '{value}'")]
    UnmappableCategory { column: String, value: String },
    #[error("all {0} rows dropped (missing labels)")]
    AllRowsDropped(usize),
    #[error("dimension mismatch: table has {table} features, stats have {stats}")]
    DimensionMismatch { table: usize, stats: usize },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("unknown schema '{0}' (expected covid, stroke, or generic)")]
    UnknownSchema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// In-memory dataset. Rows are never ragged, features are finite, and
/// label cells are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u8>>,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub schema_id: String,
}

impl RecordTable {
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.features.iter().map(|r| r[d]).collect()
    }

    /// New table containing the given rows, in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> RecordTable {
        RecordTable {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
            schema_id: self.schema_id.clone(),
        }
    }
}

/// Per-feature mean, population standard deviation, and constant flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

pub mod schema {
    //! Fixed categorical dictionaries. Keys are lowercase; values are the
    //! encoded codes. Numeric cells pass through unchanged.

    pub const SEX: &[(&str, f64)] = &[("male", 1.0), ("female", 0.0), ("other", 2.0)];
    pub const YES_NO: &[(&str, f64)] = &[
        ("yes", 1.0),
        ("no", 0.0),
        ("true", 1.0),
        ("false", 0.0),
    ];
    pub const WORK_TYPE: &[(&str, f64)] = &[
        ("private", 0.0),
        ("self-employed", 1.0),
        ("govt_job", 2.0),
        ("children", 3.0),
        ("never_worked", 4.0),
    ];
    pub const RESIDENCE: &[(&str, f64)] = &[("urban", 1.0), ("rural", 0.0)];
    pub const SMOKING: &[(&str, f64)] = &[
        ("never smoked", 0.0),
        ("formerly smoked", 1.0),
        ("smokes", 2.0),
        ("unknown", 3.0),
    ];
}

enum ColKind {
    Numeric,
    Categorical(&'static [(&'static str, f64)]),
}

struct SchemaCol {
    name: &'static str,
    kind: ColKind,
}

fn covid_schema() -> (Vec<SchemaCol>, &'static str) {
    (
        vec![
            SchemaCol { name: "age", kind: ColKind::Numeric },
            SchemaCol { name: "sex", kind: ColKind::Categorical(schema::SEX) },
            SchemaCol { name: "fever", kind: ColKind::Categorical(schema::YES_NO) },
            SchemaCol { name: "headache", kind: ColKind::Categorical(schema::YES_NO) },
            SchemaCol { name: "cough", kind: ColKind::Categorical(schema::YES_NO) },
        ],
        "covid",
    )
}

fn stroke_schema() -> (Vec<SchemaCol>, &'static str) {
    (
        vec![
            SchemaCol { name: "gender", kind: ColKind::Categorical(schema::SEX) },
            SchemaCol { name: "age", kind: ColKind::Numeric },
            SchemaCol { name: "hypertension", kind: ColKind::Numeric },
            SchemaCol { name: "heart_disease", kind: ColKind::Numeric },
            SchemaCol { name: "ever_married", kind: ColKind::Categorical(schema::YES_NO) },
            SchemaCol { name: "work_type", kind: ColKind::Categorical(schema::WORK_TYPE) },
            SchemaCol { name: "Residence_type", kind: ColKind::Categorical(schema::RESIDENCE) },
            SchemaCol { name: "avg_glucose_level", kind: ColKind::Numeric },
            SchemaCol { name: "bmi", kind: ColKind::Numeric },
            SchemaCol { name: "smoking_status", kind: ColKind::Categorical(schema::SMOKING) },
        ],
        "stroke",
    )
}

const MISSING: &[&str] = &["", "na", "n/a", "nan", "null"];

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell.trim().to_ascii_lowercase().as_str())
}

/// None = missing (impute later). Numeric passthrough happens before any
/// dictionary lookup, so pre-encoded files load unchanged.
fn parse_feature(
    cell: &str,
    kind: &ColKind,
    column: &str,
) -> Result<Option<f64>, DataError> {
    let t = cell.trim();
    if is_missing(t) {
        return Ok(None);
    }
    if let Ok(v) = t.parse::<f64>() {
        if v.is_finite() {
            return Ok(Some(v));
        }
        return Ok(None);
    }
    if let ColKind::Categorical(dict) = kind {
        let low = t.to_ascii_lowercase();
        if let Some(&(_, code)) = dict.iter().find(|(k, _)| *k == low) {
            return Ok(Some(code));
        }
    }
    Err(DataError::UnmappableCategory {
        column: column.to_string(),
        value: t.to_string(),
    })
}

/// None = missing label (row will be dropped).
fn parse_label(cell: &str, column: &str) -> Result<Option<u8>, DataError> {
    let t = cell.trim();
    if is_missing(t) {
        return Ok(None);
    }
    if let Ok(v) = t.parse::<f64>() {
        if v == 0.0 {
            return Ok(Some(0));
        }
        if v == 1.0 {
            return Ok(Some(1));
        }
    } else {
        match t.to_ascii_lowercase().as_str() {
            "yes" | "true" | "positive" => return Ok(Some(1)),
            "no" | "false" | "negative" => return Ok(Some(0)),
            _ => {}
        }
    }
    Err(DataError::UnmappableCategory {
        column: column.to_string(),
        value: t.to_string(),
    })
}

/// Median of the present values; 0 when the whole column is missing.
fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn load_table(path: &Path, schema_id: &str) -> Result<RecordTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(_) => return Err(DataError::EmptyFile(path.display().to_string())),
    };
    if headers.is_empty() {
        return Err(DataError::EmptyFile(path.display().to_string()));
    }

    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    // (column index in file, display name, kind) per feature; same for labels.
    let mut feat_cols: Vec<(usize, String, ColKind)> = Vec::new();
    let mut label_cols: Vec<(usize, String)> = Vec::new();
    match schema_id {
        "covid" | "stroke" => {
            let (cols, label) = if schema_id == "covid" {
                covid_schema()
            } else {
                stroke_schema()
            };
            for c in cols {
                feat_cols.push((find(c.name)?, c.name.to_string(), c.kind));
            }
            label_cols.push((find(label)?, label.to_string()));
        }
        "generic" => {
            for (i, h) in headers.iter().enumerate() {
                if let Some(name) = h.strip_prefix("label:") {
                    label_cols.push((i, name.to_string()));
                } else {
                    feat_cols.push((i, h.clone(), ColKind::Numeric));
                }
            }
            if label_cols.is_empty() {
                return Err(DataError::MissingColumn("label:<name>".to_string()));
            }
            if feat_cols.is_empty() {
                return Err(DataError::MissingColumn("<feature>".to_string()));
            }
        }
        other => return Err(DataError::UnknownSchema(other.to_string())),
    }

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut labels: Vec<Vec<u8>> = Vec::new();
    let mut total = 0usize;
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        total += 1;
        let mut row_labels = Vec::with_capacity(label_cols.len());
        let mut missing_label = false;
        for (idx, name) in &label_cols {
            match parse_label(record.get(*idx).unwrap_or(""), name)? {
                Some(y) => row_labels.push(y),
                None => {
                    missing_label = true;
                    break;
                }
            }
        }
        if missing_label {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(feat_cols.len());
        for (idx, name, kind) in &feat_cols {
            row.push(parse_feature(record.get(*idx).unwrap_or(""), kind, name)?);
        }
        rows.push(row);
        labels.push(row_labels);
    }

    if total == 0 {
        return Err(DataError::EmptyFile(path.display().to_string()));
    }
    if rows.is_empty() {
        return Err(DataError::AllRowsDropped(total));
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} of {total} rows with missing labels",
            path.display()
        );
    }

    // Median imputation, column by column.
    let d = feat_cols.len();
    let mut features = vec![vec![0.0; d]; rows.len()];
    for col in 0..d {
        let mut present: Vec<f64> = rows.iter().filter_map(|r| r[col]).collect();
        let fill = median(&mut present);
        for (i, row) in rows.iter().enumerate() {
            features[i][col] = row[col].unwrap_or(fill);
        }
    }

    Ok(RecordTable {
        features,
        labels,
        feature_names: feat_cols.iter().map(|(_, n, _)| n.clone()).collect(),
        label_names: label_cols.iter().map(|(_, n)| n.clone()).collect(),
        schema_id: schema_id.to_string(),
    })
}

/// Writes a table in the `generic` schema layout: feature columns under
/// their own names, label columns as `label:<name>`. Floats use Rust's
/// shortest round-trip form, so load_table reads back identical bits.
pub fn write_table_csv(table: &RecordTable, path: &Path) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let header: Vec<String> = table
        .feature_names
        .iter()
        .cloned()
        .chain(table.label_names.iter().map(|l| format!("label:{l}")))
        .collect();
    writer.write_record(&header)?;
    for (row, labels) in table.features.iter().zip(&table.labels) {
        let record: Vec<String> = row
            .iter()
            .map(|v| v.to_string())
            .chain(labels.iter().map(|y| y.to_string()))
            .collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean and population standard deviation (divide by N) per feature.
/// A column whose values are all bit-identical gets std exactly 0 and the
/// constant flag, so normalization cannot amplify rounding noise.
pub fn fit_normalizer(table: &RecordTable) -> NormalizationStats {
    let n = table.n_rows() as f64;
    let d = table.n_features();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    let mut constant = vec![false; d];
    for j in 0..d {
        let first = table.features[0][j];
        if table.features.iter().all(|r| r[j] == first) {
            mean[j] = first;
            constant[j] = true;
            continue;
        }
        let mu = table.features.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = table
            .features
            .iter()
            .map(|r| (r[j] - mu) * (r[j] - mu))
            .sum::<f64>()
            / n;
        mean[j] = mu;
        std[j] = var.sqrt();
    }
    NormalizationStats {
        mean,
        std,
        constant,
    }
}

/// (x - mean) / std per cell; constant columns map to 0.
pub fn apply_normalizer(
    table: &RecordTable,
    stats: &NormalizationStats,
) -> Result<RecordTable, DataError> {
    if stats.mean.len() != table.n_features() {
        return Err(DataError::DimensionMismatch {
            table: table.n_features(),
            stats: stats.mean.len(),
        });
    }
    let mut out = table.clone();
    for row in &mut out.features {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if stats.constant[j] {
                0.0
            } else {
                (*x - stats.mean[j]) / stats.std[j]
            };
        }
    }
    Ok(out)
}

/// Stratified split on the first label column. Per class, the test side
/// receives round(count * test_fraction) members chosen by a seeded
/// shuffle; a single-member class goes to train with a warning. Row order
/// within each side follows the input table.
pub fn stratified_split(
    table: &RecordTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(RecordTable, RecordTable), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::DegenerateSplit(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut train_idx: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    for class in 0..=1u8 {
        let mut members: Vec<usize> = (0..table.n_rows())
            .filter(|&i| table.labels[i][0] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() == 1 {
            log::warn!("class {class} has a single member; keeping it in train");
            train_idx.push(members[0]);
            continue;
        }
        let k_test = (members.len() as f64 * test_fraction).round() as usize;
        let mut rng = rng::stream(seed, &[rng::tag::SPLIT, class as u64]);
        // Fisher-Yates; membership depends only on (seed, class).
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        test_idx.extend(&members[..k_test]);
        train_idx.extend(&members[k_test..]);
    }
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(DataError::DegenerateSplit(format!(
            "train {} rows, test {} rows",
            train_idx.len(),
            test_idx.len()
        )));
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((table.take_rows(&train_idx), table.take_rows(&test_idx)))
}

/// Balanced two-class synthetic table. Informative features are drawn from
/// Normal(+-delta/2, 1) by class, noise features from Normal(0, 1), so a
/// single informative feature has Bayes accuracy Phi(delta/2). Columns are
/// named `inf_<i>` / `noise_<j>`; the label is `target`.
pub fn synth_generate(
    n: usize,
    d_informative: usize,
    d_noise: usize,
    delta: f64,
    seed: u64,
) -> Result<RecordTable, DataError> {
    if n < 4 || n % 2 != 0 {
        return Err(DataError::BadShape(format!("n = {n}; need even n >= 4")));
    }
    if d_informative < 1 {
        return Err(DataError::BadShape("d_informative must be >= 1".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(DataError::BadShape(format!("delta = {delta}; need > 0")));
    }
    let mut rng = rng::stream(seed, &[rng::tag::SYNTH]);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let center = if y == 1 { delta / 2.0 } else { -delta / 2.0 };
        let mut row = Vec::with_capacity(d_informative + d_noise);
        for _ in 0..d_informative {
            row.push(center + unit.sample(&mut rng));
        }
        for _ in 0..d_noise {
            row.push(unit.sample(&mut rng));
        }
        features.push(row);
        labels.push(vec![y]);
    }
    let mut feature_names: Vec<String> =
        (1..=d_informative).map(|i| format!("inf_{i}")).collect();
    feature_names.extend((1..=d_noise).map(|j| format!("noise_{j}")));
    Ok(RecordTable {
        features,
        labels,
        feature_names,
        label_names: vec!["target".to_string()],
        schema_id: "generic".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn table(features: Vec<Vec<f64>>, labels: Vec<u8>) -> RecordTable {
        let d = features[0].len();
        RecordTable {
            features,
            labels: labels.into_iter().map(|y| vec![y]).collect(),
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            label_names: vec!["y".to_string()],
            schema_id: "generic".to_string(),
        }
    }

    fn csv_file(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn fit_matches_hand_computed_moments() {
        let t = table(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 0]);
        let s = fit_normalizer(&t);
        assert!((s.mean[0] - 2.0).abs() < 1e-12);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(!s.constant[0]);
    }

    #[test]
    fn fit_flags_constant_column_exactly() {
        let t = table(vec![vec![0.1, 1.0], vec![0.1, 2.0], vec![0.1, 3.0]], vec![0, 1, 0]);
        let s = fit_normalizer(&t);
        assert_eq!(s.std[0], 0.0);
        assert!(s.constant[0]);
        assert!(!s.constant[1]);
    }

    #[test]
    fn apply_produces_unit_scale() {
        let t = table(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 0]);
        let s = fit_normalizer(&t);
        let n = apply_normalizer(&t, &s).unwrap();
        assert!((n.features[0][0] + 1.224745).abs() < 1e-6);
        assert!((n.features[1][0]).abs() < 1e-12);
        assert!((n.features[2][0] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn apply_zeroes_constant_columns() {
        let t = table(vec![vec![7.0], vec![7.0], vec![7.0]], vec![0, 1, 0]);
        let s = fit_normalizer(&t);
        let n = apply_normalizer(&t, &s).unwrap();
        assert!(n.features.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let t = table(vec![vec![1.0, 2.0]], vec![0]);
        let s = NormalizationStats {
            mean: vec![0.0],
            std: vec![1.0],
            constant: vec![false],
        };
        assert!(matches!(
            apply_normalizer(&t, &s),
            Err(DataError::DimensionMismatch { table: 2, stats: 1 })
        ));
    }

    #[test]
    fn split_counts_per_class() {
        let features: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let t = table(features, labels);
        let (train, test) = stratified_split(&t, 0.2, 42).unwrap();
        assert_eq!(train.n_rows(), 8);
        assert_eq!(test.n_rows(), 2);
        let count = |tb: &RecordTable, c: u8| tb.labels.iter().filter(|y| y[0] == c).count();
        assert_eq!(count(&test, 0), 1);
        assert_eq!(count(&test, 1), 1);
        assert_eq!(count(&train, 0), 4);
        assert_eq!(count(&train, 1), 4);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let t = table(features, labels);
        let a = stratified_split(&t, 0.25, 9).unwrap();
        let b = stratified_split(&t, 0.25, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_keeps_single_member_class_in_train() {
        let t = table(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![1, 1, 1, 1, 0],
        );
        let (train, test) = stratified_split(&t, 0.25, 3).unwrap();
        assert!(train.labels.iter().any(|y| y[0] == 0));
        assert!(test.labels.iter().all(|y| y[0] == 1));
        assert_eq!(train.n_rows() + test.n_rows(), 5);
    }

    #[test]
    fn split_rejects_empty_side() {
        let t = table(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        // round(1 * 0.4) = 0 for both classes: empty test side.
        assert!(matches!(
            stratified_split(&t, 0.4, 1),
            Err(DataError::DegenerateSplit(_))
        ));
        assert!(matches!(
            stratified_split(&t, 0.0, 1),
            Err(DataError::DegenerateSplit(_))
        ));
    }

    #[test]
    fn synth_is_balanced_and_deterministic() {
        let a = synth_generate(2000, 5, 15, 3.0, 7).unwrap();
        let b = synth_generate(2000, 5, 15, 3.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rows(), 2000);
        assert_eq!(a.n_features(), 20);
        let pos = a.labels.iter().filter(|y| y[0] == 1).count();
        assert_eq!(pos, 1000);
        assert_ne!(a, synth_generate(2000, 5, 15, 3.0, 8).unwrap());
    }

    #[test]
    fn write_then_load_round_trips_bit_exactly() {
        let t = synth_generate(60, 3, 2, 2.5, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.csv");
        write_table_csv(&t, &path).unwrap();
        let back = load_table(&path, "generic").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn synth_noise_columns_are_uninformative() {
        let t = synth_generate(2000, 1, 5, 3.0, 11).unwrap();
        let y_mean = 0.5;
        for j in 1..6 {
            let col = t.column(j);
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let mut cov = 0.0;
            let mut var = 0.0;
            for (i, &x) in col.iter().enumerate() {
                let yy = t.labels[i][0] as f64 - y_mean;
                cov += (x - mu) * yy;
                var += (x - mu) * (x - mu);
            }
            let r = cov / (var.sqrt() * (col.len() as f64 * 0.25).sqrt());
            assert!(r.abs() < 0.15, "noise col {j} corr {r}");
        }
    }

    #[test]
    fn synth_separation_matches_normal_cdf_oracle() {
        use statrs::distribution::{ContinuousCDF, Normal};
        // One informative feature at delta = 4: Bayes rule is sign(x),
        // accuracy Phi(2).
        let t = synth_generate(2000, 1, 0, 4.0, 5).unwrap();
        let correct = t
            .features
            .iter()
            .zip(&t.labels)
            .filter(|(x, y)| (x[0] > 0.0) == (y[0] == 1))
            .count();
        let acc = correct as f64 / t.n_rows() as f64;
        let want = Normal::new(0.0, 1.0).unwrap().cdf(2.0);
        assert!((acc - want).abs() < 0.02, "acc {acc} vs oracle {want}");
    }

    #[test]
    fn synth_rejects_bad_shapes() {
        assert!(matches!(
            synth_generate(3, 1, 0, 1.0, 0),
            Err(DataError::BadShape(_))
        ));
        assert!(matches!(
            synth_generate(7, 1, 0, 1.0, 0),
            Err(DataError::BadShape(_))
        ));
        assert!(matches!(
            synth_generate(10, 0, 3, 1.0, 0),
            Err(DataError::BadShape(_))
        ));
        assert!(matches!(
            synth_generate(10, 1, 3, 0.0, 0),
            Err(DataError::BadShape(_))
        ));
    }

    #[test]
    fn load_covid_drops_missing_label_rows() {
        let f = csv_file(
            "age,sex,fever,headache,cough,covid\n\
             34,male,yes,no,yes,1\n\
             51,female,no,no,no,0\n\
             29,other,yes,yes,no,\n",
        );
        let t = load_table(f.path(), "covid").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(
            t.feature_names,
            vec!["age", "sex", "fever", "headache", "cough"]
        );
        assert_eq!(t.label_names, vec!["covid"]);
        assert_eq!(t.features[0], vec![34.0, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!(t.features[1], vec![51.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn load_is_idempotent() {
        let f = csv_file(
            "age,sex,fever,headache,cough,covid\n\
             34,male,yes,no,yes,1\n\
             51,female,no,no,no,0\n",
        );
        let a = load_table(f.path(), "covid").unwrap();
        let b = load_table(f.path(), "covid").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn load_stroke_imputes_bmi_median_and_drops_id() {
        let f = csv_file(
            "id,gender,age,hypertension,heart_disease,ever_married,work_type,Residence_type,avg_glucose_level,bmi,smoking_status,stroke\n\
             9046,Male,67,0,1,Yes,Private,Urban,228.69,36.6,formerly smoked,1\n\
             51676,Female,61,0,0,Yes,Self-employed,Rural,202.21,N/A,never smoked,1\n\
             31112,Male,80,0,1,Yes,Private,Rural,105.92,32.5,never smoked,0\n\
             60182,Female,49,0,0,Yes,Private,Urban,171.23,34.4,smokes,0\n",
        );
        let t = load_table(f.path(), "stroke").unwrap();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.n_features(), 10);
        assert!(!t.feature_names.contains(&"id".to_string()));
        // Independent sort-based oracle over the present bmi values.
        let mut present = vec![36.6, 32.5, 34.4];
        present.sort_by(f64::total_cmp);
        let oracle = present[1];
        let bmi_col = t.feature_names.iter().position(|n| n == "bmi").unwrap();
        assert_eq!(t.features[1][bmi_col], oracle);
        // Categorical dictionary spot checks.
        let smoking = t.feature_names.iter().position(|n| n == "smoking_status").unwrap();
        assert_eq!(t.features[0][smoking], 1.0);
        assert_eq!(t.features[3][smoking], 2.0);
        let gender = t.feature_names.iter().position(|n| n == "gender").unwrap();
        assert_eq!(t.features[0][gender], 1.0);
        assert_eq!(t.features[1][gender], 0.0);
    }

    #[test]
    fn load_generic_reads_label_prefix() {
        let f = csv_file("a,b,label:y\n1.5,2.0,1\n0.5,1.0,0\n");
        let t = load_table(f.path(), "generic").unwrap();
        assert_eq!(t.feature_names, vec!["a", "b"]);
        assert_eq!(t.label_names, vec!["y"]);
        assert_eq!(t.labels, vec![vec![1], vec![0]]);
    }

    #[test]
    fn load_errors() {
        let f = csv_file("age,sex,fever,headache,cough\n34,male,yes,no,yes\n");
        assert!(matches!(
            load_table(f.path(), "covid"),
            Err(DataError::MissingColumn(c)) if c == "covid"
        ));

        let f = csv_file("age,sex,fever,headache,cough,covid\n");
        assert!(matches!(
            load_table(f.path(), "covid"),
            Err(DataError::EmptyFile(_))
        ));

        let f = csv_file("age,sex,fever,headache,cough,covid\n34,banana,yes,no,yes,1\n");
        assert!(matches!(
            load_table(f.path(), "covid"),
            Err(DataError::UnmappableCategory { column, value })
                if column == "sex" && value == "banana"
        ));

        let f = csv_file("age,sex,fever,headache,cough,covid\n34,male,yes,no,yes,\n51,female,no,no,no,na\n");
        assert!(matches!(
            load_table(f.path(), "covid"),
            Err(DataError::AllRowsDropped(2))
        ));

        let f = csv_file("a,label:y\n1,0\n");
        assert!(matches!(
            load_table(f.path(), "nope"),
            Err(DataError::UnknownSchema(_))
        ));

        let f = csv_file("a,b\n1,2\n");
        assert!(matches!(
            load_table(f.path(), "generic"),
            Err(DataError::MissingColumn(c)) if c == "label:<name>"
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn normalize_round_trip_recovers_unit_moments(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 3),
                4..40
            )
        ) {
            let n = rows.len();
            let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let t = table(rows, labels);
            let stats = fit_normalizer(&t);
            let normed = apply_normalizer(&t, &stats).unwrap();
            let restats = fit_normalizer(&normed);
            for j in 0..t.n_features() {
                if stats.constant[j] {
                    continue;
                }
                prop_assert!(restats.mean[j].abs() < 1e-12);
                prop_assert!((restats.std[j] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn split_partitions_rows(
            // frac >= 0.3 keeps round(n_per_class * frac) >= 1 even at the
            // smallest class size, so the split cannot degenerate.
            n_per_class in 2usize..20,
            frac in 0.3f64..0.5,
            seed in 0u64..50
        ) {
            let n = n_per_class * 2;
            let features: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
            let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let t = table(features, labels);
            let (train, test) = stratified_split(&t, frac, seed).unwrap();
            let mut seen: Vec<f64> = train
                .features
                .iter()
                .chain(test.features.iter())
                .map(|r| r[0])
                .collect();
            seen.sort_by(f64::total_cmp);
            let want: Vec<f64> = (0..n).map(|i| i as f64).collect();
            prop_assert_eq!(seen, want);
        }
    }
}
