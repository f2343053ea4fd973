//! Feature scoring, blending, and selection.
//!
//! Scores come from three sources: statistical (absolute Pearson
//! correlation with the first label), optimal (mask frequencies from the
//! population optimizer), and deep (input-gradient saliency from a probe
//! network). Two convex blends combine them:
//!
//! ```text
//! wf  = wt_1 * F  + (1 - wt_1) * OF
//! owf = wt_2 * wf + (1 - wt_2) * F1W
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::RecordTable;
use crate::network::{self, NetConfig, NetError};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("blend weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("k = {k} invalid for {d} features")]
    BadK { k: usize, d: usize },
    #[error("network: {0}")]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Statistical,
    Deep,
    Optimal,
    BlendedWf,
    BlendedOwf,
}

/// Per-feature scores in [0, 1], rescaled so the maximum is 1 unless the
/// raw scores are all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub values: Vec<f64>,
    pub source: ScoreSource,
}

impl FeatureScores {
    /// Rescales raw nonnegative scores by their maximum.
    pub fn from_raw(raw: Vec<f64>, source: ScoreSource) -> FeatureScores {
        let max = raw.iter().cloned().fold(0.0f64, f64::max);
        let values = if max > 0.0 {
            raw.iter().map(|&v| v / max).collect()
        } else {
            raw
        };
        FeatureScores { values, source }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Boolean selection mask over features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub selected: Vec<bool>,
}

impl FeatureMask {
    pub fn cardinality(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Convex blend weights for the two blending stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    pub wt_1: f64,
    pub wt_2: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig { wt_1: 0.5, wt_2: 0.5 }
    }
}

/// Absolute Pearson correlation of each feature with the first label
/// column, rescaled by the maximum. Constant features score 0.
pub fn statistical_scores(table: &RecordTable) -> Result<FeatureScores, FeatureError> {
    if table.n_rows() < 3 {
        return Err(FeatureError::TooFewRows {
            need: 3,
            got: table.n_rows(),
        });
    }
    let n = table.n_rows() as f64;
    let y: Vec<f64> = table.labels.iter().map(|r| r[0] as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>();
    let mut raw = Vec::with_capacity(table.n_features());
    for j in 0..table.n_features() {
        let col = table.column(j);
        let mu = col.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var = 0.0;
        for (i, &x) in col.iter().enumerate() {
            cov += (x - mu) * (y[i] - y_mean);
            var += (x - mu) * (x - mu);
        }
        let denom = (var * y_var).sqrt();
        raw.push(if denom == 0.0 { 0.0 } else { (cov / denom).abs() });
    }
    Ok(FeatureScores::from_raw(raw, ScoreSource::Statistical))
}

/// Per-feature mean and population std of the raw columns, for reports.
pub fn column_summaries(table: &RecordTable) -> Vec<(String, f64, f64)> {
    let stats = crate::dataio::fit_normalizer(table);
    table
        .feature_names
        .iter()
        .cloned()
        .zip(stats.mean)
        .zip(stats.std)
        .map(|((name, mean), std)| (name, mean, std))
        .collect()
}

/// Saliency scores from a probe network: the network trains on `table`
/// for `probe_config.epochs`, then each feature scores the mean over
/// samples and heads of |d yhat / d x|, rescaled by the maximum.
pub fn deep_scores(
    table: &RecordTable,
    probe_config: &NetConfig,
) -> Result<FeatureScores, FeatureError> {
    let (params, _) = network::train(table, probe_config)?;
    let d = table.n_features();
    let mut raw = vec![0.0; d];
    for row in &table.features {
        let grads = network::input_gradients(row, &params, probe_config)?;
        for head in &grads {
            for (j, g) in head.iter().enumerate() {
                raw[j] += g.abs();
            }
        }
    }
    let scale = (table.n_rows() * probe_config.outputs) as f64;
    for v in &mut raw {
        *v /= scale;
    }
    Ok(FeatureScores::from_raw(raw, ScoreSource::Deep))
}

/// Elementwise convex blend: `w * a + (1 - w) * b`. The result is tagged
/// as the first blend stage unless an input is already blended.
pub fn blend_scores(
    a: &FeatureScores,
    b: &FeatureScores,
    w: f64,
) -> Result<FeatureScores, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if !(0.0..=1.0).contains(&w) || w.is_nan() {
        return Err(FeatureError::WeightOutOfRange(w));
    }
    let values: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| w * x + (1.0 - w) * y)
        .collect();
    let source = if a.source == ScoreSource::BlendedWf || b.source == ScoreSource::BlendedWf {
        ScoreSource::BlendedOwf
    } else {
        ScoreSource::BlendedWf
    };
    Ok(FeatureScores { values, source })
}

/// Mask selecting the k highest-scoring features; ties break toward the
/// lower index.
pub fn select_top(scores: &FeatureScores, k: usize) -> Result<FeatureMask, FeatureError> {
    let d = scores.len();
    if k == 0 || k > d {
        return Err(FeatureError::BadK { k, d });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        scores.values[b]
            .total_cmp(&scores.values[a])
            .then(a.cmp(&b))
    });
    let mut selected = vec![false; d];
    for &i in &order[..k] {
        selected[i] = true;
    }
    Ok(FeatureMask { selected })
}

/// Projects a table onto the masked features.
pub fn apply_mask(table: &RecordTable, mask: &FeatureMask) -> Result<RecordTable, FeatureError> {
    if mask.len() != table.n_features() {
        return Err(FeatureError::DimensionMismatch {
            left: mask.len(),
            right: table.n_features(),
        });
    }
    let idx = mask.indices();
    Ok(RecordTable {
        features: table
            .features
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect(),
        labels: table.labels.clone(),
        feature_names: idx
            .iter()
            .map(|&j| table.feature_names[j].clone())
            .collect(),
        label_names: table.label_names.clone(),
        schema_id: table.schema_id.clone(),
    })
}
