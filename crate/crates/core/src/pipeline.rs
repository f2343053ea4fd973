//! End-to-end orchestration: ingest, split, normalize, score features,
//! run SEV-EB selection, train the network, evaluate, and persist a JSON
//! model artifact. The whole pipeline is a pure function of (config, seed,
//! input files): every derived seed comes from the pipeline seed through
//! tagged streams, so two runs agree on every emitted byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{
    apply_normalizer, fit_normalizer, load_table, stratified_split, synth_generate, DataError,
    NormalizationStats, RecordTable,
};
use crate::features::{
    apply_mask, blend_scores, select_top, statistical_scores, BlendConfig, FeatureError,
    FeatureMask, FeatureScores,
};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::network::{self, NetConfig, NetError, NetParams};
use crate::rng::{self, tag};
use crate::sev_eb::{
    bench_fn, bench_space, binarize, fs_fitness, optimize, random_search, SearchSpace, SevEbConfig,
    SevError,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("artifact format_version {found}, this build reads {expected}")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sev(#[from] SevError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// Stable short code for the CLI's `ERROR <code>: <message>` line.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::ConfigInvalid(_) => "CONFIG",
            PipelineError::SchemaMismatch(_) => "SCHEMA",
            PipelineError::VersionMismatch { .. } => "VERSION",
            PipelineError::CorruptArtifact(_) => "ARTIFACT",
            PipelineError::Io(_) => "IO",
            PipelineError::Json(_) => "JSON",
            PipelineError::Data(_) => "DATA",
            PipelineError::Feature(_) => "FEATURE",
            PipelineError::Net(_) => "NET",
            PipelineError::Sev(_) => "OPT",
            PipelineError::Metrics(_) => "METRICS",
        }
    }
}

/// Either a CSV on disk or a generated synthetic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetConfig {
    File {
        path: String,
        schema_id: String,
    },
    Synth {
        n: usize,
        informative: usize,
        noise: usize,
        delta: f64,
        /// Data seed; defaults to the pipeline seed so varying the run seed
        /// also varies the draw, while a pinned value freezes the dataset.
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsConfig {
    /// Final mask cardinality; defaults to max(2, D/2).
    pub k_final: Option<usize>,
    pub lambda: f64,
    pub surrogate_epochs: usize,
    pub sev_eb: SevEbConfig,
}

impl Default for FsConfig {
    fn default() -> FsConfig {
        FsConfig {
            k_final: None,
            lambda: 0.05,
            surrogate_epochs: 30,
            sev_eb: SevEbConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendSettings {
    pub wt_1: f64,
    pub wt_2: f64,
    /// Run the outer SEV-EB search over (wt_1, wt_2, log10 lr) before the
    /// final fit.
    pub tune: bool,
}

impl Default for BlendSettings {
    fn default() -> BlendSettings {
        BlendSettings {
            wt_1: 0.5,
            wt_2: 0.5,
            tune: false,
        }
    }
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub feature_selection: FsConfig,
    #[serde(default)]
    pub blend: BlendSettings,
    #[serde(default)]
    pub network: NetConfig,
    /// Where metrics.json, model.json, scores.csv, roc_<label>.csv and
    /// loss_curve.csv are written. Nothing is written when unset.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(PipelineError::ConfigInvalid(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        for (name, w) in [("wt_1", self.blend.wt_1), ("wt_2", self.blend.wt_2)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(PipelineError::ConfigInvalid(format!(
                    "{name} must lie in [0, 1], got {w}"
                )));
            }
        }
        if self.feature_selection.k_final == Some(0) {
            return Err(PipelineError::ConfigInvalid("k_final must be positive".into()));
        }
        if !(self.feature_selection.lambda >= 0.0) {
            return Err(PipelineError::ConfigInvalid(format!(
                "lambda must be >= 0, got {}",
                self.feature_selection.lambda
            )));
        }
        self.feature_selection
            .sev_eb
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.network
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        if let DatasetConfig::Synth { n, informative, noise, .. } = &self.dataset {
            if *n == 0 || informative + noise == 0 {
                return Err(PipelineError::ConfigInvalid(
                    "synth dataset needs rows and at least one feature".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))
}

/// The five score vectors the pipeline derives, all length D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScoreSet {
    /// F: statistical relevance.
    pub statistical: FeatureScores,
    /// OF: SEV-EB final-population selection frequency.
    pub optimal: FeatureScores,
    /// F1W: probe-network input-gradient magnitude.
    pub deep: FeatureScores,
    /// wf = wt_1*F + (1-wt_1)*OF.
    pub weighted: FeatureScores,
    /// owf = wt_2*wf + (1-wt_2)*F1W.
    pub optimal_weighted: FeatureScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub schema_id: String,
    pub feature_names: Vec<String>,
    pub stats: NormalizationStats,
    pub mask: FeatureMask,
    pub blend: BlendConfig,
    pub scores: FeatureScoreSet,
    pub net_config: NetConfig,
    pub params: NetParams,
    pub metrics: MetricsReport,
    pub seed: u64,
}

fn load_dataset(ds: &DatasetConfig, pipeline_seed: u64) -> Result<RecordTable, PipelineError> {
    match ds {
        DatasetConfig::File { path, schema_id } => {
            let p = Path::new(path);
            if !p.is_file() {
                return Err(PipelineError::ConfigInvalid(format!(
                    "dataset path not found: {path}"
                )));
            }
            Ok(load_table(p, schema_id)?)
        }
        DatasetConfig::Synth {
            n,
            informative,
            noise,
            delta,
            seed,
        } => Ok(synth_generate(
            *n,
            *informative,
            *noise,
            *delta,
            seed.unwrap_or(pipeline_seed),
        )?),
    }
}

/// Per-mask surrogate seed: a pure function of (pipeline seed, mask bits),
/// so concurrent fitness evaluation cannot reorder anything observable.
fn mask_seed(seed: u64, mask: &FeatureMask) -> u64 {
    let mut words = vec![tag::SURROGATE, mask.len() as u64];
    for chunk in mask.selected.chunks(64) {
        let mut w = 0u64;
        for (bit, &sel) in chunk.iter().enumerate() {
            if sel {
                w |= 1 << bit;
            }
        }
        words.push(w);
    }
    rng::derive(seed, &words)
}

/// Inner split of the train table that feeds the selection surrogate.
const FS_VAL_FRACTION: f64 = 0.25;

fn tune_blend(
    fs_train: &RecordTable,
    fs_val: &RecordTable,
    f: &FeatureScores,
    of: &FeatureScores,
    f1w: &FeatureScores,
    k_final: usize,
    net: &NetConfig,
    seed: u64,
) -> Result<(f64, f64, f64), PipelineError> {
    let space = SearchSpace::new(vec![0.0, 0.0, -3.0], vec![1.0, 1.0, -1.0])?;
    let cfg = SevEbConfig {
        pop_size: 10,
        max_iters: 15,
        seed: rng::derive(seed, &[tag::TUNE]),
        ..SevEbConfig::default()
    };
    let tune_epochs = (net.epochs / 10).max(1);
    let fitness = |x: &[f64]| -> f64 {
        let wf = blend_scores(f, of, x[0]).expect("blend weight within bounds");
        let owf = blend_scores(&wf, f1w, x[1]).expect("blend weight within bounds");
        let mask = select_top(&owf, k_final).expect("k_final validated against D");
        let mt = apply_mask(fs_train, &mask).expect("mask from scores of width D");
        let mv = apply_mask(fs_val, &mask).expect("mask from scores of width D");
        let ncfg = NetConfig {
            input_len: k_final,
            epochs: tune_epochs,
            learning_rate: 10f64.powf(x[2]),
            seed: rng::derive(
                seed,
                &[tag::TUNE, x[0].to_bits(), x[1].to_bits(), x[2].to_bits()],
            ),
            ..net.clone()
        };
        let (params, _) = network::train(&mt, &ncfg).expect("tune candidate training");
        let probs = network::predict_proba(&mv, &params, &ncfg).expect("tune candidate predict");
        let mut f1 = 0.0;
        for h in 0..mv.n_labels() {
            let scores: Vec<f64> = probs.iter().map(|r| r[h]).collect();
            let labels: Vec<u8> = mv.labels.iter().map(|r| r[h]).collect();
            let c = metrics::confusion(&scores, &labels, 0.5).expect("aligned probe outputs");
            f1 += metrics::classification_scores(&c).f1;
        }
        1.0 - f1 / mv.n_labels() as f64
    };
    let res = optimize(fitness, &space, &cfg)?;
    Ok((res.x_best[0], res.x_best[1], 10f64.powf(res.x_best[2])))
}

pub fn run_train(config: &PipelineConfig) -> Result<ModelArtifact, PipelineError> {
    config.validate()?;
    let seed = config.seed;

    let table = load_dataset(&config.dataset, seed)?;
    let d = table.n_features();
    let k_final = config
        .feature_selection
        .k_final
        .unwrap_or_else(|| (d / 2).max(2).min(d));
    if k_final > d {
        return Err(PipelineError::ConfigInvalid(format!(
            "k_final {k_final} exceeds {d} features"
        )));
    }

    let (train_raw, test_raw) = stratified_split(&table, config.test_fraction, seed)?;
    // Normalizer statistics come from the train split only.
    let stats = fit_normalizer(&train_raw);
    let train = apply_normalizer(&train_raw, &stats)?;
    let test = apply_normalizer(&test_raw, &stats)?;

    let f_scores = statistical_scores(&train)?;

    // SEV-EB wrapper selection over [-1, 1]^D.
    let (fs_train, fs_val) =
        stratified_split(&train, FS_VAL_FRACTION, rng::derive(seed, &[tag::FS_SPLIT]))?;
    let space = SearchSpace::cube(-1.0, 1.0, d)?;
    let fs_cfg = SevEbConfig {
        seed: rng::derive(seed, &[tag::FS_OPT]),
        ..config.feature_selection.sev_eb.clone()
    };
    let lambda = config.feature_selection.lambda;
    let surrogate_epochs = config.feature_selection.surrogate_epochs;
    let fs_result = optimize(
        |x: &[f64]| {
            let mask = binarize(x);
            fs_fitness(
                &mask,
                &fs_train,
                &fs_val,
                lambda,
                surrogate_epochs,
                mask_seed(seed, &mask),
            )
            .expect("surrogate fitness is total over masks")
        },
        &space,
        &fs_cfg,
    )?;
    let best_mask = binarize(&fs_result.x_best);
    if best_mask.cardinality() == 0 {
        return Err(PipelineError::ConfigInvalid(
            "feature selection collapsed to the empty mask; lower lambda".into(),
        ));
    }
    let pop = fs_result.final_positions.len() as f64;
    let of_raw: Vec<f64> = (0..d)
        .map(|j| {
            fs_result
                .final_positions
                .iter()
                .filter(|x| x[j] > 0.0)
                .count() as f64
                / pop
        })
        .collect();
    let of_scores = FeatureScores::from_raw(of_raw, crate::features::ScoreSource::Optimal);

    // Probe network on the best mask's columns; gradients embed back into
    // D-length with zeros on unselected features.
    let probe_table = apply_mask(&train, &best_mask)?;
    let probe_cfg = NetConfig {
        input_len: best_mask.cardinality(),
        epochs: (config.network.epochs / 5).max(1),
        seed: rng::derive(seed, &[tag::PROBE]),
        ..config.network.clone()
    };
    let probe_scores = crate::features::deep_scores(&probe_table, &probe_cfg)?;
    let mut f1w_raw = vec![0.0; d];
    for (slot, col) in best_mask.indices().into_iter().enumerate() {
        f1w_raw[col] = probe_scores.values[slot];
    }
    let f1w = FeatureScores::from_raw(f1w_raw, crate::features::ScoreSource::Deep);

    let (wt_1, wt_2, learning_rate) = if config.blend.tune {
        tune_blend(
            &fs_train, &fs_val, &f_scores, &of_scores, &f1w, k_final, &config.network, seed,
        )?
    } else {
        (
            config.blend.wt_1,
            config.blend.wt_2,
            config.network.learning_rate,
        )
    };

    let wf = blend_scores(&f_scores, &of_scores, wt_1)?;
    let owf = blend_scores(&wf, &f1w, wt_2)?;
    let final_mask = select_top(&owf, k_final)?;

    let masked_train = apply_mask(&train, &final_mask)?;
    let masked_test = apply_mask(&test, &final_mask)?;
    let net_cfg = NetConfig {
        input_len: k_final,
        learning_rate,
        seed: rng::derive(seed, &[tag::NET_INIT]),
        ..config.network.clone()
    };
    let (params, curve) = network::train(&masked_train, &net_cfg)?;

    let probs = network::predict_proba(&masked_test, &params, &net_cfg)?;
    let report = metrics::evaluate_heads(&probs, &masked_test.labels, &masked_test.label_names)?;

    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        schema_id: table.schema_id.clone(),
        feature_names: table.feature_names.clone(),
        stats,
        mask: final_mask,
        blend: BlendConfig { wt_1, wt_2 },
        scores: FeatureScoreSet {
            statistical: f_scores,
            optimal: of_scores,
            deep: f1w,
            weighted: wf,
            optimal_weighted: owf,
        },
        net_config: net_cfg,
        params,
        metrics: report,
        seed,
    };

    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        save_artifact(&artifact, &dir.join("model.json"))?;
        write_metrics(&artifact.metrics, &dir.join("metrics.json"))?;
        write_roc_csvs(&probs, &masked_test.labels, &masked_test.label_names, dir)?;
        write_scores_csv(&artifact, &dir.join("scores.csv"))?;
        write_loss_curve(&curve, &dir.join("loss_curve.csv"))?;
    }
    Ok(artifact)
}

fn check_schema(artifact: &ModelArtifact, table: &RecordTable) -> Result<(), PipelineError> {
    if table.schema_id != artifact.schema_id {
        return Err(PipelineError::SchemaMismatch(format!(
            "artifact was trained on schema '{}', table is '{}'",
            artifact.schema_id, table.schema_id
        )));
    }
    if table.feature_names != artifact.feature_names {
        return Err(PipelineError::SchemaMismatch(format!(
            "feature columns differ: expected {:?}, got {:?}",
            artifact.feature_names, table.feature_names
        )));
    }
    if table.n_labels() != artifact.net_config.outputs {
        return Err(PipelineError::SchemaMismatch(format!(
            "artifact has {} heads, table has {} labels",
            artifact.net_config.outputs,
            table.n_labels()
        )));
    }
    Ok(())
}

fn project(artifact: &ModelArtifact, table: &RecordTable) -> Result<RecordTable, PipelineError> {
    let normed = apply_normalizer(table, &artifact.stats)?;
    Ok(apply_mask(&normed, &artifact.mask)?)
}

pub fn run_eval(
    artifact: &ModelArtifact,
    table: &RecordTable,
    out_dir: Option<&Path>,
) -> Result<MetricsReport, PipelineError> {
    check_schema(artifact, table)?;
    let masked = project(artifact, table)?;
    let probs = network::predict_proba(&masked, &artifact.params, &artifact.net_config)?;
    let report = metrics::evaluate_heads(&probs, &masked.labels, &masked.label_names)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_metrics(&report, &dir.join("metrics.json"))?;
        write_roc_csvs(&probs, &masked.labels, &masked.label_names, dir)?;
    }
    Ok(report)
}

pub fn run_predict(
    artifact: &ModelArtifact,
    table: &RecordTable,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    check_schema(artifact, table)?;
    let masked = project(artifact, table)?;
    Ok(network::predict_proba(
        &masked,
        &artifact.params,
        &artifact.net_config,
    )?)
}

pub fn save_artifact(artifact: &ModelArtifact, path: &Path) -> Result<(), PipelineError> {
    let mut json = serde_json::to_string_pretty(artifact)?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact, PipelineError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::CorruptArtifact(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| PipelineError::CorruptArtifact("missing format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(PipelineError::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let artifact: ModelArtifact = serde_json::from_value(value)
        .map_err(|e| PipelineError::CorruptArtifact(e.to_string()))?;
    if artifact.mask.cardinality() != artifact.net_config.input_len {
        return Err(PipelineError::CorruptArtifact(format!(
            "mask selects {} features but the network reads {}",
            artifact.mask.cardinality(),
            artifact.net_config.input_len
        )));
    }
    Ok(artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub function: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    pub seeds: Vec<u64>,
    pub pop_size: usize,
    pub max_iters: usize,
}

impl Default for BenchConfig {
    fn default() -> BenchConfig {
        let case = |function: &str, dimension: usize| BenchCase {
            function: function.into(),
            dimension,
        };
        BenchConfig {
            cases: vec![case("sphere", 10), case("rastrigin", 5), case("rosenbrock", 10)],
            seeds: (0..10).collect(),
            pop_size: 30,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub function: String,
    pub dimension: usize,
    pub seed: u64,
    pub method: String,
    pub iterations: usize,
    pub evaluations: usize,
    pub best_fitness: f64,
    pub wall_time_ms: f64,
}

/// SEV-EB vs uniform random search at matched evaluation budgets. Writes
/// bench.csv plus one best-so-far history CSV per run when out_dir is set.
pub fn run_bench(
    config: &BenchConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<BenchRow>, PipelineError> {
    let mut rows = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    for case in &config.cases {
        let space = bench_space(&case.function, case.dimension)?;
        let f = |x: &[f64]| bench_fn(&case.function, x).expect("known function");
        for &seed in &config.seeds {
            let cfg = SevEbConfig {
                pop_size: config.pop_size,
                max_iters: config.max_iters,
                seed,
                ..SevEbConfig::default()
            };
            let started = Instant::now();
            let sev = optimize(f, &space, &cfg)?;
            let sev_ms = started.elapsed().as_secs_f64() * 1e3;
            let started = Instant::now();
            let rand = random_search(f, &space, sev.evaluations, seed)?;
            let rand_ms = started.elapsed().as_secs_f64() * 1e3;
            if let Some(dir) = out_dir {
                write_history(&sev.history, case, "sev_eb", seed, dir)?;
                write_history(&rand.history, case, "random", seed, dir)?;
            }
            rows.push(BenchRow {
                function: case.function.clone(),
                dimension: case.dimension,
                seed,
                method: "sev_eb".into(),
                iterations: config.max_iters,
                evaluations: sev.evaluations,
                best_fitness: sev.f_best,
                wall_time_ms: sev_ms,
            });
            rows.push(BenchRow {
                function: case.function.clone(),
                dimension: case.dimension,
                seed,
                method: "random".into(),
                iterations: rand.evaluations,
                evaluations: rand.evaluations,
                best_fitness: rand.f_best,
                wall_time_ms: rand_ms,
            });
        }
    }
    if let Some(dir) = out_dir {
        let mut out = String::from(
            "function,dimension,seed,method,iterations,evaluations,best_fitness,wall_time_ms\n",
        );
        for r in &rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.function,
                r.dimension,
                r.seed,
                r.method,
                r.iterations,
                r.evaluations,
                r.best_fitness,
                r.wall_time_ms
            ));
        }
        fs::write(dir.join("bench.csv"), out)?;
    }
    Ok(rows)
}

fn write_history(
    history: &[f64],
    case: &BenchCase,
    method: &str,
    seed: u64,
    dir: &Path,
) -> Result<(), PipelineError> {
    let mut out = String::from("iteration,f_best\n");
    for (i, v) in history.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    let name = format!("history_{}_{}_d{}_s{}.csv", case.function, method, case.dimension, seed);
    fs::write(dir.join(name), out)?;
    Ok(())
}

fn write_metrics(report: &MetricsReport, path: &Path) -> Result<(), PipelineError> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

fn write_roc_csvs(
    probs: &[Vec<f64>],
    labels: &[Vec<u8>],
    label_names: &[String],
    dir: &Path,
) -> Result<(), PipelineError> {
    for (h, name) in label_names.iter().enumerate() {
        let scores: Vec<f64> = probs.iter().map(|r| r[h]).collect();
        let ys: Vec<u8> = labels.iter().map(|r| r[h]).collect();
        let curve = metrics::roc_curve(&scores, &ys)?;
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in curve {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        fs::write(dir.join(format!("roc_{name}.csv")), out)?;
    }
    Ok(())
}

fn write_scores_csv(artifact: &ModelArtifact, path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from(
        "feature_name,mean,std,stat_score,deep_score,optimal_score,wf,owf,selected\n",
    );
    for (j, name) in artifact.feature_names.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            name,
            artifact.stats.mean[j],
            artifact.stats.std[j],
            artifact.scores.statistical.values[j],
            artifact.scores.deep.values[j],
            artifact.scores.optimal.values[j],
            artifact.scores.weighted.values[j],
            artifact.scores.optimal_weighted.values[j],
            artifact.mask.selected[j]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_loss_curve(curve: &[f64], path: &Path) -> Result<(), PipelineError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,loss")?;
    for (i, v) in curve.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, v)?;
    }
    Ok(())
}
