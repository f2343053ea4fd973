use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use valleyforge_core::dataio::{load_table, synth_generate, write_table_csv};
use valleyforge_core::metrics::MetricsReport;
use valleyforge_core::pipeline::{self, BenchConfig, BenchRow, PipelineError};

#[derive(Parser)]
#[command(
    name = "valleyforge",
    version,
    about = "Population-based feature selection and multi-disease risk prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config and report test metrics.
    Train {
        /// Pipeline config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed (and VALLEYFORGE_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on a CSV; writes metrics.json and
    /// roc_<label>.csv to the current directory.
    Eval {
        /// model.json written by train.
        #[arg(long)]
        model: PathBuf,
        /// CSV in the schema the model was trained on.
        #[arg(long)]
        data: PathBuf,
    },
    /// Write per-record risk probabilities for a CSV.
    Predict {
        /// model.json written by train.
        #[arg(long)]
        model: PathBuf,
        /// CSV in the schema the model was trained on.
        #[arg(long)]
        data: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark SEV-EB against random search; writes bench.csv and
    /// per-run history CSVs to the current directory.
    Bench {
        /// Benchmark config (JSON). Defaults cover sphere d=10,
        /// rastrigin d=5 and rosenbrock d=10 over seeds 0..10.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic two-class table and write it as CSV.
    GenSynth {
        /// Total rows (even, >= 4; classes are balanced).
        #[arg(long)]
        n: usize,
        /// Informative feature count.
        #[arg(long)]
        informative: usize,
        /// Noise feature count.
        #[arg(long)]
        noise: usize,
        /// Class-mean separation on informative features.
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("bad arguments");
            let line = line.strip_prefix("error: ").unwrap_or(line);
            eprintln!("ERROR USAGE: {line}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help or --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, out),
        Command::Eval { model, data } => eval(&model, &data),
        Command::Predict { model, data, out } => predict(&model, &data, &out),
        Command::Bench { config } => bench(config.as_deref()),
        Command::GenSynth {
            n,
            informative,
            noise,
            delta,
            seed,
            out,
        } => gen_synth(n, informative, noise, delta, seed, &out),
    }
}

/// --seed beats VALLEYFORGE_SEED beats the config value.
fn env_seed() -> Result<Option<u64>, PipelineError> {
    match env::var("VALLEYFORGE_SEED") {
        Ok(s) => s.trim().parse::<u64>().map(Some).map_err(|_| {
            PipelineError::ConfigInvalid(format!("VALLEYFORGE_SEED='{s}' is not a u64"))
        }),
        Err(env::VarError::NotPresent) => Ok(None),
        Err(env::VarError::NotUnicode(_)) => Err(PipelineError::ConfigInvalid(
            "VALLEYFORGE_SEED is not valid unicode".into(),
        )),
    }
}

fn train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), PipelineError> {
    let mut config = pipeline::load_config(config_path)?;
    if let Some(s) = seed.or(env_seed()?) {
        config.seed = s;
    }
    if let Some(dir) = out {
        config.output_dir = Some(dir);
    }
    let artifact = pipeline::run_train(&config)?;
    print_report(&artifact.metrics);
    if let Some(dir) = &config.output_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<(), PipelineError> {
    let artifact = pipeline::load_artifact(model)?;
    let table = load_table(data, &artifact.schema_id)?;
    let report = pipeline::run_eval(&artifact, &table, Some(Path::new(".")))?;
    print_report(&report);
    Ok(())
}

fn predict(model: &Path, data: &Path, out: &Path) -> Result<(), PipelineError> {
    let artifact = pipeline::load_artifact(model)?;
    let table = load_table(data, &artifact.schema_id)?;
    let probs = pipeline::run_predict(&artifact, &table)?;
    let mut text = artifact
        .metrics
        .per_head
        .iter()
        .map(|h| format!("p_{}", h.label))
        .collect::<Vec<_>>()
        .join(",");
    text.push('\n');
    for row in &probs {
        let line = row
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(out, text)?;
    println!("wrote {} ({} rows)", out.display(), probs.len());
    Ok(())
}

fn bench(config: Option<&Path>) -> Result<(), PipelineError> {
    let config = match config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<BenchConfig>(&text).map_err(|e| {
                PipelineError::ConfigInvalid(format!("{}: {e}", path.display()))
            })?
        }
        None => BenchConfig::default(),
    };
    let rows = pipeline::run_bench(&config, Some(Path::new(".")))?;
    summarize_bench(&rows);
    println!("wrote bench.csv and per-run history CSVs");
    Ok(())
}

fn summarize_bench(rows: &[BenchRow]) {
    let mut cases: Vec<(&str, usize)> = Vec::new();
    for r in rows {
        let key = (r.function.as_str(), r.dimension);
        if !cases.contains(&key) {
            cases.push(key);
        }
    }
    for (function, dimension) in cases {
        for method in ["sev_eb", "random"] {
            let mut best: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.function == function && r.dimension == dimension && r.method == method
                })
                .map(|r| r.best_fitness)
                .collect();
            best.sort_by(f64::total_cmp);
            let median = if best.is_empty() {
                f64::NAN
            } else if best.len() % 2 == 1 {
                best[best.len() / 2]
            } else {
                (best[best.len() / 2 - 1] + best[best.len() / 2]) / 2.0
            };
            println!("{function} d={dimension} {method}: median best {median:.3e}");
        }
    }
}

fn gen_synth(
    n: usize,
    informative: usize,
    noise: usize,
    delta: f64,
    seed: u64,
    out: &Path,
) -> Result<(), PipelineError> {
    let table = synth_generate(n, informative, noise, delta, seed)?;
    write_table_csv(&table, out)?;
    println!(
        "wrote {} ({} rows, {} features)",
        out.display(),
        table.n_rows(),
        table.n_features()
    );
    Ok(())
}

fn print_report(report: &MetricsReport) {
    for h in &report.per_head {
        println!(
            "{}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {:.4}",
            h.label, h.accuracy, h.precision, h.recall, h.f1, h.auc
        );
    }
    let m = &report.macro_avg;
    println!(
        "macro: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {:.4}",
        m.accuracy, m.precision, m.recall, m.f1, m.auc
    );
}
