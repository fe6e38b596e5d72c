//! Command-line entry points: `run`, `sweep` and `compare`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{emit_results, load_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::orchestrator::{degradation, run_experiment, ExperimentResult};

#[derive(Parser)]
#[command(
    name = "trustfed",
    version,
    about = "Decentralized federated learning simulator with evidential trust-aware personalization"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment from a YAML/JSON config file
    Run {
        /// Path to the experiment config
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.jsonl / summary.json / accuracy.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value of a single swept parameter
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config key, e.g. partition.concentration
        #[arg(long)]
        param: String,
        /// Comma-separated values to sweep over
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run two configs under equal conditions and report deltas
    Compare {
        /// Exactly two comma-separated config paths
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        /// Override both configs' master seeds
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse arguments and execute; returns the process exit code.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => run_one(&config, seed, out.as_deref()),
        Command::Sweep {
            config,
            param,
            values,
            seed,
            out,
        } => sweep(&config, &param, &values, seed, out.as_deref()),
        Command::Compare { configs, seed, out } => compare(&configs, seed, out.as_deref()),
    }
}

fn apply_seed(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    cfg
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn run_one(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let cfg = apply_seed(load_config(config_path)?, seed);
    let out_dir = output_dir(&cfg, out);
    let result = run_experiment(cfg)?;
    emit_results(&result, &out_dir)?;
    print_summary(&result);
    println!("results written to {}", out_dir.display());
    Ok(())
}

fn print_summary(result: &ExperimentResult) {
    for m in &result.history {
        println!(
            "round {:>3}  mean_acc {:.4}  std_acc {:.4}",
            m.round, m.mean_acc, m.std_acc
        );
    }
    println!(
        "final mean_acc {:.4}  std_acc {:.4}  rounds_to_peak {}",
        result.summary.final_mean_acc,
        result.summary.final_std_acc,
        result
            .summary
            .rounds_to_peak
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-".into())
    );
}

/// Overwrite one dotted config key on a JSON view of the config, then
/// re-validate. Every other field, including every derived seed, stays
/// untouched so differences are attributable to the swept parameter alone.
pub fn set_config_value(
    cfg: &ExperimentConfig,
    path: &str,
    raw_value: &str,
) -> Result<ExperimentConfig> {
    let mut tree = serde_json::to_value(cfg)
        .map_err(|e| Error::Validation(format!("sweep: {e}")))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Validation(format!("sweep: malformed param '{path}'")));
    }
    let mut cursor = &mut tree;
    for seg in &segments[..segments.len() - 1] {
        cursor = cursor.get_mut(*seg).ok_or_else(|| {
            Error::Validation(format!("sweep: unknown config path '{seg}' in '{path}'"))
        })?;
    }
    let object = cursor
        .as_object_mut()
        .ok_or_else(|| Error::Validation(format!("sweep: '{path}' does not address a field")))?;
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    object.insert(segments.last().unwrap().to_string(), value);

    let updated: ExperimentConfig = serde_json::from_value(tree)
        .map_err(|e| Error::Validation(format!("sweep: {e}")))?;
    updated.finalize()
}

fn sweep(
    config_path: &Path,
    param: &str,
    values: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let base = apply_seed(load_config(config_path)?, seed);
    let mut rows = Vec::new();
    for value in values {
        let cfg = set_config_value(&base, param, value)?;
        let result = run_experiment(cfg)?;
        if let Some(out_dir) = out {
            emit_results(&result, &out_dir.join(format!("{param}={value}")))?;
        }
        rows.push((
            value.clone(),
            result.summary.final_mean_acc,
            result.summary.final_std_acc,
            result.summary.rounds_to_peak,
        ));
    }

    println!("{:<32} {:>10} {:>14} {:>13} {:>15}", "param", "value", "final_mean_acc", "final_std_acc", "rounds_to_peak");
    for (value, mean, std, peak) in &rows {
        println!(
            "{:<32} {:>10} {:>14.4} {:>13.4} {:>15}",
            param,
            value,
            mean,
            std,
            peak.map(|r| r.to_string()).unwrap_or_else(|| "-".into())
        );
    }

    if let Some(out_dir) = out {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("sweep.csv");
        let mut csv = String::from("param,value,final_mean_acc,final_std_acc,rounds_to_peak\n");
        for (value, mean, std, peak) in &rows {
            csv.push_str(&format!(
                "{param},{value},{mean},{std},{}\n",
                peak.map(|r| r.to_string()).unwrap_or_default()
            ));
        }
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn compare(configs: &[PathBuf], seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    if configs.len() != 2 {
        return Err(Error::Validation(format!(
            "compare needs exactly two configs, got {}",
            configs.len()
        )));
    }
    let cfg_a = apply_seed(load_config(&configs[0])?, seed);
    let cfg_b = apply_seed(load_config(&configs[1])?, seed);
    let result_a = run_experiment(cfg_a)?;
    let result_b = run_experiment(cfg_b)?;

    if let Some(out_dir) = out {
        emit_results(&result_a, &out_dir.join("a"))?;
        emit_results(&result_b, &out_dir.join("b"))?;
    }

    let name = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for (path, result) in [(&configs[0], &result_a), (&configs[1], &result_b)] {
        println!(
            "{:<24} final_mean_acc {:.4}  std {:.4}  rounds_to_peak {}",
            name(path),
            result.summary.final_mean_acc,
            result.summary.final_std_acc,
            result
                .summary
                .rounds_to_peak
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".into())
        );
    }
    println!(
        "accuracy delta (a - b): {:.2} percentage points",
        degradation(&result_a, &result_b)
    );
    if let (Some(pa), Some(pb)) = (
        result_a.summary.rounds_to_peak,
        result_b.summary.rounds_to_peak,
    ) {
        println!("rounds_to_peak delta (a - b): {}", pa as i64 - pb as i64);
    }
    Ok(())
}
