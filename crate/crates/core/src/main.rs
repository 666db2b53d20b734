use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gdamf_core::harness::{self, ExperimentSpec, Method};
use gdamf_core::metrics;

#[derive(Parser)]
#[command(name = "gdamf", about = "Gradual domain adaptation with multifidelity active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write records, history and a summary.
    Run {
        /// TOML experiment spec.
        spec: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; defaults to `$GDAMF_OUTPUT_ROOT/<spec hash>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "GDAMF_OUTPUT_ROOT")]
        output_root: Option<PathBuf>,
    },
    /// Adjacent-domain distance curve (CSV `K,raw_mean,scaled`) for the
    /// dataset of a spec.
    Distances {
        spec: PathBuf,
        /// Numbers of intermediate domains, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        #[arg(long, default_value_t = metrics::DEFAULT_SUBSAMPLE)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize one or more records.csv files.
    Summarize {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Also write the summary CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { spec, method, budgets, reps, seed, epochs, workers, out, output_root } => {
            let mut spec = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            if let Some(m) = method {
                spec.method = m;
            }
            if let Some(b) = budgets {
                spec.budgets = b;
            }
            if let Some(r) = reps {
                spec.repetitions = r;
            }
            if let Some(s) = seed {
                spec.base_seed = s;
            }
            if let Some(e) = epochs {
                spec.train.epochs = e;
            }
            if let Some(w) = workers {
                spec.workers = w;
            }
            if let Some(o) = out {
                spec.output_dir = Some(o);
            } else if spec.output_dir.is_none() {
                spec.output_dir = output_root.map(|root| root.join(spec.hash()));
            }
            let records = harness::run_experiment(&spec)?;
            let rows = harness::summarize(&records)?;
            print!("{}", harness::summary_table(&rows));
            if let Some(dir) = &spec.output_dir {
                fs::write(dir.join("summary.csv"), harness::summary_to_csv(&rows))?;
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Distances { spec, k_list, subsample, seed, out } => {
            let spec = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            if subsample == 0 {
                bail!("--subsample must be positive");
            }
            let curve = metrics::adjacent_distance_curve(
                |k| spec.dataset.build(None, seed, Some(k)),
                &k_list,
                subsample,
                seed,
            )?;
            match out {
                Some(path) => {
                    fs::write(&path, curve.to_csv())?;
                    // how the distances were estimated, next to the curve
                    let meta = serde_json::json!({
                        "estimator": "exact bottleneck matching, max over classes",
                        "ground_metric": "euclidean",
                        "subsample_per_class": subsample,
                        "seed": seed,
                        "k_list": k_list,
                    });
                    fs::write(path.with_extension("json"), serde_json::to_string_pretty(&meta)?)?;
                }
                None => print!("{}", curve.to_csv()),
            }
        }
        Command::Summarize { records, out } => {
            let mut all = Vec::new();
            for path in &records {
                all.extend(harness::read_records_csv(path).with_context(|| format!("reading {}", path.display()))?);
            }
            let rows = harness::summarize(&all)?;
            print!("{}", harness::summary_table(&rows));
            if let Some(path) = out {
                fs::write(path, harness::summary_to_csv(&rows))?;
            }
        }
    }
    Ok(())
}
