//! Command-line front end for the significant-move forecasting toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! invalid input), 3 runtime failure (training, reporting, IO).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sigmove::features::{
    build_dataset, compute_log_returns, dataset_csv_string, returns_csv_string, Direction,
};
use sigmove::forest::{fit_forest, forest_predict_proba, save_forest, ForestConfig};
use sigmove::harness::{
    cell_seed, emit_report, generate_synthetic, parse_grid_config, read_results_csv,
    run_experiment, run_grid, ExperimentSpec, ModelKind, ReportOptions, SynthKind,
};
use sigmove::indicators::{rsi_csv_string, wilder_rsi};
use sigmove::market_data::{
    parse_price_csv_with_ticker, validate_series, write_price_csv, PriceSeries,
};
use sigmove::metrics::roc_curve;
use sigmove::neuralnet::{predict_proba, save_model, train, NetworkSpec, TrainConfig};

#[derive(Parser)]
#[command(
    name = "sigmove",
    version,
    about = "Forecast significant daily stock moves: label, train, benchmark, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a price CSV and report every invariant violation
    Validate {
        /// price CSV with header `date,adj_close`
        csv: PathBuf,
    },
    /// Print daily log returns as CSV
    Returns {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print Wilder RSI values as CSV
    Rsi {
        csv: PathBuf,
        #[arg(long, default_value_t = 14)]
        lookback: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the labeled sliding-window dataset and print it as CSV
    Label {
        csv: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on one series, report test AUC, optionally save it
    Train {
        csv: PathBuf,
        /// mlp | cnn | lstm | rf
        #[arg(long)]
        model: String,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// model output path (text format, exact round trip)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment grid from a config file and emit the report
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// override the config's parallelism degree
        #[arg(long)]
        parallelism: Option<usize>,
        /// train each cell k times and report the mean AUC
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// write train_seconds as 0.000 so result files are bit-reproducible
        #[arg(long)]
        no_timing: bool,
        /// one chart per model instead of one combined chart per direction
        #[arg(long)]
        facet: bool,
    },
    /// Re-emit report files from an existing results CSV
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        facet: bool,
    },
    /// Generate a synthetic price series
    Synth {
        /// gaussian | planted
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    window: usize,
    #[arg(long)]
    fraction: f64,
    /// pos | neg
    #[arg(long)]
    direction: String,
    #[arg(long, default_value_t = 0.75)]
    train_ratio: f64,
    /// z-score features with training-period moments
    #[arg(long)]
    standardize: bool,
}

enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        let (code, label, message) = match self {
            CliError::Usage(m) => (1, "usage", m),
            CliError::Data(m) => (2, "data", m),
            CliError::Runtime(m) => (3, "runtime", m),
        };
        eprintln!("sigmove: {label} error: {message}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            }
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn load_series(path: &PathBuf) -> Result<PriceSeries, CliError> {
    parse_price_csv_with_ticker(path, None).map_err(|e| CliError::Data(e.to_string()))
}

fn parse_direction(s: &str) -> Result<Direction, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn write_or_print(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { csv } => {
            let series = load_series(&csv)?;
            let report = validate_series(&series);
            if report.ok() {
                println!("ok: {} rows, ticker {}", report.row_count, series.ticker);
                Ok(())
            } else {
                for issue in &report.errors {
                    println!("row {}: {} ({})", issue.row, issue.message, issue.kind);
                }
                Err(CliError::Data(format!("{} issue(s) found", report.errors.len())))
            }
        }
        Command::Returns { csv, out } => {
            let series = load_series(&csv)?;
            let returns =
                compute_log_returns(&series).map_err(|e| CliError::Data(e.to_string()))?;
            write_or_print(&returns_csv_string(&returns), out.as_ref())
        }
        Command::Rsi { csv, lookback, out } => {
            let series = load_series(&csv)?;
            let rsi = wilder_rsi(&series, lookback).map_err(|e| CliError::Data(e.to_string()))?;
            write_or_print(&rsi_csv_string(&series, &rsi), out.as_ref())
        }
        Command::Label { csv, task, out } => {
            let series = load_series(&csv)?;
            let direction = parse_direction(&task.direction)?;
            let returns =
                compute_log_returns(&series).map_err(|e| CliError::Data(e.to_string()))?;
            let bundle = build_dataset(
                &returns,
                direction,
                task.fraction,
                task.window,
                task.train_ratio,
                task.standardize,
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            eprintln!(
                "sigma_train {:.6}, threshold {:.6}, {} samples ({} train / {} test)",
                bundle.spec.sigma_train,
                bundle.spec.threshold,
                bundle.dataset.n_samples(),
                bundle.dataset.split_index,
                bundle.dataset.n_samples() - bundle.dataset.split_index,
            );
            write_or_print(&dataset_csv_string(&bundle.dataset), out.as_ref())
        }
        Command::Train { csv, model, task, epochs, batch_size, learning_rate, seed, out } => {
            let series = load_series(&csv)?;
            let direction = parse_direction(&task.direction)?;
            let model: ModelKind = model.parse().map_err(CliError::Usage)?;
            if model == ModelKind::Rsi {
                return Err(CliError::Usage(
                    "rsi is a fixed benchmark, not a trainable model".into(),
                ));
            }
            let returns =
                compute_log_returns(&series).map_err(|e| CliError::Data(e.to_string()))?;
            let bundle = build_dataset(
                &returns,
                direction,
                task.fraction,
                task.window,
                task.train_ratio,
                task.standardize,
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let dataset = &bundle.dataset;
            let test_labels = dataset.test_labels();

            let scores = match model.network_kind() {
                Some(kind) => {
                    let net = NetworkSpec::new(kind, task.window);
                    let config = TrainConfig {
                        epochs,
                        batch_size,
                        learning_rate,
                        seed,
                        ..TrainConfig::default()
                    };
                    let outcome =
                        train(&net, dataset, &config).map_err(|e| CliError::Runtime(e.to_string()))?;
                    println!(
                        "final training loss {:.6}",
                        outcome.loss_history.last().copied().unwrap_or(f64::NAN)
                    );
                    if outcome.single_class_train {
                        eprintln!("warning: training labels are single-class");
                    }
                    if let Some(path) = &out {
                        save_model(&net, &outcome.params, path)
                            .map_err(|e| CliError::Runtime(e.to_string()))?;
                        println!("model saved to {}", path.display());
                    }
                    predict_proba(&net, &outcome.params, &dataset.test_features())
                        .map_err(|e| CliError::Runtime(e.to_string()))?
                }
                None => {
                    let config = ForestConfig { seed, ..ForestConfig::default() };
                    let forest =
                        fit_forest(dataset, &config).map_err(|e| CliError::Runtime(e.to_string()))?;
                    if let Some(path) = &out {
                        save_forest(&forest, path).map_err(|e| CliError::Runtime(e.to_string()))?;
                        println!("model saved to {}", path.display());
                    }
                    forest_predict_proba(&forest, &dataset.test_features())
                        .map_err(|e| CliError::Runtime(e.to_string()))?
                }
            };

            match roc_curve(&scores, test_labels) {
                Ok(roc) => {
                    println!("test AUC {:.6} ({} pos / {} neg)", roc.auc, roc.n_pos, roc.n_neg)
                }
                Err(e) => println!("test AUC undefined: {e}"),
            }
            // same-cell benchmark for quick comparison
            let spec = ExperimentSpec {
                rsi_lookback: task.window,
                ..ExperimentSpec::new(
                    &series.ticker,
                    ModelKind::Rsi,
                    task.window,
                    task.fraction,
                    direction,
                    cell_seed(seed, &series.ticker, ModelKind::Rsi, task.window, task.fraction, direction),
                )
            };
            let rsi_row = run_experiment(&spec, &series);
            match rsi_row.auc {
                Some(auc) => println!("rsi benchmark AUC {auc:.6}"),
                None => println!("rsi benchmark AUC undefined ({})", rsi_row.status),
            }
            Ok(())
        }
        Command::Grid { config, parallelism, repeats, no_timing, facet } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", config.display())))?;
            let mut grid = parse_grid_config(&text).map_err(|e| CliError::Data(e.to_string()))?;
            if let Some(par) = parallelism {
                grid.parallelism = par;
            }
            grid.repeats = repeats.max(1);
            grid.record_timing = !no_timing;
            let rows = run_grid(&grid).map_err(|e| match e {
                sigmove::harness::HarnessError::Data { .. } => CliError::Data(e.to_string()),
                other => CliError::Runtime(other.to_string()),
            })?;
            let options = ReportOptions { facet_per_model: facet };
            let files = emit_report(&rows, &grid.output_dir, &options)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let defined = rows.iter().filter(|r| r.auc_defined()).count();
            println!(
                "{} cells ({} with defined AUC); {} report file(s) in {}",
                rows.len(),
                defined,
                files.len(),
                grid.output_dir.display()
            );
            Ok(())
        }
        Command::Report { results, out, facet } => {
            let rows = read_results_csv(&results).map_err(|e| CliError::Data(e.to_string()))?;
            let options = ReportOptions { facet_per_model: facet };
            let files =
                emit_report(&rows, &out, &options).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{} report file(s) in {}", files.len(), out.display());
            Ok(())
        }
        Command::Synth { kind, n, seed, out } => {
            let kind: SynthKind = kind.parse().map_err(CliError::Usage)?;
            let series =
                generate_synthetic(kind, n, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            write_price_csv(&series, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{} days written to {}", series.len(), out.display());
            Ok(())
        }
    }
}
