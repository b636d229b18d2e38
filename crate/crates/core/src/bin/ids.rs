use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use ids_core::features::SplitPart;
use ids_core::nn::ConvBlock;
use ids_core::pipeline::{cmd_evaluate, cmd_predict, cmd_preprocess, cmd_train, Detector, RunConfig};
use ids_core::serve::{serve, ServeConfig};

#[derive(Parser)]
#[command(name = "ids", version, about = "CNN-LSTM flow classifier: preprocess, train, evaluate, predict, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Shared {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true)]
    label_column: Option<String>,
    #[arg(long, global = true)]
    subsample: Option<usize>,
    /// Convolution blocks as FILTERSxKERNEL, comma separated (e.g. 64x3,128x3)
    #[arg(long, global = true, value_parser = parse_conv_blocks)]
    conv_blocks: Option<ConvBlocks>,
    #[arg(long, global = true)]
    pool_size: Option<usize>,
    #[arg(long, global = true)]
    lstm_units: Option<usize>,
    #[arg(long, global = true)]
    dropout_rate: Option<f64>,
    #[arg(long, global = true)]
    dense_units: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    min_delta: Option<f64>,
    /// Grid-search learning rate × batch size
    #[arg(long, global = true)]
    grid: bool,
    #[arg(long, global = true, value_delimiter = ',')]
    grid_learning_rates: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    grid_batch_sizes: Option<Vec<usize>>,
    /// Probability at or above which a flow is labelled malicious
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Compare evaluation metrics with the reference CICIDS2017 figures
    #[arg(long, global = true)]
    compare_reference: bool,
}

#[derive(Clone)]
struct ConvBlocks(Vec<ConvBlock>);

fn parse_conv_blocks(s: &str) -> Result<ConvBlocks, String> {
    s.split(',')
        .map(|b| {
            let (f, k) = b
                .trim()
                .split_once('x')
                .ok_or_else(|| format!("`{b}` is not FILTERSxKERNEL"))?;
            Ok(ConvBlock {
                filters: f.parse().map_err(|e| format!("`{f}`: {e}"))?,
                kernel_size: k.parse().map_err(|e| format!("`{k}`: {e}"))?,
            })
        })
        .collect::<Result<_, String>>()
        .map(ConvBlocks)
}

impl Shared {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put("seed", self.seed.map(Value::from));
        put("label_column", self.label_column.clone().map(Value::from));
        put("subsample", self.subsample.map(Value::from));
        put(
            "conv_blocks",
            self.conv_blocks
                .as_ref()
                .map(|b| serde_json::to_value(&b.0).expect("serializable")),
        );
        put("pool_size", self.pool_size.map(Value::from));
        put("lstm_units", self.lstm_units.map(Value::from));
        put("dropout_rate", self.dropout_rate.map(Value::from));
        put("dense_units", self.dense_units.map(Value::from));
        put("learning_rate", self.learning_rate.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("max_epochs", self.max_epochs.map(Value::from));
        put("patience", self.patience.map(Value::from));
        put("min_delta", self.min_delta.map(Value::from));
        put("grid", self.grid.then_some(Value::Bool(true)));
        put("grid_learning_rates", self.grid_learning_rates.clone().map(Value::from));
        put("grid_batch_sizes", self.grid_batch_sizes.clone().map(Value::from));
        put("threshold", self.threshold.map(Value::from));
        put("compare_reference", self.compare_reference.then_some(Value::Bool(true)));
        m
    }

    fn resolve(&self) -> ids_core::Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean, select, scale and split raw flow CSVs (files or directories)
    Preprocess {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Train on a preprocess output directory and write a checkpoint
    Train {
        #[arg(long)]
        artifacts: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Score a split and write the metrics report and ROC/PR curves
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitPart,
        #[command(flatten)]
        shared: Shared,
    },
    /// Classify raw flow CSVs with a checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Serve a checkpoint over newline-delimited JSON on TCP
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Coalesce requests arriving within this many milliseconds
        #[arg(long)]
        batch_window: Option<u64>,
        #[command(flatten)]
        shared: Shared,
    },
}

fn run(cli: Cli) -> ids_core::Result<()> {
    match cli.command {
        Command::Preprocess { inputs, shared } => {
            let cfg = shared.resolve()?;
            let s = cmd_preprocess(&inputs, &shared.out, &cfg)?;
            let r = s.clean_report;
            println!(
                "rows: {} read, {} dropped (missing {}, non-finite {}, duplicate {}), {} kept",
                r.rows_in,
                r.dropped(),
                r.rows_dropped_missing,
                r.rows_dropped_nonfinite,
                r.rows_dropped_duplicate,
                s.rows
            );
            println!(
                "features: {}; split train/val/test = {}/{}/{}",
                s.features, s.train_rows, s.val_rows, s.test_rows
            );
        }
        Command::Train { artifacts, shared } => {
            let cfg = shared.resolve()?;
            let s = cmd_train(&artifacts, &shared.out, &cfg)?;
            println!(
                "{} epoch(s){}, best epoch {} (val loss {:.6}), lr {} batch {}",
                s.epochs,
                if s.stopped_early { " (early stop)" } else { "" },
                s.best_epoch,
                s.best_val_loss,
                s.learning_rate,
                s.batch_size
            );
            println!("weights sha256 {}", s.weights_sha256);
        }
        Command::Evaluate {
            checkpoint,
            artifacts,
            split,
            shared,
        } => {
            let cfg = shared.resolve()?;
            let r = cmd_evaluate(&checkpoint, &artifacts, split, &shared.out, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Predict {
            checkpoint,
            inputs,
            shared,
        } => {
            let cfg = shared.resolve()?;
            let s = cmd_predict(&checkpoint, &inputs, &shared.out, &cfg)?;
            println!("{} row(s), {} malicious", s.rows, s.malicious);
            if s.unseen_categories > 0 {
                eprintln!("warning: {} unseen categorical value(s) zero-encoded", s.unseen_categories);
            }
        }
        Command::Serve {
            checkpoint,
            bind,
            batch_window,
            shared,
        } => {
            let cfg = shared.resolve()?;
            let detector = Detector::load(&checkpoint)?;
            let handle = serve(
                detector,
                &ServeConfig {
                    bind,
                    threshold: cfg.threshold,
                    batch_window: batch_window.map(Duration::from_millis),
                },
            )?;
            println!("listening on {}", handle.local_addr());
            let stop = handle.stop_flag();
            ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
                .map_err(|e| ids_core::Error::Invalid(e.to_string()))?;
            handle.wait();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
