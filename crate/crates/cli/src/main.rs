mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "hetrain",
    version,
    about = "Encrypted MLP training with federated averaging"
)]
struct Cli {
    /// Training config file. Built-in defaults apply when absent.
    #[arg(long, global = true, env = hetrain_core::config::CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Centralized,
    Distributed,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair under the config's HE parameters.
    Keygen {
        /// Output prefix; writes PREFIX.sk and PREFIX.pk.
        #[arg(long)]
        out: PathBuf,
        /// Seed for reproducible keys (OS entropy otherwise).
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite existing key files.
        #[arg(long)]
        force: bool,
    },

    /// Preprocess a dataset and encrypt it under a public key.
    EncryptData {
        #[arg(long)]
        pk: PathBuf,
        /// Labelled CSV: a header, one column per feature, then the class name.
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        csv: Option<PathBuf>,
        /// Generate this many synthetic rows per class instead of reading a CSV.
        #[arg(long, value_name = "PER_CLASS")]
        synth: Option<usize>,
        /// Rows kept per class when sampling a CSV.
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        /// Seed of the synthetic generator.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seed of the stratified train/test split.
        #[arg(long, default_value_t = 7)]
        split_seed: u64,
        /// Keep the test split out of the encrypted file and write it here
        /// as scaled plaintext CSV.
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Train a model on an encrypted dataset.
    Train {
        #[arg(long, value_enum, default_value = "centralized")]
        mode: Mode,
        /// Encrypted dataset (HEDATA01).
        #[arg(long)]
        data: PathBuf,
        /// Public key used to encrypt the initial model.
        #[arg(long)]
        pk: PathBuf,
        /// Output model file (HEMODEL1).
        #[arg(long)]
        out: PathBuf,
        /// Per-round trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Worker endpoints (host:port), comma separated or repeated.
        #[arg(long, value_delimiter = ',')]
        workers: Vec<String>,
        /// Secret key for per-round plaintext evaluation. This decrypts the
        /// model during training and breaks the privacy model; use it for
        /// experiments only.
        #[arg(long, requires = "probe_data")]
        probe_sk: Option<PathBuf>,
        /// Plaintext CSV scored by the probe.
        #[arg(long, requires = "probe_sk")]
        probe_data: Option<PathBuf>,
    },

    /// Serve masters one at a time.
    Worker {
        /// Address to listen on, e.g. 127.0.0.1:7100 (port 0 picks one).
        #[arg(long)]
        listen: String,
        /// Exit after the first session.
        #[arg(long)]
        once: bool,
        /// Give up on a silent master after this many seconds.
        #[arg(long)]
        idle: Option<f64>,
    },

    /// Predict classes with a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sk: PathBuf,
        /// Plaintext CSV or encrypted dataset (HEDATA01).
        #[arg(long)]
        input: PathBuf,
        /// Run the forward pass under encryption and decrypt only the outputs.
        #[arg(long)]
        encrypted: bool,
        /// Predictions file, one class index per line (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the input's true labels, one per line.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },

    /// Score predictions against true labels.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Number of classes (default: highest label seen plus one).
        #[arg(long)]
        classes: Option<usize>,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = commands::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Keygen { out, seed, force } => commands::keygen(&cfg, &out, seed, force),
        Command::EncryptData {
            pk,
            csv,
            synth,
            per_class,
            seed,
            split_seed,
            holdout,
            out,
        } => {
            let source = match (csv, synth) {
                (Some(path), None) => commands::Source::Csv { path, per_class },
                (None, Some(per_class)) => commands::Source::Synth { per_class, seed },
                _ => unreachable!("clap enforces exactly one source"),
            };
            commands::encrypt_data(&cfg, &pk, source, split_seed, holdout.as_deref(), &out)
        }
        Command::Train {
            mode,
            data,
            pk,
            out,
            trace,
            workers,
            probe_sk,
            probe_data,
        } => commands::train(
            &cfg,
            commands::TrainArgs {
                mode,
                data,
                pk,
                out,
                trace,
                workers,
                probe: probe_sk.zip(probe_data),
            },
        ),
        Command::Worker { listen, once, idle } => commands::worker(&listen, once, idle),
        Command::Infer {
            model,
            sk,
            input,
            encrypted,
            out,
            truth_out,
        } => commands::infer(
            &cfg,
            &model,
            &sk,
            &input,
            encrypted,
            out.as_deref(),
            truth_out.as_deref(),
        ),
        Command::Eval {
            preds,
            truth,
            classes,
            json,
        } => commands::eval(&preds, &truth, classes, json.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hetrain: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
