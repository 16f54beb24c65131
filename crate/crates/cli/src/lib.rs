//! The `arcrec` command line: simulation, training, evaluation and
//! exports over CSV inputs, with every artifact traceable to its config
//! and input digests.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use arcrec::simulator::StickerShock;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::Mode;
pub use config::RunConfig;
pub use error::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "arcrec", version, about = "Reference-dependent choice modelling laboratory")]
pub struct Cli {
    /// Random seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market with catalog, purchases and truth.
    Simulate(SimulateArgs),
    /// Fit ArcRec (or the baseline) and write a checkpoint.
    Train(TrainArgs),
    /// Run an evaluation protocol against a checkpoint.
    Evaluate(EvaluateArgs),
    /// Top-K products for one consumer.
    Recommend(RecommendArgs),
    /// Export attribute weights per consumer.
    Awtp(AwtpArgs),
    /// Dump the reference networks as edge lists.
    Graphs(GraphsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StickerShockArg {
    AsWritten,
    PriceAverse,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub consumers: Option<usize>,
    #[arg(long)]
    pub products: Option<usize>,
    /// Draw market sizes from U(1000, 2000).
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, value_enum)]
    pub sticker_shock: Option<StickerShockArg>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub transactions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Train BPR matrix factorization instead of ArcRec.
    #[arg(long)]
    pub baseline: bool,
    /// Uniform attribute weights.
    #[arg(long)]
    pub no_awtp: bool,
    /// Skip propagation over the reference networks.
    #[arg(long)]
    pub no_net: bool,
    /// Use the undecomposed network for every attribute.
    #[arg(long)]
    pub no_decompose: bool,
    /// Hold out products for cold-start evaluation.
    #[arg(long)]
    pub holdout: bool,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth rankings, for correlation mode.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-consumer price sensitivity, for treatment mode.
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Rank treated products within the whole assortment.
    #[arg(long)]
    pub full_assortment: bool,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub consumer: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Also write recommendations.csv and run.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AwtpArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_data(config: &mut RunConfig, data: &DataArgs) {
    if data.catalog.is_some() {
        config.data.catalog = data.catalog.clone();
    }
    if data.transactions.is_some() {
        config.data.transactions = data.transactions.clone();
    }
}

/// Merged configuration: defaults, then the config file, then flags.
pub fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut c = RunConfig::load(cli.config.as_deref())?;
    set(&mut c.seed, cli.seed);
    set(&mut c.workers, cli.workers);
    match &cli.command {
        Command::Simulate(a) => {
            set(&mut c.market.num_consumers, a.consumers);
            set(&mut c.market.num_products, a.products);
            c.market.full_scale |= a.full_scale;
            set(
                &mut c.market.sticker_shock,
                a.sticker_shock.map(|s| match s {
                    StickerShockArg::AsWritten => StickerShock::AsWritten,
                    StickerShockArg::PriceAverse => StickerShock::PriceAverse,
                }),
            );
        }
        Command::Train(a) => {
            apply_data(&mut c, &a.data);
            c.baseline |= a.baseline;
            let ablation = &mut c.model.ablation;
            ablation.use_awtp &= !a.no_awtp;
            ablation.use_arn_propagation &= !a.no_net;
            ablation.decompose_by_attribute &= !a.no_decompose;
            c.cold.holdout |= a.holdout || a.holdout_fraction.is_some();
            set(&mut c.cold.fraction, a.holdout_fraction);
            set(&mut c.training.max_epochs, a.epochs);
            set(&mut c.model.dim, a.dim);
            set(&mut c.training.learning_rate, a.learning_rate);
            set(&mut c.training.batch_size, a.batch_size);
        }
        Command::Evaluate(a) => {
            apply_data(&mut c, &a.data);
            if a.truth.is_some() {
                c.data.truth = a.truth.clone();
            }
            if a.sensitivity.is_some() {
                c.data.sensitivity = a.sensitivity.clone();
            }
            set(&mut c.treatment.repetitions, a.repetitions);
            c.treatment.full_assortment |= a.full_assortment;
        }
        Command::Graphs(a) => apply_data(&mut c, &a.data),
        Command::Recommend(_) | Command::Awtp(_) => {}
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args` (program name first) and runs the command, writing the
/// human-readable summary to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            return write!(stdout, "{e}").map_err(|e| Failure::Runtime(format!("stdout: {e}")));
        }
        Err(e) => {
            let message = e.to_string();
            let message = message.trim_start_matches("error: ").trim_end();
            return Err(Failure::Config(message.to_string()));
        }
    };
    let config = effective_config(&cli)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(&config, &a.out, stdout),
        Command::Train(a) => commands::train_cmd(&config, &a.out, stdout),
        Command::Evaluate(a) => commands::evaluate_cmd(&config, &a.checkpoint, a.mode, &a.out, stdout),
        Command::Recommend(a) => {
            commands::recommend_cmd(&config, &a.checkpoint, &a.consumer, a.k, a.out.as_deref(), stdout)
        }
        Command::Awtp(a) => commands::awtp_cmd(&config, &a.checkpoint, &a.out, stdout),
        Command::Graphs(a) => commands::graphs_cmd(&config, &a.out, stdout),
    }
}
