use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shrinkmean::io::{Orientation, ReadOptions, ReportFormat};
use shrinkmean::CoefficientPolicy;
use shrinkmean_cli::{cmd_epr, cmd_estimate, cmd_simulate, cmd_sweep, CliError, EprArgs, EstimateArgs, EstimateFormat, Overrides, QArg};

#[derive(Parser)]
#[command(name = "shrinkmean", version, about = "Shrinkage estimation of high-dimensional means")]
struct Cli {
    /// Worker threads for Monte Carlo loops (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo risks for every design in a config file.
    Simulate(RunArgs),
    /// Risks over a grid of correlation parameters.
    Sweep(RunArgs),
    /// Apply one estimator to a data matrix.
    Estimate(EstimateCli),
    /// Expected prediction risk over random train/test splits.
    Epr(EprCli),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct ReadArgs {
    /// Field delimiter (single byte).
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
    /// The first column holds row labels.
    #[arg(long)]
    label_column: bool,
    /// Rows are genes and columns are samples.
    #[arg(long)]
    genes_by_samples: bool,
}

impl ReadArgs {
    fn options(&self) -> Result<ReadOptions, CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::Config("`delimiter`: must be a single ASCII character".into()));
        }
        Ok(ReadOptions {
            delimiter: self.delimiter as u8,
            header: !self.no_header,
            label_column: self.label_column,
            orientation: if self.genes_by_samples {
                Orientation::GenesBySamples
            } else {
                Orientation::SamplesByGenes
            },
        })
    }
}

#[derive(Args)]
struct EstimateCli {
    data: PathBuf,
    /// identity, estimated_diag, diagonal:<csv> or dense:<csv>.
    #[arg(long, default_value = "estimated_diag")]
    q: QArg,
    #[arg(long)]
    estimator: String,
    /// Recorded in the output; estimators themselves are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "raw")]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: EstimateFormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    read: ReadArgs,
}

#[derive(Args)]
struct EprCli {
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    train_sizes: Vec<usize>,
    /// Keep the first k columns.
    #[arg(long)]
    genes: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "mean,js,bb,tong,proposed")]
    estimators: Vec<String>,
    #[arg(long, value_enum, default_value = "raw")]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    read: ReadArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Text,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Text => ReportFormat::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateFormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Raw,
    Clamped,
}

impl From<PolicyArg> for CoefficientPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Raw => CoefficientPolicy::Raw,
            PolicyArg::Clamped => CoefficientPolicy::Clamped,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a.config, &overrides(&a, cli.workers)),
        Command::Sweep(a) => cmd_sweep(&a.config, &overrides(&a, cli.workers)),
        Command::Estimate(a) => cmd_estimate(&EstimateArgs {
            read: a.read.options()?,
            data: a.data,
            q: a.q,
            estimator: a.estimator,
            policy: a.policy.into(),
            seed: a.seed,
            format: match a.format {
                EstimateFormatArg::Csv => EstimateFormat::Csv,
                EstimateFormatArg::Json => EstimateFormat::Json,
            },
            out: a.out,
        }),
        Command::Epr(a) => cmd_epr(&EprArgs {
            read: a.read.options()?,
            data: a.data,
            train_sizes: a.train_sizes,
            genes: a.genes,
            reps: a.reps,
            seed: a.seed,
            estimators: a.estimators,
            policy: a.policy.into(),
            workers: cli.workers,
            format: a.format.into(),
            out: a.out,
        }),
    }
}

fn overrides(a: &RunArgs, workers: Option<usize>) -> Overrides {
    Overrides {
        workers,
        seed: a.seed,
        out: a.out.clone(),
        format: a.format.map(Into::into),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shrinkmean: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
