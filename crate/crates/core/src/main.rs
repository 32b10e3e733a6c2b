use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use bernmix::data::{load_dataset, load_labels, LoadOptions};
use bernmix::mc3::{default_heats, RunConfig};
use bernmix::pipeline::{run_to_dir, score, write_simulation, write_zoo};
use bernmix::simgen::{generate, SimSpec};
use bernmix::zoo::load_zoo;
use bernmix::{Error, Hyperparams, PriorK};

/// Bayesian clustering of binary data with mixtures of multivariate
/// Bernoulli distributions and an unknown number of clusters.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coupled sampler and write results to a new directory.
    Run(RunArgs),
    /// Simulate a dataset from a Bernoulli mixture.
    Simulate(SimulateArgs),
    /// Compare a clustering with reference labels.
    Score(ScoreArgs),
    /// Convert the UCI Zoo file into a binary matrix and class labels.
    PrepareZoo(ZooArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterPrior {
    Poisson,
    Uniform,
}

#[derive(Args)]
struct RunArgs {
    /// Binary data file (0/1/NA, comma or whitespace separated).
    #[arg(long)]
    data: PathBuf,
    /// Skip the first line of the data file.
    #[arg(long)]
    header: bool,
    /// Output directory; must not exist.
    #[arg(long)]
    out: PathBuf,
    /// Largest number of clusters considered.
    #[arg(long)]
    kmax: usize,
    #[arg(long, default_value_t = 4)]
    n_chains: usize,
    /// Comma-separated heats, starting with 1 [default: linear from 1 to 0.3].
    #[arg(long, value_delimiter = ',')]
    heats: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ClusterPrior::Poisson)]
    cluster_prior: ClusterPrior,
    /// Number of cycles (10 sampler iterations each).
    #[arg(long)]
    m: usize,
    #[arg(long)]
    burn: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated Dirichlet parameters, one per cluster [default: all 1].
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// True cluster labels, used only to orient the reported labels.
    #[arg(long)]
    z_true: Option<PathBuf>,
    /// Probability of ejecting an empty cluster.
    #[arg(long, default_value_t = 0.2)]
    ejection_alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Probability that a row has missing entries.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// Binomial probability of each entry of such a row being missing.
    #[arg(long, default_value_t = 0.3)]
    missing_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; must not exist.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    membership: PathBuf,
    /// Column of the membership file to score (e.g. ECR).
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct ZooArgs {
    /// Raw `zoo.data` file.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; must not exist.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_run(a: RunArgs) -> Result<(), Error> {
    let prior = match a.cluster_prior {
        ClusterPrior::Poisson => PriorK::TruncatedPoisson,
        ClusterPrior::Uniform => PriorK::Uniform,
    };
    let mut hyper = Hyperparams::new(a.kmax, prior).with_theta_prior(a.alpha, a.beta);
    if let Some(g) = a.gamma {
        hyper.gamma = g;
    }
    hyper.ejection_target = a.ejection_alpha;
    hyper.validate()?;
    let heats = a.heats.unwrap_or_else(|| default_heats(a.n_chains));
    if heats.len() != a.n_chains {
        return Err(Error::InvalidConfig(format!(
            "{} heats given for {} chains",
            heats.len(),
            a.n_chains
        )));
    }
    let config = RunConfig {
        heats,
        cycles: a.m,
        burn: a.burn,
        seed: a.seed,
        threads: a.threads,
    };
    config.validate()?;
    if a.out.exists() {
        return Err(Error::OutputExists(a.out));
    }
    let data = load_dataset(
        &a.data,
        LoadOptions {
            skip_header: a.header,
        },
    )?;
    let truth = a.z_true.map(|p| load_labels(p, None)).transpose()?;
    let outcome = run_to_dir(&data, &hyper, &config, truth.as_deref(), &a.out)?;
    print!("{}", bernmix::pipeline::describe(&outcome.summary));
    println!("results written to {}", a.out.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let mut spec = SimSpec::new(a.n, a.d, a.k, a.seed);
    spec.missing_row_prob = a.rho;
    spec.missing_fraction = a.missing_fraction;
    let sim = generate(&spec)?;
    for path in write_simulation(&sim, &a.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<(), Error> {
    let membership = load_labels(&a.membership, a.column.as_deref())?;
    let truth = load_labels(&a.truth, None)?;
    println!("{}", score(&membership, &truth)?);
    Ok(())
}

fn cmd_prepare_zoo(a: ZooArgs) -> Result<(), Error> {
    let zoo = load_zoo(&a.input)?;
    for path in write_zoo(&zoo, &a.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Score(a) => cmd_score(a),
        Command::PrepareZoo(a) => cmd_prepare_zoo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
    }
}
