use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hmmlab::experiments::{self, Experiment, ExperimentConfig, TransitionKind, Trend, TrendQuery};
use hmmlab::generators::SupportWeights;

/// Seeded experiments on method-of-moments learning of overcomplete HMMs.
///
/// Each experiment writes `<out>/results.csv` and `<out>/manifest.json`.
/// Unset flags take the experiment's defaults, which are recorded in the
/// manifest.
#[derive(Parser, Debug)]
#[command(name = "hmmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// κ(A) over cycle mixtures: sweep short-cycle length and weight.
    #[command(after_help = Experiment::CycleCond.column_help())]
    CycleCond(RunArgs),
    /// κ(A) over random-digraph mixtures: sweep degree and edge weight.
    #[command(after_help = Experiment::DegreeCond.column_help())]
    DegreeCond(RunArgs),
    /// Recover (T, O) from exact window moments.
    #[command(after_help = Experiment::RecoverExact.column_help())]
    RecoverExact(RunArgs),
    /// Recover (T, O) from sampled windows at several sample sizes.
    #[command(after_help = Experiment::RecoverSampled.column_help())]
    RecoverSampled(RunArgs),
    /// Contraction of the output-conditioned chain on random regular graphs.
    #[command(after_help = Experiment::LowerboundDecay.column_help())]
    LowerboundDecay(RunArgs),
    /// Rank counting, De Bruijn witness and Kruskal checks.
    #[command(after_help = Experiment::Identifiability.column_help())]
    Identifiability(RunArgs),
    /// Rank-correlation trend test on a results CSV. Exits 1 when the trend
    /// is not confirmed.
    Trend(TrendArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Master seed; every random draw is derived from it.
    #[arg(long)]
    seed: u64,
    /// Output directory [default: results/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden state counts.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Alphabet sizes.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Window length.
    #[arg(long)]
    tau: Option<usize>,
    /// Output support size of random observation columns.
    #[arg(long, short = 'k')]
    support: Option<usize>,
    /// Weights on the output support: equal or simplex.
    #[arg(long)]
    weights: Option<SupportWeights>,
    /// Transition families for recovery: cycle, cycle-mixture, union,
    /// degree-mixture, regular, identity.
    #[arg(long, value_delimiter = ',')]
    transitions: Option<Vec<TransitionKind>>,
    /// Short-cycle lengths.
    #[arg(long, value_delimiter = ',')]
    cycles: Option<Vec<usize>>,
    /// Graph degrees.
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<usize>>,
    /// Mixture weights.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Window counts for sampled recovery.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    /// Conditioned steps per output string.
    #[arg(long)]
    steps: Option<usize>,
    /// Output strings per graph.
    #[arg(long)]
    strings: Option<usize>,
    /// Also compute the restricted ℓ2 norm of each conditioned step.
    #[arg(long)]
    certify: bool,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Fix the recovery instance seed instead of deriving it per trial.
    #[arg(long)]
    instance_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrendArgs {
    /// Results CSV.
    csv: PathBuf,
    /// Columns that define a group.
    #[arg(long, value_delimiter = ',', required = true)]
    group_by: Vec<String>,
    /// Column the trend is measured along.
    #[arg(long)]
    order_by: String,
    /// Column whose trend is tested.
    #[arg(long, default_value = "mean_kappa")]
    value: String,
    /// increasing or decreasing.
    #[arg(long)]
    expect: Trend,
}

impl RunArgs {
    fn into_config(self, experiment: Experiment) -> ExperimentConfig {
        let out = self.out.unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));
        let mut c = ExperimentConfig::new(experiment, self.seed, out);
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        set!(n, m, support, weights, transitions, cycles, degrees, eps, samples, steps, strings, trials);
        c.tau = self.tau.or(c.tau);
        c.instance_seed = self.instance_seed;
        c.certify = self.certify;
        c
    }
}

fn run_experiment(experiment: Experiment, args: RunArgs) -> anyhow::Result<()> {
    let config = args.into_config(experiment);
    let report = experiments::run(&config).with_context(|| format!("{experiment} failed"))?;
    println!("{} rows written to {}", report.rows, report.results.display());
    println!("manifest: {}", report.manifest.display());
    println!("{:#}", report.summary);
    Ok(())
}

fn run_trend(args: TrendArgs) -> anyhow::Result<bool> {
    let query = TrendQuery {
        group_by: args.group_by,
        order_by: args.order_by,
        value: args.value,
        expect: args.expect,
    };
    let report = experiments::trend_test_path(&args.csv, &query)
        .with_context(|| format!("trend test on {}", args.csv.display()))?;
    for g in &report.groups {
        println!("{:<40} points {:>3}  rho {:+.4}", g.group, g.points, g.rho);
    }
    println!("median sign-adjusted rho {:+.4}: {}", report.median_rho, if report.pass { "PASS" } else { "FAIL" });
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::CycleCond(a) => run_experiment(Experiment::CycleCond, a),
        Command::DegreeCond(a) => run_experiment(Experiment::DegreeCond, a),
        Command::RecoverExact(a) => run_experiment(Experiment::RecoverExact, a),
        Command::RecoverSampled(a) => run_experiment(Experiment::RecoverSampled, a),
        Command::LowerboundDecay(a) => run_experiment(Experiment::LowerboundDecay, a),
        Command::Identifiability(a) => run_experiment(Experiment::Identifiability, a),
        Command::Trend(a) => match run_trend(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
