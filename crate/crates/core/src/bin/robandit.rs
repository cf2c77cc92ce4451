use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use robandit::harness::{self, ExperimentConfig, SweepOptions};
use robandit::rng::SeedTree;
use robandit::{BanditInstance, Error, NoiseKind};

#[derive(Parser)]
#[command(name = "robandit", version, about = "Batched robust and locally private linear bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Gaussian,
    Uniform,
    Zero,
}

impl From<Noise> for NoiseKind {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Gaussian => NoiseKind::Gaussian,
            Noise::Uniform => NoiseKind::Uniform,
            Noise::Zero => NoiseKind::Zero,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance (unit-norm actions and parameter) as JSON.
    GenInstance {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        arms: usize,
        #[arg(long, value_enum, default_value = "gaussian")]
        noise: Noise,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (seed, variant) cell of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "ROBANDIT_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// A count `N` (seeds 0..N) or a comma-separated list such as `3,7,11`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = "ROBANDIT_WORKERS")]
        workers: Option<usize>,
        /// Keep cells already completed under the same configuration.
        #[arg(long)]
        resume: bool,
    },
    /// Recompute summary.csv from stored traces and print it as a table.
    Summarize {
        #[arg(long, env = "ROBANDIT_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Comma-separated play counts; defaults to the configured checkpoints.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
    },
    /// Recompute plotdata.csv from stored traces.
    PlotData {
        #[arg(long, env = "ROBANDIT_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Error> {
    let bad = |t: &str| Error::ConfigInvalid {
        field: "seeds".into(),
        message: format!("`{t}` is neither a count nor a comma-separated list of seeds"),
    };
    if !text.contains(',') {
        let n: u64 = text.trim().parse().map_err(|_| bad(text))?;
        return Ok((0..n).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad(text)))
        .collect()
}

fn gen_instance(dim: usize, arms: usize, noise: Noise, seed: u64, out: Option<&Path>) -> Result<(), Error> {
    let mut rng = SeedTree::new(seed).child("instance", 0).rng(0);
    let inst = BanditInstance::random(dim, arms, noise.into(), &mut rng)?;
    let json = inst.to_json();
    match out {
        Some(p) => harness::write_atomic(p, json.as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(config: &Path, out: PathBuf, seeds: Option<&str>, workers: Option<usize>, resume: bool) -> Result<bool, Error> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s)?;
        cfg.validate()?;
    }
    let opts = SweepOptions {
        out_dir: out,
        workers,
        resume,
    };
    let result = harness::run_sweep(&cfg, &opts)?;
    print!("{}", result.summary.to_text());
    for (variant, s) in &result.survival {
        println!("{variant}: optimal arm survived in {}/{} runs", s.survived, s.runs);
    }
    let failed: Vec<_> = result.failures().collect();
    for c in &failed {
        eprintln!("cell {}/{} failed", c.variant, c.seed);
    }
    if let Some(t) = result.wall_clock {
        log::info!("sweep finished in {:.2?}", t);
    }
    Ok(failed.is_empty())
}

fn summarize(out: &Path, checkpoints: &[u64]) -> Result<(), Error> {
    let mut result = harness::load_results(out)?;
    if !checkpoints.is_empty() {
        result.summary = harness::summarize(&result.cells, checkpoints)?;
    }
    harness::write_atomic(&out.join("summary.csv"), result.summary.to_csv().as_bytes())?;
    print!("{}", result.summary.to_text());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenInstance {
            dim,
            arms,
            noise,
            seed,
            out,
        } => gen_instance(dim, arms, noise, seed, out.as_deref()).map(|_| true),
        Command::Run {
            config,
            out,
            seeds,
            workers,
            resume,
        } => run(&config, out, seeds.as_deref(), workers, resume),
        Command::Summarize { out, checkpoints } => summarize(&out, &checkpoints).map(|_| true),
        Command::PlotData { out } => harness::load_results(&out)
            .and_then(|r| harness::emit_plotdata(&r.cells, &out.join("plotdata.csv")))
            .map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e @ Error::ConfigInvalid { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
