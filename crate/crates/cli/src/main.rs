//! Command-line front end for the priming harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use priming::error::{Error, ErrorClass};
use priming::runner::{validate, RawConfig, Runner};

#[derive(Parser)]
#[command(
    name = "priming",
    version,
    about = "Context-length priming experiments on minimal pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config, datasets and annotations.
    Validate(Common),
    /// Build the trial manifest only.
    Trials(Common),
    /// Score every trial, reusing the cache.
    Score(Common),
    /// Aggregate, regression and margin tables.
    Analyze(Common),
    /// Render SVG plots from the trial results.
    Plot(Common),
    /// All stages in order.
    Run(Common),
    /// Suite-by-suite cross-priming matrix.
    CrossPrime(Common),
    /// Phenomenon similarity matrices and correlations.
    Similarity(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (INI).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Endpoint of a remote scoring service; implies backend.kind = remote.
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// macro or micro.
    #[arg(long)]
    averaging: Option<String>,
    /// Any config key, as section.key=value. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn raw(&self) -> Result<RawConfig, Error> {
        let mut raw = RawConfig::load(&self.config)?;
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set {s:?} must look like section.key=value"))
            })?;
            raw.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            raw.set("trials.seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            raw.set_path("output.dir", out)?;
        }
        if let Some(url) = &self.backend_url {
            raw.set("backend.kind", "remote")?;
            raw.set("backend.url", url)?;
        }
        if let Some(n) = self.max_concurrency {
            raw.set("backend.max_concurrency", &n.to_string())?;
        }
        if let Some(a) = &self.averaging {
            raw.set("analysis.averaging", a)?;
        }
        Ok(raw)
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    let (common, stage) = match &cmd {
        Command::Validate(c) => {
            println!("{}", validate(&c.raw()?)?);
            return Ok(());
        }
        Command::Trials(c) => (c, "trials"),
        Command::Score(c) => (c, "score"),
        Command::Analyze(c) => (c, "analyze"),
        Command::Plot(c) => (c, "plot"),
        Command::Run(c) => (c, "run"),
        Command::CrossPrime(c) => (c, "cross-prime"),
        Command::Similarity(c) => (c, "similarity"),
    };
    let mut runner = Runner::new(&common.raw()?)?;
    match stage {
        "trials" => println!("{} trials", runner.trials()?.len()),
        "score" => println!("{} trials scored", runner.score()?.len()),
        "analyze" => runner.analyze()?,
        "plot" => {
            for p in runner.plot()? {
                println!("{}", p.display());
            }
        }
        "run" => {
            runner.run()?;
        }
        "cross-prime" => println!("{} cells", runner.cross_prime()?.len()),
        "similarity" => {
            for p in runner.similarity()? {
                println!("{p}");
            }
        }
        _ => unreachable!(),
    }
    println!("outputs in {}", runner.out_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Backend => 3,
                ErrorClass::Data => 4,
            })
        }
    }
}
