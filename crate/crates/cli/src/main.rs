//! `fluc-sim`: run, sweep, size and audit traffic-steering experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluc_core::harness::audit::audit_run;
use fluc_core::harness::compress::{run_compression, write_compression};
use fluc_core::harness::run::{load_models, save_models};
use fluc_core::harness::sweep::{sweep, write_sweep};
use fluc_core::harness::{run_with, write_run, AlgorithmMode, RunConfig};
use fluc_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fluc-sim",
    version,
    about = "Dual-RAT traffic-steering simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics.
    Run(RunArgs),
    /// Run every (algorithm, UE count, seed) combination.
    Sweep(SweepArgs),
    /// Grow and prune a model to find an adequate hidden size.
    Compress(CompressArgs),
    /// Re-check a run directory written by `run`.
    Audit {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small three-cell scenario instead of the full one.
    #[arg(long)]
    desk: bool,
    /// Run length (for `compress`, the TTI budget of the pre-simulation).
    #[arg(long)]
    ttis: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.desk) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, true) => RunConfig::desk(),
            (None, false) => RunConfig::default(),
        };
        if let Some(t) = self.ttis {
            cfg.ttis = t;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    algorithm: Option<AlgorithmMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mean number of active UEs.
    #[arg(long)]
    ues: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Write the final models to `<prefix>-<group>.mlp`.
    #[arg(long, value_name = "PREFIX")]
    save_model: Option<PathBuf>,
    /// Initialise the global models from `<prefix>-<group>.mlp`.
    #[arg(long, value_name = "PREFIX")]
    load_model: Option<PathBuf>,
    /// Also write every group's global model after each round.
    #[arg(long)]
    save_fed_rounds: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated mean UE counts.
    #[arg(long, value_delimiter = ',', default_value = "25,35,45,55,65")]
    ues: Vec<f64>,
    /// Seeds as `a..b` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..5")]
    seeds: String,
    #[arg(long, value_delimiter = ',', default_value = "ktfluc,fli,fl,dil,cl")]
    algorithms: Vec<AlgorithmMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {s:?}"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(a) = args.algorithm {
        cfg.algorithm = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.ues {
        cfg.avg_ues = m;
    }
    let globals = match &args.load_model {
        Some(p) => load_models(p)?,
        None => Default::default(),
    };
    let out = run_with(&cfg, globals, args.save_fed_rounds)?;
    write_run(&args.out, &out)?;
    if let Some(prefix) = &args.save_model {
        for p in save_models(&out, prefix)? {
            log::info!("saved {}", p.display());
        }
    }
    let m = &out.summary.metrics;
    println!(
        "{} seed {}: mean reward {:.4}, final-quarter reward {:.4}, GBR delay {:.3} ms, non-GBR throughput {:.2} Mbit/s",
        cfg.algorithm,
        cfg.seed,
        m.mean_reward,
        m.final_quarter_reward,
        m.mean_gbr_delay_ms,
        m.mean_non_gbr_throughput_bps / 1e6
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let seeds = parse_seeds(&args.seeds)?;
    let (runs, table) = sweep(&cfg, &args.algorithms, &args.ues, &seeds)?;
    write_sweep(&args.out, &cfg, &runs, &table)?;
    for r in &table {
        let (mean, std) = r.get("final_quarter_reward")?;
        println!(
            "{:7} M={:<5} final-quarter reward {mean:.4} ± {std:.4}",
            r.algorithm.as_str(),
            r.avg_ues
        );
    }
    Ok(())
}

fn compress(args: CompressArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(t) = args.common.ttis {
        cfg.compression.max_ttis = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = run_compression(&cfg)?;
    write_compression(&args.out, &out)?;
    let r = &out.report;
    println!(
        "peak hidden {:?}, recommended hidden {:?}, {} pruning points, finished: {}",
        r.peak_hidden,
        r.recommended_hidden,
        r.history.len(),
        r.finished
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Compress(a) => compress(a),
        Command::Audit { run } => audit_run(&run).map(|r| {
            println!(
                "audit ok: {} rows over {} TTIs, {} bytes generated = {} delivered + {} queued",
                r.rows, r.ttis, r.generated_bytes, r.delivered_bytes, r.queued_bytes
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seeds("7,9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
