use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use safex_core::orchestrator::{self, Mode, RunConfig};
use safex_core::RiskKind;

// Training allocates and frees batch-sized arrays on every step; the system
// allocator returns those to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "safex", version, about = "Safety pretraining and risk-gated goal-conditioned exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the safety policy and its value and reachability critics.
    Pretrain(Common),
    /// Train the goal-conditioned policy behind the risk gate.
    Explore(Common),
    /// Train the goal-conditioned policy without any gate.
    Baseline(Common),
    /// Success rates over a start-by-goal grid.
    EvalCoverage(Common),
    /// Re-score failed episodes of a transition dump with the safety critics.
    AnalyzeFailures(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file with `key = value` settings under `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    safety_ckpt: Option<PathBuf>,
    #[arg(long)]
    gc_ckpt: Option<PathBuf>,
    /// Raise and lower thresholds, e.g. `70,30`.
    #[arg(long, value_name = "RAISE,LOWER")]
    thresholds: Option<String>,
    /// Risk strategy: time, constraint or time-constraint.
    #[arg(long)]
    strategy: Option<String>,
    /// Reachability weight in the safety actor loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Transition dump to write (explore, baseline) or read (analyze-failures).
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn parse_thresholds(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .with_context(|| format!("thresholds `{s}` must be RAISE,LOWER"))?;
    let raise: f64 = a.trim().parse().with_context(|| format!("bad raise threshold `{a}`"))?;
    let lower: f64 = b.trim().parse().with_context(|| format!("bad lower threshold `{b}`"))?;
    Ok((raise, lower))
}

/// Defaults, then the config file, then flags.
fn build_config(mode: Mode, c: Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(mode);
    if let Some(path) = &c.config {
        cfg.load_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        if cfg.mode != mode {
            bail!("config file sets mode `{}` but the subcommand is `{mode}`", cfg.mode);
        }
    }
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = c.out {
        cfg.out = out;
    }
    if let Some(p) = c.safety_ckpt {
        cfg.safety_ckpt = Some(p);
    }
    if let Some(p) = c.gc_ckpt {
        cfg.gc_ckpt = Some(p);
    }
    if let Some(t) = c.thresholds {
        let (raise, lower) = parse_thresholds(&t)?;
        cfg.explore.th_raise = raise;
        cfg.explore.th_lower = lower;
    }
    if let Some(s) = c.strategy {
        cfg.explore.risk.kind = s.parse::<RiskKind>()?;
    }
    if let Some(l) = c.lambda {
        cfg.pretrain.lambda = l;
    }
    if let Some(d) = c.dump {
        cfg.dump = Some(d);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Pretrain(c) => (Mode::Pretrain, c),
        Command::Explore(c) => (Mode::Explore, c),
        Command::Baseline(c) => (Mode::Baseline, c),
        Command::EvalCoverage(c) => (Mode::EvalCoverage, c),
        Command::AnalyzeFailures(c) => (Mode::AnalyzeFailures, c),
    };
    let result = build_config(mode, common).and_then(|cfg| {
        let report = orchestrator::run(&cfg, &mut |line| eprintln!("[{mode}] {line}"))?;
        for p in report.written {
            println!("{}", p.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
