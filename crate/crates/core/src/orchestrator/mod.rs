//! Run modes: safety pretraining, gated or baseline goal-conditioned
//! exploration, coverage evaluation and failure analysis. Each mode reads its
//! inputs from a [`RunConfig`] and writes its artifacts into the output
//! directory; the config snapshot is written last and marks a finished run.

mod config;
mod coverage;
mod explore;
mod failures;
mod records;

pub use config::{CoverageConfig, EnvId, ExploreConfig, Mode, RunConfig};
pub use coverage::{bin_center, eval_coverage, CoverageCell, CoverageMap};
pub use explore::{check_obs_dim, evaluate, explore_run, run_eval_episode, Controller, ExploreOutcome, Gate, MetricsRow, StepRisk, OBS_DIM};
pub use failures::{analyze_failures, FailureRow};
pub use records::{
    read_coverage, read_metrics, read_steps, write_coverage, write_failures, write_metrics, write_steps, StepRecord,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::approx::Checkpoint;
use crate::envs::{CartPoleGc, ChainWorld};
use crate::goal::GcAgent;
use crate::pretrain::{pretrain_run, stream, EpisodeLog, PretrainOutcome, SafetyAgent};
use crate::{Error, Result};

pub const SAFETY_CKPT: &str = "safety.ckpt";
pub const GC_CKPT: &str = "gc.ckpt";
pub const PRETRAIN_LOG: &str = "pretrain_log.csv";
pub const METRICS: &str = "metrics.csv";
pub const TRANSITIONS: &str = "transitions.csv";
pub const COVERAGE: &str = "coverage.csv";
pub const FAILURES: &str = "failure_trace.csv";

const COVERAGE_STREAM: u64 = 14;

/// Files written by a finished run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
}

/// Runs `cfg.mode`, sending progress lines to `log`.
pub fn run(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    // Held until the run returns. Two runs sharing a directory would
    // truncate each other's logs.
    let lock_path = cfg.out.join(".lock");
    let lock = File::create(&lock_path).map_err(|e| Error::io(&lock_path, e))?;
    match lock.try_lock() {
        Ok(()) => {}
        Err(std::fs::TryLockError::WouldBlock) => return Err(Error::Busy(cfg.out.clone())),
        Err(std::fs::TryLockError::Error(e)) => return Err(Error::io(&lock_path, e)),
    }
    let snapshot = snapshot_path(&cfg.out, cfg.mode);
    if snapshot.exists() {
        std::fs::remove_file(&snapshot).map_err(|e| Error::io(&snapshot, e))?;
    }
    let mut report = match cfg.mode {
        Mode::Pretrain => run_pretrain(cfg, log)?,
        Mode::Explore | Mode::Baseline => run_explore(cfg, log)?,
        Mode::EvalCoverage => run_coverage(cfg, log)?,
        Mode::AnalyzeFailures => run_failures(cfg, log)?,
    };
    std::fs::write(&snapshot, cfg.to_text()).map_err(|e| Error::io(&snapshot, e))?;
    report.written.push(snapshot);
    Ok(report)
}

/// Config snapshot of a `mode` run in `dir`.
pub fn snapshot_path(dir: &Path, mode: Mode) -> PathBuf {
    dir.join(format!("{mode}.config.toml"))
}

/// True when `cfg.out` holds a finished run of `cfg` with identical settings.
pub fn is_finished(cfg: &RunConfig) -> bool {
    std::fs::read_to_string(snapshot_path(&cfg.out, cfg.mode)).is_ok_and(|t| t == cfg.to_text())
}

pub fn load_safety(path: &Path) -> Result<SafetyAgent<f32>> {
    SafetyAgent::from_checkpoint(&Checkpoint::load(path)?)
}

pub fn load_gc(path: &Path) -> Result<GcAgent<f32>> {
    GcAgent::from_checkpoint(&Checkpoint::load(path)?)
}

struct LineFile {
    path: PathBuf,
    w: BufWriter<File>,
}

impl LineFile {
    fn create(path: PathBuf, header: &str) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut lf = LineFile {
            path,
            w: BufWriter::new(f),
        };
        lf.line(header)?;
        Ok(lf)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}")
            .and_then(|_| self.w.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

fn run_pretrain(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let log_path = cfg.out.join(PRETRAIN_LOG);
    let mut file = LineFile::create(log_path.clone(), EpisodeLog::CSV_HEADER)?;
    let mut io_err = None;
    let mut count = 0usize;
    let started = std::time::Instant::now();
    let mut on_episode = |e: &EpisodeLog, s: &crate::pretrain::UpdateStats| {
        if let Err(err) = file.line(&e.csv_row()) {
            io_err.get_or_insert(err);
        }
        count += 1;
        if count % 25 == 0 {
            log(&format!(
                "step {} episodes {count} length {} return {} value_loss {:.4} reach_loss {:.4} alpha {:.4} elapsed {:.0}s",
                e.step,
                e.length,
                e.safety_return,
                s.value_loss,
                s.reach_loss,
                s.alpha,
                started.elapsed().as_secs_f64()
            ));
        }
    };
    let out: PretrainOutcome = match cfg.env {
        EnvId::CartPoleGc => pretrain_run(&CartPoleGc::default(), &cfg.pretrain, &mut on_episode)?,
        EnvId::Chain => pretrain_run(&ChainWorld::default(), &cfg.pretrain, &mut on_episode)?,
    };
    if let Some(e) = io_err {
        return Err(e);
    }
    let ckpt = cfg.out.join(SAFETY_CKPT);
    out.agent.to_checkpoint().save(&ckpt)?;
    log(&format!(
        "pretraining done: {} episodes, {} gradient steps",
        out.episodes.len(),
        out.gradient_steps
    ));
    Ok(RunReport {
        written: vec![log_path, ckpt],
    })
}

fn run_explore(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let safety = match cfg.mode {
        Mode::Explore => Some(load_safety(cfg.safety_ckpt.as_deref().expect("validated"))?),
        _ => None,
    };
    if let Some(s) = &safety {
        explore::check_obs_dim(s)?;
    }
    let metrics_path = cfg.out.join(METRICS);
    let mut file = LineFile::create(metrics_path.clone(), &MetricsRow::CSV_HEADER.join(","))?;
    let mut io_err = None;
    let started = std::time::Instant::now();
    let out = explore_run(cfg, safety.as_ref(), |m| {
        let row = format!(
            "{},{},{:?},{:?}",
            m.step, m.cumulative_mistakes, m.success_rate, m.safety_usage_frac
        );
        if let Err(err) = file.line(&row) {
            io_err.get_or_insert(err);
        }
        log(&format!(
            "step {} mistakes {} success {:.3} safety_usage {:.3} elapsed {:.0}s",
            m.step,
            m.cumulative_mistakes,
            m.success_rate,
            m.safety_usage_frac,
            started.elapsed().as_secs_f64()
        ));
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let dump = cfg.dump.clone().unwrap_or_else(|| cfg.out.join(TRANSITIONS));
    write_steps(&dump, &StepRecord::from_buffer(&out.buffer, &out.risks))?;
    let ckpt = cfg.out.join(GC_CKPT);
    out.agent.to_checkpoint().save(&ckpt)?;
    Ok(RunReport {
        written: vec![metrics_path, dump, ckpt],
    })
}

fn run_coverage(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let gc = load_gc(cfg.gc_ckpt.as_deref().expect("validated"))?;
    if gc.input_dim() != OBS_DIM + 1 {
        return Err(Error::Checkpoint(format!(
            "goal-conditioned policy expects {} inputs, the environment provides {}",
            gc.input_dim(),
            OBS_DIM + 1
        )));
    }
    let safety = cfg.safety_ckpt.as_deref().map(load_safety).transpose()?;
    let gate = match &safety {
        Some(s) if s.obs_dim() != OBS_DIM => {
            return Err(Error::Checkpoint(format!(
                "safety policy observes {} values, the environment provides {OBS_DIM}",
                s.obs_dim()
            )))
        }
        Some(s) => Some(Gate {
            safety: s,
            strategy: cfg.explore.risk,
            th_raise: cfg.explore.th_raise,
            th_lower: cfg.explore.th_lower,
        }),
        None => None,
    };
    let mut rng = stream(cfg.seed, COVERAGE_STREAM);
    let map = eval_coverage(&CartPoleGc::default(), &gc, gate, &cfg.coverage, &mut rng)?;
    let path = cfg.out.join(COVERAGE);
    write_coverage(&path, &map)?;
    log(&format!(
        "coverage: overall {:.3} central {:.3} boundary {:.3}",
        map.overall_mean(),
        map.central_mean(),
        map.boundary_mean()
    ));
    Ok(RunReport { written: vec![path] })
}

fn run_failures(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let safety = load_safety(cfg.safety_ckpt.as_deref().expect("validated"))?;
    if safety.obs_dim() != OBS_DIM {
        return Err(Error::Checkpoint(format!(
            "safety policy observes {} values, the dump holds {OBS_DIM}",
            safety.obs_dim()
        )));
    }
    let records = read_steps(cfg.dump.as_deref().expect("validated"))?;
    let x = &cfg.explore;
    let rows = analyze_failures(&records, &safety, &x.risk, x.th_raise, x.th_lower);
    let path = cfg.out.join(FAILURES);
    write_failures(&path, &rows)?;
    let episodes: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.episode).collect();
    log(&format!("traced {} failed episodes, {} steps", episodes.len(), rows.len()));
    Ok(RunReport { written: vec![path] })
}
