use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::{Table, Value};

use crate::goal::{GcConfig, HerSpec};
use crate::pretrain::PretrainConfig;
use crate::risk::{RiskKind, RiskStrategy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pretrain,
    Explore,
    Baseline,
    EvalCoverage,
    AnalyzeFailures,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pretrain => "pretrain",
            Mode::Explore => "explore",
            Mode::Baseline => "baseline",
            Mode::EvalCoverage => "eval-coverage",
            Mode::AnalyzeFailures => "analyze-failures",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pretrain" => Mode::Pretrain,
            "explore" => Mode::Explore,
            "baseline" => Mode::Baseline,
            "eval-coverage" => Mode::EvalCoverage,
            "analyze-failures" => Mode::AnalyzeFailures,
            other => return Err(Error::Config(format!("unknown mode `{other}`"))),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    CartPoleGc,
    Chain,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::CartPoleGc => "cartpole-gc",
            EnvId::Chain => "chain",
        }
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole-gc" => Ok(EnvId::CartPoleGc),
            "chain" => Ok(EnvId::Chain),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Exploration-phase settings shared by the gated and baseline loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploreConfig {
    pub total_steps: usize,
    pub th_raise: f64,
    pub th_lower: f64,
    pub risk: RiskStrategy,
    pub her: HerSpec,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Critic count of the ungated baseline learner.
    pub baseline_critics: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            total_steps: 100_000,
            th_raise: 70.0,
            th_lower: 30.0,
            risk: RiskStrategy::default(),
            her: HerSpec::default(),
            eval_every: 5_000,
            eval_episodes: 50,
            baseline_critics: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub start_bins: usize,
    pub goal_bins: usize,
    pub episodes_per_cell: usize,
    /// Start positions and goals span `[-limit, limit]`.
    pub limit: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            start_bins: 8,
            goal_bins: 8,
            episodes_per_cell: 4,
            limit: 2.16,
        }
    }
}

/// Everything one invocation needs. Built from defaults, then a config
/// file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub env: EnvId,
    pub seed: u64,
    pub out: PathBuf,
    pub safety_ckpt: Option<PathBuf>,
    pub gc_ckpt: Option<PathBuf>,
    /// Transition dump read by failure analysis.
    pub dump: Option<PathBuf>,
    pub pretrain: PretrainConfig,
    pub gc: GcConfig,
    pub explore: ExploreConfig,
    pub coverage: CoverageConfig,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            env: EnvId::CartPoleGc,
            seed: 0,
            out: PathBuf::from("runs/default"),
            safety_ckpt: None,
            gc_ckpt: None,
            dump: None,
            pretrain: PretrainConfig::default(),
            gc: GcConfig::default(),
            explore: ExploreConfig::default(),
            coverage: CoverageConfig::default(),
        }
    }

    /// Seeds every training component from the single run seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.pretrain.seed = seed;
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `key = value` settings grouped in `[section]`s. Unknown
    /// sections or keys are rejected.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for (section, body) in &table {
            let Value::Table(body) = body else {
                return Err(Error::Config(format!("`{section}` must be a [section]")));
            };
            for (key, v) in body {
                self.apply(section, key, v)
                    .map_err(|e| Error::Config(format!("{section}.{key}: {e}")))?;
            }
        }
        Ok(())
    }

    fn apply(&mut self, section: &str, key: &str, v: &Value) -> Result<()> {
        let p = &mut self.pretrain;
        let g = &mut self.gc;
        let x = &mut self.explore;
        let c = &mut self.coverage;
        match (section, key) {
            ("run", "mode") => self.mode = text(v)?.parse()?,
            ("run", "env") => self.env = text(v)?.parse()?,
            ("run", "seed") => self.set_seed(count(v)? as u64),
            ("run", "out") => self.out = text(v)?.into(),
            ("run", "safety_ckpt") => self.safety_ckpt = Some(text(v)?.into()),
            ("run", "gc_ckpt") => self.gc_ckpt = Some(text(v)?.into()),
            ("run", "dump") => self.dump = Some(text(v)?.into()),

            ("pretrain", "total_steps") => p.total_steps = count(v)?,
            ("pretrain", "warmup_steps") => p.warmup_steps = count(v)?,
            ("pretrain", "lambda") => p.lambda = real(v)?,
            ("pretrain", "batch_size") => p.batch_size = count(v)?,
            ("pretrain", "gamma") => p.gamma = real(v)?,
            ("pretrain", "actor_lr") => p.actor_lr = real(v)?,
            ("pretrain", "critic_lr") => p.critic_lr = real(v)?,
            ("pretrain", "temperature_lr") => p.temperature_lr = real(v)?,
            ("pretrain", "initial_temperature") => p.initial_temperature = real(v)?,
            ("pretrain", "ema_tau") => p.ema_tau = real(v)?,
            ("pretrain", "hidden") => p.hidden = layers(v)?,
            ("pretrain", "critics") => p.critics = count(v)?,
            ("pretrain", "atoms") => p.atoms = count(v)?,
            ("pretrain", "drop_per_critic") => p.drop_per_critic = count(v)?,
            ("pretrain", "huber_kappa") => p.huber_kappa = real(v)?,

            ("gc", "critics") => g.critics = count(v)?,
            ("gc", "hidden") => g.hidden = layers(v)?,
            ("gc", "batch_size") => g.batch_size = count(v)?,
            ("gc", "gamma") => g.gamma = real(v)?,
            ("gc", "actor_lr") => g.actor_lr = real(v)?,
            ("gc", "critic_lr") => g.critic_lr = real(v)?,
            ("gc", "temperature_lr") => g.temperature_lr = real(v)?,
            ("gc", "initial_temperature") => g.initial_temperature = real(v)?,
            ("gc", "ema_tau") => g.ema_tau = real(v)?,
            ("gc", "relabel_prob") => x.her.relabel_prob = real(v)?,
            ("gc", "baseline_critics") => x.baseline_critics = count(v)?,

            ("explore", "total_steps") => x.total_steps = count(v)?,
            ("explore", "th_raise") => x.th_raise = real(v)?,
            ("explore", "th_lower") => x.th_lower = real(v)?,
            ("explore", "strategy") => x.risk.kind = text(v)?.parse::<RiskKind>()?,
            ("explore", "tau") => x.risk.tau = real(v)?,
            ("explore", "epsilon") => x.risk.epsilon = real(v)?,
            ("explore", "t_max") => x.risk.t_max = real(v)?,
            ("explore", "gamma") => x.risk.gamma = real(v)?,
            ("explore", "eval_every") => x.eval_every = count(v)?,
            ("explore", "eval_episodes") => x.eval_episodes = count(v)?,

            ("coverage", "start_bins") => c.start_bins = count(v)?,
            ("coverage", "goal_bins") => c.goal_bins = count(v)?,
            ("coverage", "episodes_per_cell") => c.episodes_per_cell = count(v)?,
            ("coverage", "limit") => c.limit = real(v)?,
            _ => return Err(Error::Config("unknown key".into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.mode {
            Mode::Pretrain => self.pretrain.validate()?,
            Mode::Explore | Mode::Baseline => {
                if self.env != EnvId::CartPoleGc {
                    return bad(format!("{} needs the cartpole-gc environment", self.mode));
                }
                if self.mode == Mode::Explore && self.safety_ckpt.is_none() {
                    return bad("explore needs a safety checkpoint".into());
                }
                self.gc.validate()?;
                self.explore.her.validate()?;
                if self.explore.eval_every == 0 || self.explore.total_steps == 0 {
                    return bad("step budgets must be positive".into());
                }
            }
            Mode::EvalCoverage => {
                if self.gc_ckpt.is_none() {
                    return bad("eval-coverage needs a goal-conditioned checkpoint".into());
                }
                let c = &self.coverage;
                if c.start_bins == 0 || c.goal_bins == 0 || c.episodes_per_cell == 0 {
                    return bad("coverage grid and episode count must be positive".into());
                }
            }
            Mode::AnalyzeFailures => {
                if self.safety_ckpt.is_none() || self.dump.is_none() {
                    return bad("analyze-failures needs a safety checkpoint and a transition dump".into());
                }
            }
        }
        if !(self.explore.th_lower <= self.explore.th_raise) {
            return bad("thresholds must satisfy th_lower <= th_raise".into());
        }
        self.explore.risk.validate()
    }

    /// Human-readable snapshot that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let p = &self.pretrain;
        let g = &self.gc;
        let x = &self.explore;
        let c = &self.coverage;
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| quote(&p.display().to_string()));
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", quote(self.mode.as_str()));
        let _ = writeln!(s, "env = {}", quote(self.env.as_str()));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", quote(&self.out.display().to_string()));
        for (k, v) in [("safety_ckpt", path(&self.safety_ckpt)), ("gc_ckpt", path(&self.gc_ckpt)), ("dump", path(&self.dump))] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        let _ = writeln!(s, "\n[pretrain]");
        let _ = writeln!(s, "total_steps = {}", p.total_steps);
        let _ = writeln!(s, "warmup_steps = {}", p.warmup_steps);
        let _ = writeln!(s, "lambda = {:?}", p.lambda);
        let _ = writeln!(s, "batch_size = {}", p.batch_size);
        let _ = writeln!(s, "gamma = {:?}", p.gamma);
        let _ = writeln!(s, "actor_lr = {:?}", p.actor_lr);
        let _ = writeln!(s, "critic_lr = {:?}", p.critic_lr);
        let _ = writeln!(s, "temperature_lr = {:?}", p.temperature_lr);
        let _ = writeln!(s, "initial_temperature = {:?}", p.initial_temperature);
        let _ = writeln!(s, "ema_tau = {:?}", p.ema_tau);
        let _ = writeln!(s, "hidden = {:?}", p.hidden);
        let _ = writeln!(s, "critics = {}", p.critics);
        let _ = writeln!(s, "atoms = {}", p.atoms);
        let _ = writeln!(s, "drop_per_critic = {}", p.drop_per_critic);
        let _ = writeln!(s, "huber_kappa = {:?}", p.huber_kappa);
        let _ = writeln!(s, "\n[gc]");
        let _ = writeln!(s, "critics = {}", g.critics);
        let _ = writeln!(s, "hidden = {:?}", g.hidden);
        let _ = writeln!(s, "batch_size = {}", g.batch_size);
        let _ = writeln!(s, "gamma = {:?}", g.gamma);
        let _ = writeln!(s, "actor_lr = {:?}", g.actor_lr);
        let _ = writeln!(s, "critic_lr = {:?}", g.critic_lr);
        let _ = writeln!(s, "temperature_lr = {:?}", g.temperature_lr);
        let _ = writeln!(s, "initial_temperature = {:?}", g.initial_temperature);
        let _ = writeln!(s, "ema_tau = {:?}", g.ema_tau);
        let _ = writeln!(s, "relabel_prob = {:?}", x.her.relabel_prob);
        let _ = writeln!(s, "baseline_critics = {}", x.baseline_critics);
        let _ = writeln!(s, "\n[explore]");
        let _ = writeln!(s, "total_steps = {}", x.total_steps);
        let _ = writeln!(s, "th_raise = {:?}", x.th_raise);
        let _ = writeln!(s, "th_lower = {:?}", x.th_lower);
        let _ = writeln!(s, "strategy = {}", quote(x.risk.kind.as_str()));
        let _ = writeln!(s, "tau = {:?}", x.risk.tau);
        let _ = writeln!(s, "epsilon = {:?}", x.risk.epsilon);
        let _ = writeln!(s, "t_max = {:?}", x.risk.t_max);
        let _ = writeln!(s, "gamma = {:?}", x.risk.gamma);
        let _ = writeln!(s, "eval_every = {}", x.eval_every);
        let _ = writeln!(s, "eval_episodes = {}", x.eval_episodes);
        let _ = writeln!(s, "\n[coverage]");
        let _ = writeln!(s, "start_bins = {}", c.start_bins);
        let _ = writeln!(s, "goal_bins = {}", c.goal_bins);
        let _ = writeln!(s, "episodes_per_cell = {}", c.episodes_per_cell);
        let _ = writeln!(s, "limit = {:?}", c.limit);
        s
    }
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn text(v: &Value) -> Result<&str> {
    v.as_str().ok_or_else(|| Error::Config("expected a string".into()))
}

fn count(v: &Value) -> Result<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| Error::Config("expected a non-negative integer".into()))
}

fn real(v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config("expected a number".into())),
    }
}

fn layers(v: &Value) -> Result<Vec<usize>> {
    let arr = v.as_array().ok_or_else(|| Error::Config("expected a list of layer widths".into()))?;
    let sizes = arr.iter().map(count).collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    Ok(sizes)
}
