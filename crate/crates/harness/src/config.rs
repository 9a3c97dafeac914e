//! Experiment configuration: a line-oriented `key = value` format with
//! `[section]` headers and `#` comments.
//!
//! Every key has a default, so an experiment file only lists what it
//! changes. [`ExperimentConfig::to_text`] writes every key back out in a
//! fixed order and parses to an equal value.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use submapg_core::envs::{CoverageConfig, DensityKind, TrackingConfig};

/// A parse or validation failure, located by line and key where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: key.map(str::to_string),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Sections an experiment file may contain.
pub const SECTIONS: [&str; 5] = ["experiment", "bandit", "coverage", "tracking", "drift"];

/// Splits a document into entries. Keys before any header belong to
/// `experiment`; headers outside `sections` are errors.
pub fn parse_entries(text: &str, sections: &[&str]) -> Result<Vec<Entry>, ConfigError> {
    let mut section = "experiment".to_string();
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, None, "unterminated section header"))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::at(line, None, format!("bad section name `{name}`")));
            }
            if !sections.contains(&name) {
                return Err(ConfigError::at(line, None, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, None, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::at(line, None, "empty key"));
        }
        if !seen.insert((section.clone(), key.to_string())) {
            return Err(ConfigError::at(line, Some(key), "duplicate key"));
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    /// Single-state repeated coverage game.
    Bandit,
    Coverage,
    Tracking,
    /// Drifting weighted-coverage stream for the online gradient dynamics.
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Submapg,
    SharedRewardTrain,
    CsgGlobal,
    CsgLocal,
    OnlineLocalGreedy,
    Random,
    /// Two-step projected gradient dynamics on the marginals.
    OnlinePga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BanditInstance {
    Overlap,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Per-pipeline default: the tuned constants for training, η* with
    /// P_T = 0 for the online dynamics.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Exact,
    Difference,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:path => $tag:literal),+ $(,)?) => {
        impl $ty {
            pub fn tag(self) -> &'static str {
                match self { $($variant => $tag),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($tag => Ok($variant),)+
                    other => Err(format!(concat!("unknown ", $what, " `{}`"), other)),
                }
            }
        }
    };
}

keyword_enum!(EnvKind, "environment",
    EnvKind::Bandit => "bandit",
    EnvKind::Coverage => "coverage",
    EnvKind::Tracking => "tracking",
    EnvKind::Drift => "drift",
);

keyword_enum!(Method, "method",
    Method::Submapg => "submapg",
    Method::SharedRewardTrain => "shared_reward_train",
    Method::CsgGlobal => "csg_global",
    Method::CsgLocal => "csg_local",
    Method::OnlineLocalGreedy => "online_local_greedy",
    Method::Random => "random",
    Method::OnlinePga => "online_pga",
);

keyword_enum!(BanditInstance, "bandit instance",
    BanditInstance::Overlap => "overlap",
    BanditInstance::Random => "random",
);

keyword_enum!(Estimator, "gradient estimator",
    Estimator::Exact => "exact",
    Estimator::Difference => "difference",
);

impl Method {
    pub fn is_learning(self) -> bool {
        matches!(self, Method::Submapg | Method::SharedRewardTrain)
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(v) => write!(f, "{v:?}"),
        }
    }
}

impl FromStr for StepSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(StepSize::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got `{s}`"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("step size must be finite and nonnegative, got {v}"));
        }
        Ok(StepSize::Fixed(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditParams {
    pub instance: BanditInstance,
    pub agents: usize,
    pub actions: usize,
    pub items: usize,
    pub instance_seed: u64,
}

impl Default for BanditParams {
    fn default() -> Self {
        Self {
            instance: BanditInstance::Overlap,
            agents: 2,
            actions: 3,
            items: 6,
            instance_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftParams {
    pub agents: usize,
    pub actions: usize,
    pub items: usize,
    /// Per-round bound on each weight's change.
    pub drift: f64,
    pub instance_seed: u64,
    pub estimator: Estimator,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            agents: 3,
            actions: 3,
            items: 8,
            drift: 0.01,
            instance_seed: 0,
            estimator: Estimator::Difference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Run identifier, used in file names and the `run_id` column.
    pub name: String,
    pub env: EnvKind,
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Training episodes for learning methods, evaluation episodes otherwise.
    pub episodes: usize,
    pub horizon: usize,
    pub eta: StepSize,
    /// Moving-average baseline for the policy-gradient returns.
    pub moving_average: bool,
    /// Compute OPT_t by enumeration every round.
    pub brute_force: bool,
    pub out: Option<PathBuf>,
    pub bandit: BanditParams,
    pub coverage: CoverageConfig,
    pub tracking: TrackingConfig,
    pub drift: DriftParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            env: EnvKind::Coverage,
            method: Method::Submapg,
            seeds: vec![0],
            episodes: 10,
            horizon: 25,
            eta: StepSize::Auto,
            moving_average: false,
            brute_force: false,
            out: None,
            bandit: BanditParams::default(),
            coverage: CoverageConfig {
                width: 10,
                height: 10,
                agents: 2,
                horizon: 25,
                ..CoverageConfig::default()
            },
            tracking: TrackingConfig {
                horizon: 25,
                ..TrackingConfig::default()
            },
            drift: DriftParams::default(),
        }
    }
}

fn value<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| ConfigError::at(e.line, Some(&e.key), err.to_string()))
}

fn boolean(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::at(e.line, Some(&e.key), format!("expected true or false, got `{other}`"))),
    }
}

fn list<T: FromStr>(e: &Entry) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|err: T::Err| ConfigError::at(e.line, Some(&e.key), err.to_string()))
        })
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        let mut horizon_line = None;
        for e in parse_entries(text, &SECTIONS)? {
            let unknown = || ConfigError::at(e.line, Some(&e.key), format!("unknown key in [{}]", e.section));
            match e.section.as_str() {
                "experiment" => match e.key.as_str() {
                    "name" => {
                        if e.value.is_empty() || !e.value.chars().all(|ch| ch.is_ascii_alphanumeric() || "_-.".contains(ch)) {
                            return Err(ConfigError::at(e.line, Some(&e.key), "name must be non-empty [A-Za-z0-9_.-]"));
                        }
                        c.name = e.value.clone();
                    }
                    "env" => c.env = value(&e)?,
                    "method" => c.method = value(&e)?,
                    "seeds" => c.seeds = list(&e)?,
                    "episodes" => c.episodes = value(&e)?,
                    "horizon" => {
                        c.horizon = value(&e)?;
                        horizon_line = Some(e.line);
                    }
                    "eta" => c.eta = value(&e)?,
                    "baseline" => {
                        c.moving_average = match e.value.as_str() {
                            "none" => false,
                            "ema" => true,
                            other => {
                                return Err(ConfigError::at(e.line, Some(&e.key), format!("expected none or ema, got `{other}`")))
                            }
                        }
                    }
                    "brute_force" => c.brute_force = boolean(&e)?,
                    "out" => c.out = (!e.value.is_empty()).then(|| PathBuf::from(&e.value)),
                    _ => return Err(unknown()),
                },
                "bandit" => match e.key.as_str() {
                    "instance" => c.bandit.instance = value(&e)?,
                    "agents" => c.bandit.agents = value(&e)?,
                    "actions" => c.bandit.actions = value(&e)?,
                    "items" => c.bandit.items = value(&e)?,
                    "instance_seed" => c.bandit.instance_seed = value(&e)?,
                    _ => return Err(unknown()),
                },
                "coverage" => {
                    let cov = &mut c.coverage;
                    match e.key.as_str() {
                        "width" => cov.width = value(&e)?,
                        "height" => cov.height = value(&e)?,
                        "agents" => cov.agents = value(&e)?,
                        "extra_agents" => cov.extra_agents = value(&e)?,
                        "r_cov" => cov.r_cov = value(&e)?,
                        "r_com" => cov.r_com = value(&e)?,
                        "density" => cov.density = value::<DensityKind>(&e)?,
                        "density_seed" => cov.density_seed = value(&e)?,
                        "cluster" => cov.cluster = value(&e)?,
                        "min_lifespan" => cov.min_lifespan = value(&e)?,
                        "window_fraction" => cov.window_fraction = value(&e)?,
                        _ => return Err(unknown()),
                    }
                }
                "tracking" => {
                    let tr = &mut c.tracking;
                    match e.key.as_str() {
                        "arena" => tr.arena = value(&e)?,
                        "agents" => tr.agents = value(&e)?,
                        "extra_agents" => tr.extra_agents = value(&e)?,
                        "targets" => tr.targets = value(&e)?,
                        "extra_targets" => tr.extra_targets = value(&e)?,
                        "pattern_mix" => {
                            let mix: Vec<usize> = list(&e)?;
                            tr.pattern_mix = mix.try_into().map_err(|_| {
                                ConfigError::at(e.line, Some(&e.key), "expected static, linear, random weights")
                            })?;
                        }
                        "min_lifespan" => tr.min_lifespan = value(&e)?,
                        "window_fraction" => tr.window_fraction = value(&e)?,
                        "r_sen" => tr.r_sen = value(&e)?,
                        "r_com" => tr.r_com = value(&e)?,
                        "agent_speed" => tr.agent_speed = value(&e)?,
                        "target_speed" => tr.target_speed = value(&e)?,
                        _ => return Err(unknown()),
                    }
                }
                "drift" => match e.key.as_str() {
                    "agents" => c.drift.agents = value(&e)?,
                    "actions" => c.drift.actions = value(&e)?,
                    "items" => c.drift.items = value(&e)?,
                    "drift" => c.drift.drift = value(&e)?,
                    "instance_seed" => c.drift.instance_seed = value(&e)?,
                    "estimator" => c.drift.estimator = value(&e)?,
                    _ => return Err(unknown()),
                },
                other => return Err(ConfigError::at(e.line, None, format!("unknown section [{other}]"))),
            }
        }
        c.coverage.horizon = c.horizon;
        c.tracking.horizon = c.horizon;
        c.validate().map_err(|mut err| {
            if err.key.as_deref() == Some("horizon") {
                err.line = horizon_line;
            }
            err
        })?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let key = |k: &str, msg: String| ConfigError {
            line: None,
            key: Some(k.to_string()),
            message: msg,
        };
        if self.seeds.is_empty() {
            return Err(key("seeds", "at least one seed required".into()));
        }
        if self.episodes == 0 {
            return Err(key("episodes", "must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(key("horizon", "must be at least 1".into()));
        }
        match (self.env, self.method) {
            (EnvKind::Drift, Method::OnlinePga) => {}
            (EnvKind::Drift, m) => {
                return Err(key("method", format!("the drift stream runs online_pga only, not {m}")))
            }
            (_, Method::OnlinePga) => {
                return Err(key("method", "online_pga needs env = drift".into()))
            }
            _ => {}
        }
        let b = &self.bandit;
        if b.agents == 0 || b.actions == 0 || b.items == 0 {
            return Err(key("bandit", "agents, actions and items must be positive".into()));
        }
        let d = &self.drift;
        if d.agents == 0 || d.actions == 0 || d.items == 0 {
            return Err(key("drift", "agents, actions and items must be positive".into()));
        }
        if !(d.drift >= 0.0 && d.drift.is_finite()) {
            return Err(key("drift", format!("drift must be finite and nonnegative, got {}", d.drift)));
        }
        if !(0.0..=1.0).contains(&self.coverage.window_fraction) || !(0.0..=1.0).contains(&self.tracking.window_fraction) {
            return Err(key("window_fraction", "must lie in [0, 1]".into()));
        }
        self.coverage
            .validate()
            .map_err(|e| ConfigError::global(format!("[coverage] {e}")))?;
        self.tracking
            .validate()
            .map_err(|e| ConfigError::global(format!("[tracking] {e}")))?;
        Ok(())
    }

    /// Every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let c = &self.coverage;
        let t = &self.tracking;
        let mut lines = vec![
            "[experiment]".to_string(),
            format!("name = {}", self.name),
            format!("env = {}", self.env),
            format!("method = {}", self.method),
            format!("seeds = {}", join(&self.seeds)),
            format!("episodes = {}", self.episodes),
            format!("horizon = {}", self.horizon),
            format!("eta = {}", self.eta),
            format!("baseline = {}", if self.moving_average { "ema" } else { "none" }),
            format!("brute_force = {}", self.brute_force),
        ];
        if let Some(out) = &self.out {
            lines.push(format!("out = {}", out.display()));
        }
        lines.extend([
            String::new(),
            "[bandit]".into(),
            format!("instance = {}", self.bandit.instance),
            format!("agents = {}", self.bandit.agents),
            format!("actions = {}", self.bandit.actions),
            format!("items = {}", self.bandit.items),
            format!("instance_seed = {}", self.bandit.instance_seed),
            String::new(),
            "[coverage]".into(),
            format!("width = {}", c.width),
            format!("height = {}", c.height),
            format!("agents = {}", c.agents),
            format!("extra_agents = {}", c.extra_agents),
            format!("r_cov = {}", c.r_cov),
            format!("r_com = {}", c.r_com),
            format!("density = {}", c.density),
            format!("density_seed = {}", c.density_seed),
            format!("cluster = {}", c.cluster),
            format!("min_lifespan = {}", c.min_lifespan),
            format!("window_fraction = {:?}", c.window_fraction),
            String::new(),
            "[tracking]".into(),
            format!("arena = {:?}", t.arena),
            format!("agents = {}", t.agents),
            format!("extra_agents = {}", t.extra_agents),
            format!("targets = {}", t.targets),
            format!("extra_targets = {}", t.extra_targets),
            format!("pattern_mix = {}", join(&t.pattern_mix)),
            format!("min_lifespan = {}", t.min_lifespan),
            format!("window_fraction = {:?}", t.window_fraction),
            format!("r_sen = {:?}", t.r_sen),
            format!("r_com = {:?}", t.r_com),
            format!("agent_speed = {:?}", t.agent_speed),
            format!("target_speed = {:?}", t.target_speed),
            String::new(),
            "[drift]".into(),
            format!("agents = {}", self.drift.agents),
            format!("actions = {}", self.drift.actions),
            format!("items = {}", self.drift.items),
            format!("drift = {:?}", self.drift.drift),
            format!("instance_seed = {}", self.drift.instance_seed),
            format!("estimator = {}", self.drift.estimator),
        ]);
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}
