//! The `run` pipeline: one CSV episode log per seed plus run summaries.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use submapg_core::baselines::{baseline_action, BaselineKind};
use submapg_core::dynamics::{
    run_online, step_size_dynamic, DriftingCoverageStream, GradientEstimator, OnlineStream,
};
use submapg_core::envs::{BanditEnv, CoverageEnv, MultiAgentEnv, TrackingEnv};
use submapg_core::oracles::{overlap_bandit, WeightedCoverage};
use submapg_core::policy::{
    difference_returns, rollout_observed, surrogate_gradient, ActionMode, Baseline, RewardMode,
    TabularSoftmaxPolicy,
};
use submapg_core::polytope::diameter_and_bounds;
use submapg_core::rng::{derive, stream_id};
use submapg_core::submodular::{brute_force_opt_full, DEFAULT_ENUMERATION_CAP};
use submapg_core::{FeasibleSet, SubmodularOracle};

use crate::config::{BanditInstance, EnvKind, Estimator, ExperimentConfig, Method, StepSize};
use crate::metrics::{fmt_real, summary_text, write_episode_log, write_summary_csv, EpisodeAccumulator, EpisodeRow, SummaryRow};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SUBMAPG_OUT";

// stream components for rng derivation
const ENV_STREAM: u32 = 1;
const INSTANCE_STREAM: u32 = 2;

/// Training step sizes used when the config says `eta = auto`.
pub const AUTO_ETA_BANDIT: f64 = 0.5;
pub const AUTO_ETA_COVERAGE: f64 = 0.003;
pub const AUTO_ETA_TRACKING: f64 = 0.05;

/// Output directory: explicit flag, then the config, then `SUBMAPG_OUT`,
/// then `out`.
pub fn resolve_out(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn make_env(config: &ExperimentConfig) -> Result<Box<dyn MultiAgentEnv + Send>> {
    Ok(match config.env {
        EnvKind::Bandit => Box::new(BanditEnv::new(bandit_oracle(config), config.horizon)),
        EnvKind::Coverage => Box::new(CoverageEnv::new(config.coverage.clone())?),
        EnvKind::Tracking => Box::new(TrackingEnv::new(config.tracking.clone())?),
        EnvKind::Drift => bail!("the drift stream is not a multi-agent environment"),
    })
}

fn bandit_oracle(config: &ExperimentConfig) -> WeightedCoverage {
    let b = &config.bandit;
    match b.instance {
        BanditInstance::Overlap => overlap_bandit().0,
        BanditInstance::Random => {
            let mut rng = derive(b.instance_seed, stream_id(INSTANCE_STREAM, 0));
            WeightedCoverage::random(b.agents, b.actions, b.items, &mut rng)
        }
    }
}

pub fn drift_stream(config: &ExperimentConfig) -> DriftingCoverageStream {
    let d = &config.drift;
    let mut rng = derive(d.instance_seed, stream_id(INSTANCE_STREAM, 1));
    let base = WeightedCoverage::random(d.agents, d.actions, d.items, &mut rng);
    DriftingCoverageStream::new(base, config.horizon, d.drift)
}

/// Step size actually used by the pipeline.
pub fn resolve_eta(config: &ExperimentConfig) -> Result<f64> {
    if let StepSize::Fixed(v) = config.eta {
        return Ok(v);
    }
    Ok(match config.env {
        EnvKind::Bandit => AUTO_ETA_BANDIT,
        EnvKind::Coverage => AUTO_ETA_COVERAGE,
        EnvKind::Tracking => AUTO_ETA_TRACKING,
        EnvKind::Drift => {
            let stream = drift_stream(config);
            let b = stream_marginal_bound(config);
            let bounds = diameter_and_bounds(b, stream.max_agents(), stream.max_actions());
            step_size_dynamic(bounds.diameter, 0.0, config.horizon, bounds.gradient, bounds.sigma)?
        }
    })
}

fn stream_marginal_bound(config: &ExperimentConfig) -> f64 {
    let d = &config.drift;
    let mut rng = derive(d.instance_seed, stream_id(INSTANCE_STREAM, 1));
    WeightedCoverage::random(d.agents, d.actions, d.items, &mut rng).marginal_bound()
}

fn round_opt(oracle: &dyn SubmodularOracle, env: &dyn MultiAgentEnv) -> submapg_core::Result<f64> {
    let matroid = env.layout().matroid()?;
    Ok(brute_force_opt_full(oracle, &matroid, DEFAULT_ENUMERATION_CAP)?.1)
}

/// Result of one seed: its episode log and, for learning methods, the
/// final policy.
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    pub policy: Option<TabularSoftmaxPolicy>,
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut rng = derive(seed, stream_id(ENV_STREAM, 0));
    let name = config.name.as_str();
    let method = config.method.tag();
    let mut rows = Vec::new();
    if config.env == EnvKind::Drift {
        let step = resolve_eta(config)?;
        let estimator = match config.drift.estimator {
            Estimator::Exact => GradientEstimator::Exact,
            Estimator::Difference => GradientEstimator::DifferenceReward,
        };
        for episode in 0..config.episodes {
            let mut stream = drift_stream(config);
            let trace = run_online(&mut stream, step, estimator, &mut rng)?;
            let mut acc = EpisodeAccumulator::new();
            for r in &trace.records {
                rows.push(acc.push(name, method, seed, episode, r.active_agents, 0, r.achieved, Some(r.opt)));
            }
        }
        return Ok(SeedRun { seed, rows, policy: None });
    }

    let mut env = make_env(config)?;
    if config.method.is_learning() {
        let eta = resolve_eta(config)?;
        let reward = if config.method == Method::SharedRewardTrain {
            RewardMode::Shared
        } else {
            RewardMode::Difference
        };
        let mut baseline = if config.moving_average {
            Baseline::moving_average()
        } else {
            Baseline::None
        };
        let mut policy = TabularSoftmaxPolicy::new();
        for episode in 0..config.episodes {
            let mut acc = EpisodeAccumulator::new();
            let traj = rollout_observed(env.as_mut(), &policy, ActionMode::Sample, &mut rng, |env, record| {
                let opt = if config.brute_force {
                    Some(round_opt(&env.oracle(), env)?)
                } else {
                    None
                };
                let row = acc.push(
                    name,
                    method,
                    seed,
                    episode,
                    record.observations.len(),
                    env.active_targets(),
                    record.utility,
                    opt,
                );
                rows.push(row);
                Ok(())
            })?;
            let psi = difference_returns(&traj, reward, &mut baseline);
            let gradient = surrogate_gradient(&policy, &traj, &psi)?;
            policy.apply(&gradient, eta)?;
        }
        return Ok(SeedRun { seed, rows, policy: Some(policy) });
    }

    let kind: BaselineKind = config.method.tag().parse()?;
    for episode in 0..config.episodes {
        env.reset(&mut rng);
        let mut acc = EpisodeAccumulator::new();
        while !env.is_done() {
            let joint = baseline_action(kind, env.as_ref(), &mut rng)?;
            let oracle = env.oracle();
            let utility = oracle.eval(&joint);
            let opt = if config.brute_force {
                Some(round_opt(&oracle, env.as_ref())?)
            } else {
                None
            };
            drop(oracle);
            rows.push(acc.push(
                name,
                method,
                seed,
                episode,
                joint.num_agents(),
                env.active_targets(),
                utility,
                opt,
            ));
            env.step(&joint, &mut rng)?;
        }
    }
    Ok(SeedRun { seed, rows, policy: None })
}

/// Files written by a successful run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub logs: Vec<PathBuf>,
    pub files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
}

pub fn log_path(out: &Path, config: &ExperimentConfig, seed: u64) -> PathBuf {
    out.join(format!("{}_seed{}.csv", config.name, seed))
}

/// Runs every seed (in parallel over `jobs` workers), then writes the logs
/// in seed order. On any failure the files this call created are removed.
pub fn run(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunArtifacts> {
    config.validate()?;
    let created_dir = !out.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = run_inner(config, out, jobs, &mut written);
    if result.is_err() {
        for f in &written {
            let _ = fs::remove_file(f);
        }
        if created_dir {
            let _ = fs::remove_dir_all(out);
        }
    }
    result
}

fn run_inner(config: &ExperimentConfig, out: &Path, jobs: usize, written: &mut Vec<PathBuf>) -> Result<RunArtifacts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building the worker pool")?;
    let results: Vec<Result<SeedRun>> =
        pool.install(|| config.seeds.par_iter().map(|&s| run_seed(config, s)).collect());
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut write = |path: PathBuf, bytes: Vec<u8>| -> Result<PathBuf> {
        written.push(path.clone());
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    };
    let mut logs = Vec::new();
    let mut summary = Vec::new();
    for r in &runs {
        let mut buf = Vec::new();
        write_episode_log(&mut buf, &r.rows)?;
        logs.push(write(log_path(out, config, r.seed), buf)?);
        if let Some(p) = &r.policy {
            write(out.join(format!("{}_seed{}.policy", config.name, r.seed)), p.to_table().into_bytes())?;
        }
        if let Some(s) = SummaryRow::from_rows(config.env.tag(), config.horizon, &r.rows) {
            summary.push(s);
        }
    }
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary)?;
    write(out.join("summary.csv"), buf)?;
    write(out.join("summary.txt"), summary_text(&summary).into_bytes())?;
    write(out.join(format!("{}.config", config.name)), config.to_text().into_bytes())?;
    Ok(RunArtifacts {
        out_dir: out.to_path_buf(),
        logs,
        files: written.clone(),
        summary,
    })
}

/// One round of the brute-force OPT dump.
#[derive(Debug, Clone, PartialEq)]
pub struct OptRow {
    pub seed: u64,
    pub round: usize,
    pub active_agents: usize,
    pub opt: f64,
    pub set: FeasibleSet,
}

pub const OPT_HEADER: &str = "seed\tround\tactive_agents\topt\tset";

impl std::fmt::Display for OptRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}\t{}\t{}\t{}\t{}", self.seed, self.round, self.active_agents, fmt_real(self.opt), self.set)
    }
}

/// Plays one episode with the brute-force maximizer every round and lists
/// OPT_t with the maximizing joint action.
pub fn opt_dump(config: &ExperimentConfig, seed: u64) -> Result<Vec<OptRow>> {
    let mut rng = derive(seed, stream_id(ENV_STREAM, 0));
    let mut rows = Vec::new();
    if config.env == EnvKind::Drift {
        let mut stream = drift_stream(config);
        for t in 0..stream.horizon() {
            let round = stream.round(t, &mut rng)?;
            let (set, opt) = brute_force_opt_full(round.oracle.as_ref(), &round.layout.matroid()?, DEFAULT_ENUMERATION_CAP)?;
            rows.push(OptRow { seed, round: t, active_agents: round.layout.agents.len(), opt, set });
        }
        return Ok(rows);
    }
    let mut env = make_env(config)?;
    env.reset(&mut rng);
    while !env.is_done() {
        let matroid = env.layout().matroid()?;
        let (set, opt) = brute_force_opt_full(env.oracle().as_ref(), &matroid, DEFAULT_ENUMERATION_CAP)?;
        rows.push(OptRow { seed, round: env.time(), active_agents: matroid.num_agents(), opt, set: set.clone() });
        env.step(&set, &mut rng)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: &str, env: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "env = {env}\nmethod = {method}\nepisodes = 3\nhorizon = 5\nseeds = 7, 8\nbrute_force = true\n"
        ))
        .unwrap()
    }

    #[test]
    fn every_pipeline_produces_contiguous_rows() {
        let cases = [
            ("submapg", "coverage"),
            ("shared_reward_train", "bandit"),
            ("csg_global", "coverage"),
            ("csg_local", "tracking"),
            ("online_local_greedy", "tracking"),
            ("random", "bandit"),
            ("online_pga", "drift"),
        ];
        for (method, env) in cases {
            let c = small(method, env);
            let r = run_seed(&c, 7).unwrap();
            assert_eq!(r.rows.len(), 15, "{method} on {env}");
            for (i, row) in r.rows.iter().enumerate() {
                assert_eq!((row.episode, row.round), (i / 5, i % 5));
                assert!(row.opt.is_some());
            }
            for w in r.rows.windows(2).filter(|w| w[0].episode == w[1].episode) {
                assert!(w[1].cum_utility >= w[0].cum_utility);
            }
        }
    }

    #[test]
    fn opt_column_is_optional() {
        let mut c = small("csg_global", "tracking");
        c.brute_force = false;
        let r = run_seed(&c, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.opt.is_none() && row.cum_regret.is_none()));
    }

    #[test]
    fn run_writes_logs_and_summaries() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let art = run(&small("submapg", "coverage"), &out, 2).unwrap();
        assert_eq!(art.logs.len(), 2);
        for name in ["summary.csv", "summary.txt", "run.config", "run_seed7.policy", "run_seed8.csv"] {
            assert!(out.join(name).exists(), "{name}");
        }
        let text = fs::read_to_string(out.join("run_seed7.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 15);
    }

    #[test]
    fn opt_dump_matches_brute_force_rounds() {
        for env in ["coverage", "tracking", "bandit"] {
            let c = small("csg_global", env);
            let rows = opt_dump(&c, 3).unwrap();
            assert_eq!(rows.len(), 5);
            assert!(rows.iter().enumerate().all(|(t, r)| r.round == t && r.opt >= 0.0 && r.set.is_full()));
        }
        let rows = opt_dump(&small("online_pga", "drift"), 3).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(OPT_HEADER.split('\t').count(), rows[0].to_string().split('\t').count());
    }

    #[test]
    fn auto_step_sizes() {
        assert_eq!(resolve_eta(&small("submapg", "bandit")).unwrap(), AUTO_ETA_BANDIT);
        let drift = resolve_eta(&small("online_pga", "drift")).unwrap();
        assert!(drift > 0.0 && drift.is_finite());
    }
}
