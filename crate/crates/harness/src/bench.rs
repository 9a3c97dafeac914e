//! Wall-clock timings of the core components over agent counts 1 to 4.

use std::hint::black_box;
use std::time::{Duration, Instant};

use anyhow::Result;

use submapg_core::dynamics::{run_online, GradientEstimator};
use submapg_core::oracles::WeightedCoverage;
use submapg_core::pme::{pme_exact, pme_grad_exact, BlockVector};
use submapg_core::policy::{train_episode, Baseline, TabularSoftmaxPolicy, TrainConfig};
use submapg_core::polytope::{project_face, FaceSpec};
use submapg_core::rng::{derive, stream_id};

use crate::config::{BanditInstance, EnvKind, ExperimentConfig};
use crate::metrics::fmt_real;
use crate::run::{drift_stream, make_env};

const ACTIONS: usize = 3;
const ITEMS: usize = 8;
const MIN_REPS: usize = 5;
const BUDGET: Duration = Duration::from_millis(50);

pub const BENCH_HEADER: &str = "component\tagents\tactions\treps\tmean_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub component: &'static str,
    pub agents: usize,
    pub actions: usize,
    pub reps: usize,
    pub mean_seconds: f64,
}

impl std::fmt::Display for Timing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.component,
            self.agents,
            self.actions,
            self.reps,
            fmt_real(self.mean_seconds)
        )
    }
}

/// Repeats `work` until the budget is spent (at least `MIN_REPS` times).
fn time<F: FnMut() -> Result<()>>(mut work: F) -> Result<(usize, f64)> {
    let start = Instant::now();
    let mut reps = 0;
    while reps < MIN_REPS || start.elapsed() < BUDGET {
        work()?;
        reps += 1;
    }
    Ok((reps, start.elapsed().as_secs_f64() / reps as f64))
}

/// Scaling table for the environment named in `config`, with the agent
/// count replaced by 1 to 4.
pub fn bench(config: &ExperimentConfig, max_agents: usize) -> Result<Vec<Timing>> {
    let mut table = Vec::new();
    for n in 1..=max_agents {
        let mut rng = derive(config.seeds[0], stream_id(20, n as u32));
        let oracle = WeightedCoverage::random(n, ACTIONS, ITEMS, &mut rng);
        let matroid = oracle.matroid();
        let x = BlockVector::uniform(matroid.blocks());
        let face = FaceSpec::categorical(matroid.blocks().to_vec())?;
        let shifted = x.add_scaled(&BlockVector::new(vec![vec![0.7, -0.2, 0.4]; n]), 1.0);
        let mut push = |component, (reps, mean_seconds)| {
            table.push(Timing {
                component,
                agents: n,
                actions: ACTIONS,
                reps,
                mean_seconds,
            })
        };
        push("pme_exact", time(|| {
            black_box(pme_exact(&oracle, &x, &matroid)?);
            Ok(())
        })?);
        push("pme_grad_exact", time(|| {
            black_box(pme_grad_exact(&oracle, &x, &matroid)?);
            Ok(())
        })?);
        push("projection", time(|| {
            black_box(project_face(&shifted, &face)?);
            Ok(())
        })?);

        let mut c = config.clone();
        c.coverage.agents = n;
        c.tracking.agents = n;
        c.bandit.agents = n;
        c.bandit.instance = BanditInstance::Random;
        c.drift.agents = n;
        if c.env == EnvKind::Drift {
            let timing = time(|| {
                run_online(&mut drift_stream(&c), 0.1, GradientEstimator::DifferenceReward, &mut rng)?;
                Ok(())
            })?;
            push("episode", timing);
        } else {
            let mut env = make_env(&c)?;
            let mut policy = TabularSoftmaxPolicy::new();
            let train = TrainConfig::default();
            let mut baseline = Baseline::None;
            let timing = time(|| {
                train_episode(env.as_mut(), &mut policy, &train, &mut baseline, &mut rng)?;
                Ok(())
            })?;
            push("episode", timing);
        }
    }
    Ok(table)
}
