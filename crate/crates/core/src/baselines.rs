//! Reference strategies: centralized sequential greedy with global or local
//! sensing, an online local greedy limited by the communication graph,
//! uniform random play, and the shared-reward training ablation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::envs::MultiAgentEnv;
use crate::error::{Error, Result};
use crate::policy::{submapg_train, LearningCurve, RewardMode, TabularSoftmaxPolicy, TrainConfig};
use crate::rng::SimRng;
use crate::submodular::{AgentActionPair, FeasibleSet, PartitionMatroid, SubmodularOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    CsgGlobal,
    CsgLocal,
    OnlineLocalGreedy,
    Random,
    SharedRewardTrain,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::CsgGlobal,
        BaselineKind::CsgLocal,
        BaselineKind::OnlineLocalGreedy,
        BaselineKind::Random,
        BaselineKind::SharedRewardTrain,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::CsgGlobal => "csg_global",
            BaselineKind::CsgLocal => "csg_local",
            BaselineKind::OnlineLocalGreedy => "online_local_greedy",
            BaselineKind::Random => "random",
            BaselineKind::SharedRewardTrain => "shared_reward_train",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sensing {
    Global,
    /// Each agent scores candidates through its own local view of F.
    Local,
}

/// Best action for `agent` given the others already in `context`, lowest
/// index on ties.
fn best_response<F: SubmodularOracle + ?Sized>(oracle: &F, agent: usize, actions: usize, context: &FeasibleSet) -> usize {
    let base = oracle.eval(context);
    let mut with = context.clone();
    let mut best = (0, f64::NEG_INFINITY);
    for action in 0..actions {
        with.set(agent, Some(action));
        let gain = oracle.eval(&with) - base;
        if gain > best.1 {
            best = (action, gain);
        }
    }
    best.0
}

fn sensed<'a, F: SubmodularOracle + ?Sized>(
    oracle: &'a F,
    agent: usize,
    sensing: Sensing,
) -> Option<Box<dyn SubmodularOracle + 'a>> {
    match sensing {
        Sensing::Global => None,
        Sensing::Local => oracle.local_view(agent),
    }
}

/// Centralized sequential greedy in ascending agent order: each agent adds
/// the pair of largest marginal gain given its predecessors' picks.
pub fn csg<F: SubmodularOracle + ?Sized>(oracle: &F, matroid: &PartitionMatroid, sensing: Sensing) -> FeasibleSet {
    let mut set = FeasibleSet::empty(matroid.num_agents());
    for agent in 0..matroid.num_agents() {
        let action = match sensed(oracle, agent, sensing) {
            Some(view) => best_response(&*view, agent, matroid.block(agent), &set),
            None => best_response(oracle, agent, matroid.block(agent), &set),
        };
        set.set(agent, Some(action));
    }
    set
}

/// Per-round decentralized greedy: agent i best-responds, through its local
/// view, to the picks of lower-indexed agents it can communicate with.
///
/// This is a stand-in for an online submodular greedy; it carries no state
/// across rounds.
pub fn online_local_greedy<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    communication: &[Vec<bool>],
) -> Result<FeasibleSet> {
    let n = matroid.num_agents();
    if communication.len() != n || communication.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("communication graph must be {n}×{n}")));
    }
    let mut picks = vec![0; n];
    for agent in 0..n {
        let mut context = FeasibleSet::empty(n);
        for j in (0..agent).filter(|&j| communication[agent][j]) {
            context.set(j, Some(picks[j]));
        }
        picks[agent] = match oracle.local_view(agent) {
            Some(view) => best_response(&*view, agent, matroid.block(agent), &context),
            None => best_response(oracle, agent, matroid.block(agent), &context),
        };
    }
    Ok(FeasibleSet::full(&picks))
}

/// One uniformly random action per agent.
pub fn random_policy<R: Rng + ?Sized>(matroid: &PartitionMatroid, rng: &mut R) -> FeasibleSet {
    let actions: Vec<usize> = matroid.blocks().iter().map(|&b| rng.random_range(0..b)).collect();
    FeasibleSet::full(&actions)
}

/// [`submapg_train`] with the global utility as every agent's reward.
pub fn shared_reward_train<E: MultiAgentEnv + ?Sized>(
    env: &mut E,
    policy: &mut TabularSoftmaxPolicy,
    config: &TrainConfig,
    rng: &mut SimRng,
) -> Result<LearningCurve> {
    let config = TrainConfig {
        reward: RewardMode::Shared,
        ..*config
    };
    submapg_train(env, policy, &config, rng)
}

/// The joint action a non-learning baseline plays in the env's current round.
pub fn baseline_action<E: MultiAgentEnv + ?Sized>(kind: BaselineKind, env: &E, rng: &mut SimRng) -> Result<FeasibleSet> {
    let matroid = env.layout().matroid()?;
    let oracle = env.oracle();
    match kind {
        BaselineKind::CsgGlobal => Ok(csg(&oracle, &matroid, Sensing::Global)),
        BaselineKind::CsgLocal => Ok(csg(&oracle, &matroid, Sensing::Local)),
        BaselineKind::OnlineLocalGreedy => online_local_greedy(&oracle, &matroid, &env.communication()),
        BaselineKind::Random => Ok(random_policy(&matroid, rng)),
        BaselineKind::SharedRewardTrain => Err(Error::Config(
            "shared_reward_train is a trainer, not a per-round rule".into(),
        )),
    }
}

/// Plays one episode with a non-learning baseline; returns F_t per round.
pub fn baseline_episode<E: MultiAgentEnv + ?Sized>(env: &mut E, kind: BaselineKind, rng: &mut SimRng) -> Result<Vec<f64>> {
    env.reset(rng);
    let mut utilities = Vec::with_capacity(env.horizon());
    while !env.is_done() {
        let joint = baseline_action(kind, env, rng)?;
        utilities.push(env.oracle().eval(&joint));
        env.step(&joint, rng)?;
    }
    Ok(utilities)
}

/// Pair-level view of a greedy pick, for logs.
pub fn picks(set: &FeasibleSet) -> Vec<AgentActionPair> {
    set.pairs().collect()
}
