//! Benchmark environments.
//!
//! Each environment exposes the current round as a set-function oracle over
//! the active agents' actions, plus per-agent tabular observations for the
//! policies. Agents are identified by stable ids; the per-round
//! [`RoundLayout`] lists the active ids in block order.

mod coverage;
mod density;
mod schedule;
mod tracking;

pub use coverage::{coverage_step, coverage_utility, CoverageConfig, CoverageEnv, CoverageState, MOVES};
pub use density::{density_field, DensityField, DensityKind};
pub use schedule::{open_schedule, OpenSchedule};
pub use tracking::{
    steering_rates, target_step, tracking_utility, unicycle_step, MotionPattern, Pose, Target,
    TrackingConfig, TrackingEnv, TrackingOracle, TrackingState,
};

use crate::dynamics::RoundLayout;
use crate::error::Result;
use crate::oracles::WeightedCoverage;
use crate::rng::SimRng;
use crate::submodular::{FeasibleSet, SubmodularOracle};

/// Discrete encoding of an agent's local observation.
pub type ObservationKey = u64;

/// What one active agent sees at the start of a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentObservation {
    /// Stable agent id, also the policy's table slot.
    pub agent: usize,
    pub key: ObservationKey,
    /// Feasible actions; `false` entries get probability zero.
    pub mask: Vec<bool>,
}

/// A multi-agent environment whose stage utility is submodular in the joint
/// action.
pub trait MultiAgentEnv {
    /// Starts a new episode.
    fn reset(&mut self, rng: &mut SimRng);

    fn horizon(&self) -> usize;

    /// Rounds elapsed in the current episode.
    fn time(&self) -> usize;

    fn layout(&self) -> RoundLayout;

    /// One observation per active agent, in layout order.
    fn observations(&self) -> Vec<AgentObservation>;

    /// The stage utility F_t(·; s_t) over the active agents' actions.
    fn oracle(&self) -> Box<dyn SubmodularOracle + '_>;

    /// `adjacency[i][j]`: active agents i and j (layout order) can talk.
    fn communication(&self) -> Vec<Vec<bool>>;

    /// Applies a full joint action and advances one round.
    fn step(&mut self, joint: &FeasibleSet, rng: &mut SimRng) -> Result<()>;

    fn active_targets(&self) -> usize {
        0
    }

    /// Deterministic text digest of the state, for logs and replay checks.
    fn digest(&self) -> String;

    fn is_done(&self) -> bool {
        self.time() >= self.horizon()
    }
}

/// A stateless repeated game: the same coverage utility every round, one
/// observation key for everybody.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    oracle: WeightedCoverage,
    horizon: usize,
    time: usize,
}

impl BanditEnv {
    pub fn new(oracle: WeightedCoverage, horizon: usize) -> Self {
        Self {
            oracle,
            horizon,
            time: 0,
        }
    }

    pub fn utility(&self) -> &WeightedCoverage {
        &self.oracle
    }
}

impl MultiAgentEnv for BanditEnv {
    fn reset(&mut self, _rng: &mut SimRng) {
        self.time = 0;
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn time(&self) -> usize {
        self.time
    }

    fn layout(&self) -> RoundLayout {
        let m = self.oracle.matroid();
        RoundLayout {
            agents: (0..m.num_agents()).collect(),
            actions: m.blocks().to_vec(),
        }
    }

    fn observations(&self) -> Vec<AgentObservation> {
        let m = self.oracle.matroid();
        (0..m.num_agents())
            .map(|agent| AgentObservation {
                agent,
                key: 0,
                mask: vec![true; m.block(agent)],
            })
            .collect()
    }

    fn oracle(&self) -> Box<dyn SubmodularOracle + '_> {
        Box::new(&self.oracle)
    }

    fn communication(&self) -> Vec<Vec<bool>> {
        let n = self.oracle.matroid().num_agents();
        vec![vec![true; n]; n]
    }

    fn step(&mut self, _joint: &FeasibleSet, _rng: &mut SimRng) -> Result<()> {
        self.time += 1;
        Ok(())
    }

    fn digest(&self) -> String {
        format!("t={}", self.time)
    }
}
