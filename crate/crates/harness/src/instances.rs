//! Seeded small instances shared by the verification suites.

use rand::Rng;
use submapg_core::envs::{steering_rates, MotionPattern, Pose, Target, TrackingState};
use submapg_core::oracles::WeightedCoverage;
use submapg_core::pme::{BlockVector, MarginalVector};
use submapg_core::rng::SimRng;
use submapg_core::{PartitionMatroid, SubmodularOracle};

/// Which utility an instance was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Coverage,
    Tracking,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Coverage => "coverage",
            Family::Tracking => "tracking",
        }
    }
}

pub struct Instance {
    pub oracle: Box<dyn SubmodularOracle>,
    pub matroid: PartitionMatroid,
    pub family: Family,
}

/// A tracking round in a 30 m arena with the steering set thinned to
/// `actions` rates, dense enough that most pairs see a target.
pub fn tracking_state(agents: usize, actions: usize, targets: usize, rng: &mut SimRng) -> TrackingState {
    let all = steering_rates();
    let stride = all.len() / actions.max(1);
    TrackingState {
        arena: 30.0,
        agents: (0..agents)
            .map(|_| {
                Pose::new(
                    rng.random_range(5.0..25.0),
                    rng.random_range(5.0..25.0),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            })
            .collect(),
        active_agents: (0..agents).collect(),
        targets: (0..targets)
            .map(|_| Target {
                x: rng.random_range(5.0..25.0),
                y: rng.random_range(5.0..25.0),
                direction: 0.0,
                pattern: MotionPattern::Static,
            })
            .collect(),
        active_targets: (0..targets).collect(),
        agent_speed: 1.0,
        target_speed: 0.25,
        r_sen: 10.0,
        r_com: 25.0,
        dt: 1.0,
        rates: (0..actions).map(|k| all[k * stride]).collect(),
    }
}

/// Even indices draw weighted coverage, odd ones tracking; 1 to 3 agents
/// with 1 to 3 actions each.
pub fn small_instance(index: usize, rng: &mut SimRng) -> Instance {
    let agents = rng.random_range(1..=3);
    let actions = rng.random_range(1..=3);
    let matroid = PartitionMatroid::uniform(agents, actions).expect("nonempty blocks");
    if index.is_multiple_of(2) {
        let items = rng.random_range(3..=8);
        Instance {
            oracle: Box::new(WeightedCoverage::random(agents, actions, items, rng)),
            matroid,
            family: Family::Coverage,
        }
    } else {
        let targets = rng.random_range(1..=3);
        Instance {
            oracle: Box::new(tracking_state(agents, actions, targets, rng).oracle()),
            matroid,
            family: Family::Tracking,
        }
    }
}

/// Random point of the categorical face, with some exact zeros.
pub fn face_point(matroid: &PartitionMatroid, rng: &mut SimRng) -> MarginalVector {
    let rows = matroid
        .blocks()
        .iter()
        .map(|&k| {
            let mut w: Vec<f64> = (0..k)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { -rng.random::<f64>().ln() })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                w[rng.random_range(0..k)] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    BlockVector::new(rows)
}
