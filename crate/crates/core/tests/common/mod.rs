#![allow(dead_code)]

use rand::Rng;
use submapg_core::envs::{steering_rates, MotionPattern, Pose, Target, TrackingState};
use submapg_core::oracles::WeightedCoverage;
use submapg_core::pme::{BlockVector, MarginalVector};
use submapg_core::rng::SimRng;
use submapg_core::{FeasibleSet, PartitionMatroid, SubmodularOracle};

pub type Instance = (Box<dyn SubmodularOracle>, PartitionMatroid, &'static str);

/// Random tracking round with `agents` agents restricted to `actions`
/// steering rates, crowded enough that most pairs score something.
pub fn tracking_instance(agents: usize, actions: usize, targets: usize, rng: &mut SimRng) -> TrackingState {
    let arena = 30.0;
    let all = steering_rates();
    let stride = all.len() / actions;
    TrackingState {
        arena,
        agents: (0..agents)
            .map(|_| Pose::new(rng.random_range(5.0..25.0), rng.random_range(5.0..25.0), rng.random_range(-3.1..3.1)))
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

/// Alternates coverage and tracking oracles with 1..=3 agents and
/// 1..=3 actions.
pub fn small_instance(index: usize, rng: &mut SimRng) -> Instance {
    let agents = rng.random_range(1..=3);
    let actions = rng.random_range(1..=3);
    let m = PartitionMatroid::uniform(agents, actions).unwrap();
    if index.is_multiple_of(2) {
        let items = rng.random_range(3..=8);
        (Box::new(WeightedCoverage::random(agents, actions, items, rng)), m, "coverage")
    } else {
        let targets = rng.random_range(1..=3);
        (Box::new(tracking_instance(agents, actions, targets, rng).oracle()), m, "tracking")
    }
}

/// A random point of the categorical face; some rows are sparse so that
/// boundary points get exercised too.
pub fn face_point(m: &PartitionMatroid, rng: &mut SimRng) -> MarginalVector {
    let rows = m
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

/// Σ over full joint actions of Π_i x_(i, a_i) · F(A), by a plain odometer
/// over action tuples.
pub fn expectation_by_enumeration(oracle: &dyn SubmodularOracle, x: &MarginalVector) -> f64 {
    let layout = x.layout();
    let n = layout.len();
    let mut digits = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let weight: f64 = digits.iter().enumerate().map(|(i, &a)| x.row(i)[a]).product();
        if weight > 0.0 {
            total += weight * oracle.eval(&FeasibleSet::full(&digits));
        }
        let mut i = 0;
        loop {
            if i == n {
                return total;
            }
            digits[i] += 1;
            if digits[i] < layout[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
