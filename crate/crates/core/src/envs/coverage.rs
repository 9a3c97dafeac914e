use rand::Rng;

use super::density::{density_field, DensityField, DensityKind};
use super::schedule::{open_schedule, OpenSchedule};
use super::{AgentObservation, MultiAgentEnv};
use crate::dynamics::RoundLayout;
use crate::error::{Error, Result};
use crate::oracles::WeightedCoverage;
use crate::rng::SimRng;
use crate::submodular::{FeasibleSet, SubmodularOracle};

/// Grid moves indexed by action: stay, right, up, left, down.
/// x grows to the right, y grows upward.
pub const MOVES: [(i64, i64); 5] = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)];

/// Snapshot of the coverage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageState {
    pub width: usize,
    pub height: usize,
    /// Row-major density, index `y * width + x`.
    pub density: Vec<f64>,
    /// Cell of every agent id, active or not.
    pub positions: Vec<(usize, usize)>,
    /// Active agent ids in block order.
    pub active: Vec<usize>,
    /// Chebyshev coverage radius in cells.
    pub r_cov: usize,
    /// Chebyshev communication radius in cells.
    pub r_com: usize,
}

impl CoverageState {
    pub fn cell_index(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    /// Cell reached from `from` by `action`, clamped to the grid.
    pub fn moved(&self, from: (usize, usize), action: usize) -> (usize, usize) {
        let (dx, dy) = MOVES[action];
        let x = (from.0 as i64 + dx).clamp(0, self.width as i64 - 1) as usize;
        let y = (from.1 as i64 + dy).clamp(0, self.height as i64 - 1) as usize;
        (x, y)
    }

    /// Cells within Chebyshev distance `r_cov` of `center`, clipped to the grid.
    pub fn disc(&self, center: (usize, usize)) -> Vec<usize> {
        let r = self.r_cov;
        let (x0, x1) = (center.0.saturating_sub(r), (center.0 + r).min(self.width - 1));
        let (y0, y1) = (center.1.saturating_sub(r), (center.1 + r).min(self.height - 1));
        (y0..=y1)
            .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
            .map(|c| self.cell_index(c))
            .collect()
    }

    /// Stage utility over the active agents: each pair covers the disc
    /// around the cell its move leads to.
    pub fn oracle(&self) -> WeightedCoverage {
        let cover = self
            .active
            .iter()
            .map(|&agent| {
                (0..MOVES.len())
                    .map(|a| self.disc(self.moved(self.positions[agent], a)))
                    .collect()
            })
            .collect();
        WeightedCoverage::new(cover, self.density.clone()).expect("grid cells index the density")
    }
}

/// Covered information value of the post-move discs selected by `set`.
pub fn coverage_utility(set: &FeasibleSet, state: &CoverageState) -> f64 {
    state.oracle().eval(set)
}

/// Moves every active agent by its selected action.
pub fn coverage_step(state: &CoverageState, joint: &FeasibleSet) -> Result<CoverageState> {
    if joint.num_agents() != state.active.len() || !joint.is_full() {
        return Err(Error::Constraint(format!(
            "coverage step needs one action for each of {} active agents, got {joint}",
            state.active.len()
        )));
    }
    let mut next = state.clone();
    for (block, &agent) in state.active.iter().enumerate() {
        let action = joint.get(block).expect("checked full");
        if action >= MOVES.len() {
            return Err(Error::Validation(format!("coverage action {action} out of range")));
        }
        next.positions[agent] = state.moved(state.positions[agent], action);
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub width: usize,
    pub height: usize,
    /// Agents present for the whole episode.
    pub agents: usize,
    /// Agents that arrive during the episode.
    pub extra_agents: usize,
    pub r_cov: usize,
    pub r_com: usize,
    pub density: DensityKind,
    pub density_seed: u64,
    pub horizon: usize,
    /// Agents start in a `cluster × cluster` block at the origin corner.
    pub cluster: usize,
    pub min_lifespan: usize,
    pub window_fraction: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            width: 30,
            height: 30,
            agents: 5,
            extra_agents: 0,
            r_cov: 1,
            r_com: 2,
            density: DensityKind::Uniform,
            density_seed: 0,
            horizon: 100,
            cluster: 5,
            min_lifespan: 20,
            window_fraction: 0.5,
        }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid must be at least 1×1".into()));
        }
        if self.cluster == 0 || self.cluster > self.width.min(self.height) {
            return Err(Error::Config(format!(
                "start cluster {} must fit in the {}×{} grid",
                self.cluster, self.width, self.height
            )));
        }
        if self.agents + self.extra_agents == 0 {
            return Err(Error::Config("coverage needs at least one agent".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Grid information coverage with an optional open-system schedule.
#[derive(Debug, Clone)]
pub struct CoverageEnv {
    config: CoverageConfig,
    field: DensityField,
    schedule: OpenSchedule,
    state: CoverageState,
    time: usize,
}

impl CoverageEnv {
    pub fn new(config: CoverageConfig) -> Result<Self> {
        config.validate()?;
        let field = density_field(config.density, config.width, config.height, config.density_seed);
        let total = config.agents + config.extra_agents;
        let state = CoverageState {
            width: config.width,
            height: config.height,
            density: field.values.clone(),
            positions: vec![(0, 0); total],
            active: (0..config.agents).collect(),
            r_cov: config.r_cov,
            r_com: config.r_com,
        };
        Ok(Self {
            schedule: OpenSchedule::closed(config.horizon, total),
            config,
            field,
            state,
            time: 0,
        })
    }

    pub fn config(&self) -> &CoverageConfig {
        &self.config
    }

    pub fn field(&self) -> &DensityField {
        &self.field
    }

    pub fn state(&self) -> &CoverageState {
        &self.state
    }

    pub fn schedule(&self) -> &OpenSchedule {
        &self.schedule
    }

    /// Upper bound on any round's utility with every agent active.
    pub fn max_agents(&self) -> usize {
        self.schedule.max_active()
    }
}

impl MultiAgentEnv for CoverageEnv {
    fn reset(&mut self, rng: &mut SimRng) {
        let c = &self.config;
        self.schedule = if c.extra_agents > 0 {
            open_schedule(c.horizon, c.agents, c.extra_agents, c.min_lifespan, c.window_fraction, rng)
                .unwrap_or_else(|_| OpenSchedule::closed(c.horizon, c.agents + c.extra_agents))
        } else {
            OpenSchedule::closed(c.horizon, c.agents)
        };
        for p in &mut self.state.positions {
            *p = (rng.random_range(0..c.cluster), rng.random_range(0..c.cluster));
        }
        self.time = 0;
        self.state.active = self.schedule.active(0);
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn time(&self) -> usize {
        self.time
    }

    fn layout(&self) -> RoundLayout {
        RoundLayout {
            agents: self.state.active.clone(),
            actions: vec![MOVES.len(); self.state.active.len()],
        }
    }

    fn observations(&self) -> Vec<AgentObservation> {
        self.state
            .active
            .iter()
            .map(|&agent| AgentObservation {
                agent,
                key: self.state.cell_index(self.state.positions[agent]) as u64,
                mask: vec![true; MOVES.len()],
            })
            .collect()
    }

    fn oracle(&self) -> Box<dyn SubmodularOracle + '_> {
        Box::new(self.state.oracle())
    }

    fn communication(&self) -> Vec<Vec<bool>> {
        let pos: Vec<(usize, usize)> = self.state.active.iter().map(|&a| self.state.positions[a]).collect();
        pos.iter()
            .map(|p| {
                pos.iter()
                    .map(|q| p.0.abs_diff(q.0).max(p.1.abs_diff(q.1)) <= self.state.r_com)
                    .collect()
            })
            .collect()
    }

    fn step(&mut self, joint: &FeasibleSet, _rng: &mut SimRng) -> Result<()> {
        self.state = coverage_step(&self.state, joint)?;
        self.time += 1;
        if self.time < self.config.horizon {
            self.state.active = self.schedule.active(self.time);
        }
        Ok(())
    }

    fn digest(&self) -> String {
        let cells: Vec<String> = self
            .state
            .active
            .iter()
            .map(|&a| format!("{}:{},{}", a, self.state.positions[a].0, self.state.positions[a].1))
            .collect();
        format!("t={} {}", self.time, cells.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn uniform_state(positions: Vec<(usize, usize)>) -> CoverageState {
        let active = (0..positions.len()).collect();
        CoverageState {
            width: 30,
            height: 30,
            density: vec![1.0; 900],
            positions,
            active,
            r_cov: 1,
            r_com: 2,
        }
    }

    #[test]
    fn utility_examples() {
        let s = uniform_state(vec![(5, 5)]);
        assert_eq!(coverage_utility(&FeasibleSet::full(&[0]), &s), 9.0);
        let corner = uniform_state(vec![(0, 0)]);
        assert_eq!(coverage_utility(&FeasibleSet::full(&[0]), &corner), 4.0);
        let pair = uniform_state(vec![(5, 5), (5, 6)]);
        assert_eq!(coverage_utility(&FeasibleSet::full(&[0, 0]), &pair), 12.0);
        assert_eq!(coverage_utility(&FeasibleSet::empty(2), &pair), 0.0);
    }

    #[test]
    fn utility_scores_post_move_cells() {
        let s = uniform_state(vec![(1, 1)]);
        // moving left puts the disc against the wall: 2 × 3 cells
        assert_eq!(coverage_utility(&FeasibleSet::full(&[3]), &s), 6.0);
    }

    #[test]
    fn step_examples() {
        let s = uniform_state(vec![(3, 3), (29, 10), (3, 3)]);
        let next = coverage_step(&s, &FeasibleSet::full(&[0, 1, 2])).unwrap();
        assert_eq!(next.positions, vec![(3, 3), (29, 10), (3, 4)]);
        assert!(coverage_step(&s, &FeasibleSet::from_selection(vec![Some(0), None, Some(0)])).is_err());
    }

    #[test]
    fn observation_is_row_major_cell() {
        let mut env = CoverageEnv::new(CoverageConfig { agents: 1, ..Default::default() }).unwrap();
        env.state.positions[0] = (3, 4);
        assert_eq!(env.observations()[0].key, 4 * 30 + 3);
    }

    #[test]
    fn marginal_bound_is_one_disc() {
        let s = uniform_state(vec![(5, 5), (0, 0)]);
        assert_eq!(s.oracle().marginal_bound(), 9.0);
    }

    #[test]
    fn reset_is_seeded_and_clustered() {
        let cfg = CoverageConfig {
            agents: 3,
            extra_agents: 2,
            horizon: 100,
            ..Default::default()
        };
        let mut a = CoverageEnv::new(cfg.clone()).unwrap();
        let mut b = CoverageEnv::new(cfg).unwrap();
        a.reset(&mut seeded(4));
        b.reset(&mut seeded(4));
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.schedule(), b.schedule());
        assert!(a.state.positions.iter().all(|&(x, y)| x < 5 && y < 5));
        assert_eq!(a.layout().agents, vec![0, 1, 2]);
    }

    #[test]
    fn open_agents_join_and_leave() {
        let cfg = CoverageConfig {
            agents: 1,
            extra_agents: 2,
            horizon: 60,
            ..Default::default()
        };
        let mut env = CoverageEnv::new(cfg).unwrap();
        let mut rng = seeded(2);
        env.reset(&mut rng);
        let mut seen = vec![];
        while !env.is_done() {
            let n = env.layout().agents.len();
            seen.push(n);
            env.step(&FeasibleSet::full(&vec![0; n]), &mut rng).unwrap();
        }
        assert_eq!(seen[0], 1);
        assert!(seen.iter().any(|&n| n > 1));
    }
}
