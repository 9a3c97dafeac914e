use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::schedule::{open_schedule, OpenSchedule};
use super::{AgentObservation, MultiAgentEnv, ObservationKey};
use crate::dynamics::RoundLayout;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::submodular::{FeasibleSet, SubmodularOracle};

pub const STEERING_ACTIONS: usize = 12;
const MAX_RATE: f64 = PI / 6.0;
const RESAMPLE_PROBABILITY: f64 = 0.05;
const BEARING_SECTORS: u64 = 8;
const RANGE_RINGS: u64 = 3;
const NO_TARGET_CODE: u64 = BEARING_SECTORS * RANGE_RINGS;

/// The 12 evenly spaced turn rates in [−π/6, π/6] rad/s.
pub fn steering_rates() -> Vec<f64> {
    (0..STEERING_ACTIONS)
        .map(|k| -MAX_RATE + 2.0 * MAX_RATE * k as f64 / (STEERING_ACTIONS - 1) as f64)
        .collect()
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Constant-speed unicycle: the position advances along the current heading,
/// then the heading turns by `omega·dt`. Positions clamp to `[0, arena]`.
pub fn unicycle_step(pose: Pose, omega: f64, speed: f64, dt: f64, arena: f64) -> Pose {
    Pose {
        x: (pose.x + speed * dt * pose.heading.cos()).clamp(0.0, arena),
        y: (pose.y + speed * dt * pose.heading.sin()).clamp(0.0, arena),
        heading: wrap_angle(pose.heading + omega * dt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionPattern {
    Static,
    Linear,
    /// Linear, but the direction is redrawn with probability 0.05 each step.
    Random,
}

impl fmt::Display for MotionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionPattern::Static => "static",
            MotionPattern::Linear => "linear",
            MotionPattern::Random => "random",
        })
    }
}

impl FromStr for MotionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "linear" => Ok(Self::Linear),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown motion pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub x: f64,
    pub y: f64,
    /// Direction of travel in radians.
    pub direction: f64,
    pub pattern: MotionPattern,
}

/// Advances a target one step, reflecting off the arena walls.
pub fn target_step<R: Rng + ?Sized>(target: Target, speed: f64, dt: f64, arena: f64, rng: &mut R) -> Target {
    let mut t = target;
    match t.pattern {
        MotionPattern::Static => return t,
        MotionPattern::Linear => {}
        MotionPattern::Random => {
            if rng.random::<f64>() < RESAMPLE_PROBABILITY {
                t.direction = rng.random_range(-PI..PI);
            }
        }
    }
    t.x += speed * dt * t.direction.cos();
    t.y += speed * dt * t.direction.sin();
    if t.x < 0.0 || t.x > arena {
        t.x = if t.x < 0.0 { -t.x } else { 2.0 * arena - t.x };
        t.direction = wrap_angle(PI - t.direction);
    }
    if t.y < 0.0 || t.y > arena {
        t.y = if t.y < 0.0 { -t.y } else { 2.0 * arena - t.y };
        t.direction = wrap_angle(-t.direction);
    }
    t
}

/// Snapshot of the tracking arena.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState {
    pub arena: f64,
    /// Pose of every agent id.
    pub agents: Vec<Pose>,
    pub active_agents: Vec<usize>,
    pub targets: Vec<Target>,
    pub active_targets: Vec<usize>,
    pub agent_speed: f64,
    pub target_speed: f64,
    pub r_sen: f64,
    pub r_com: f64,
    pub dt: f64,
    pub rates: Vec<f64>,
}

impl TrackingState {
    pub fn oracle(&self) -> TrackingOracle {
        let predicted = self
            .active_agents
            .iter()
            .map(|&i| {
                self.rates
                    .iter()
                    .map(|&w| {
                        unicycle_step(self.agents[i], w, self.agent_speed, self.dt, self.arena).position()
                    })
                    .collect()
            })
            .collect();
        let n = self.active_agents.len();
        let m = self.active_targets.len();
        TrackingOracle {
            predicted,
            current: self.active_agents.iter().map(|&i| self.agents[i].position()).collect(),
            targets: self
                .active_targets
                .iter()
                .map(|&j| (self.targets[j].x, self.targets[j].y))
                .collect(),
            r_sen: self.r_sen,
            normalizer: if n == 0 || m == 0 { 0.0 } else { 1.0 / (n * m) as f64 },
            bound: if n == 0 || m == 0 { 0.0 } else { 1.0 / n as f64 },
        }
    }
}

/// F(A) = 1/(|N||M|) Σ_j max_{e ∈ A} w_j(e) with
/// w_j(e) = max(0, (r_sen − ‖p_e − q_j‖) / r_sen) and p_e the predicted
/// next position of pair e.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOracle {
    /// `predicted[block][action]`.
    predicted: Vec<Vec<(f64, f64)>>,
    current: Vec<(f64, f64)>,
    targets: Vec<(f64, f64)>,
    r_sen: f64,
    normalizer: f64,
    bound: f64,
}

impl TrackingOracle {
    pub fn score(&self, block: usize, action: usize, target: usize) -> f64 {
        let (px, py) = self.predicted[block][action];
        let (qx, qy) = self.targets[target];
        let d = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
        ((self.r_sen - d) / self.r_sen).max(0.0)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }
}

impl SubmodularOracle for TrackingOracle {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        if self.normalizer == 0.0 {
            return 0.0;
        }
        let pairs: Vec<_> = set.pairs().collect();
        let total: f64 = (0..self.targets.len())
            .map(|j| {
                pairs
                    .iter()
                    .map(|e| self.score(e.agent, e.action, j))
                    .fold(0.0, f64::max)
            })
            .sum();
        self.normalizer * total
    }

    fn marginal_bound(&self) -> f64 {
        self.bound
    }

    /// Only the targets within sensing range of the agent's current
    /// position; the normalization is kept.
    fn local_view(&self, agent: usize) -> Option<Box<dyn SubmodularOracle + '_>> {
        let (cx, cy) = self.current[agent];
        let targets = self
            .targets
            .iter()
            .copied()
            .filter(|(qx, qy)| ((qx - cx).powi(2) + (qy - cy).powi(2)).sqrt() <= self.r_sen)
            .collect();
        Some(Box::new(TrackingOracle {
            targets,
            ..self.clone()
        }))
    }
}

pub fn tracking_utility(set: &FeasibleSet, state: &TrackingState) -> f64 {
    state.oracle().eval(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConfig {
    pub arena: f64,
    pub agents: usize,
    pub extra_agents: usize,
    pub targets: usize,
    pub extra_targets: usize,
    /// Relative frequency of static, linear and random targets.
    pub pattern_mix: [usize; 3],
    pub horizon: usize,
    pub min_lifespan: usize,
    pub window_fraction: f64,
    pub r_sen: f64,
    pub r_com: f64,
    pub agent_speed: f64,
    pub target_speed: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            arena: 100.0,
            agents: 4,
            extra_agents: 0,
            targets: 4,
            extra_targets: 0,
            pattern_mix: [1, 3, 8],
            horizon: 200,
            min_lifespan: 400,
            window_fraction: 0.75,
            r_sen: 10.0,
            r_com: 25.0,
            agent_speed: 1.0,
            target_speed: 0.25,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arena > 0.0) {
            return Err(Error::Config("arena side must be positive".into()));
        }
        if !(self.r_sen > 0.0) || self.r_com < 0.0 {
            return Err(Error::Config("sensing radius must be positive, communication radius nonnegative".into()));
        }
        if self.pattern_mix.iter().sum::<usize>() == 0 {
            return Err(Error::Config("pattern mix must contain at least one target kind".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    fn pattern_for(&self, target: usize) -> MotionPattern {
        let kinds = [MotionPattern::Static, MotionPattern::Linear, MotionPattern::Random];
        let cycle: Vec<MotionPattern> = kinds
            .iter()
            .zip(self.pattern_mix)
            .flat_map(|(k, n)| std::iter::repeat_n(*k, n))
            .collect();
        cycle[target % cycle.len()]
    }
}

/// Multi-target tracking with unicycle agents and open arrivals.
#[derive(Debug, Clone)]
pub struct TrackingEnv {
    config: TrackingConfig,
    agent_schedule: OpenSchedule,
    target_schedule: OpenSchedule,
    state: TrackingState,
    time: usize,
}

impl TrackingEnv {
    pub fn new(config: TrackingConfig) -> Result<Self> {
        config.validate()?;
        let n = config.agents + config.extra_agents;
        let m = config.targets + config.extra_targets;
        let state = TrackingState {
            arena: config.arena,
            agents: vec![Pose::new(0.0, 0.0, 0.0); n],
            active_agents: (0..config.agents).collect(),
            targets: (0..m)
                .map(|j| Target {
                    x: 0.0,
                    y: 0.0,
                    direction: 0.0,
                    pattern: config.pattern_for(j),
                })
                .collect(),
            active_targets: (0..config.targets).collect(),
            agent_speed: config.agent_speed,
            target_speed: config.target_speed,
            r_sen: config.r_sen,
            r_com: config.r_com,
            dt: 1.0,
            rates: steering_rates(),
        };
        Ok(Self {
            agent_schedule: OpenSchedule::closed(config.horizon, n),
            target_schedule: OpenSchedule::closed(config.horizon, m),
            config,
            state,
            time: 0,
        })
    }

    pub fn state(&self) -> &TrackingState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut TrackingState {
        &mut self.state
    }

    pub fn config(&self) -> &TrackingConfig {
        &self.config
    }

    pub fn max_agents(&self) -> usize {
        self.agent_schedule.max_active()
    }

    /// Coarse local code: bearing sector and range ring of the nearest
    /// sensed target (or a "none" code), times a neighbour-count bucket.
    pub fn observe(&self, agent: usize) -> ObservationKey {
        let s = &self.state;
        let me = s.agents[agent];
        let nearest = s
            .active_targets
            .iter()
            .map(|&j| {
                let (dx, dy) = (s.targets[j].x - me.x, s.targets[j].y - me.y);
                ((dx * dx + dy * dy).sqrt(), dx, dy)
            })
            .filter(|(d, _, _)| *d <= s.r_sen)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let code = match nearest {
            None => NO_TARGET_CODE,
            Some((d, dx, dy)) => {
                let bearing = wrap_angle(dy.atan2(dx) - me.heading);
                let width = 2.0 * PI / BEARING_SECTORS as f64;
                let sector = (((bearing + PI) / width).floor() as u64).min(BEARING_SECTORS - 1);
                let ring = ((d / (s.r_sen / RANGE_RINGS as f64)).floor() as u64).min(RANGE_RINGS - 1);
                sector * RANGE_RINGS + ring
            }
        };
        let neighbours = s
            .active_agents
            .iter()
            .filter(|&&k| k != agent)
            .filter(|&&k| {
                let o = s.agents[k];
                ((o.x - me.x).powi(2) + (o.y - me.y).powi(2)).sqrt() <= s.r_com
            })
            .count()
            .min(2) as u64;
        code * 3 + neighbours
    }
}

impl MultiAgentEnv for TrackingEnv {
    fn reset(&mut self, rng: &mut SimRng) {
        let c = &self.config;
        let sample = |base, extra, rng: &mut SimRng| {
            if extra > 0 {
                open_schedule(c.horizon, base, extra, c.min_lifespan, c.window_fraction, rng)
                    .unwrap_or_else(|_| OpenSchedule::closed(c.horizon, base + extra))
            } else {
                OpenSchedule::closed(c.horizon, base)
            }
        };
        self.agent_schedule = sample(c.agents, c.extra_agents, rng);
        self.target_schedule = sample(c.targets, c.extra_targets, rng);
        for p in &mut self.state.agents {
            *p = Pose::new(
                rng.random::<f64>() * c.arena,
                rng.random::<f64>() * c.arena,
                rng.random_range(-PI..PI),
            );
        }
        for t in &mut self.state.targets {
            t.x = rng.random::<f64>() * c.arena;
            t.y = rng.random::<f64>() * c.arena;
            t.direction = rng.random_range(-PI..PI);
        }
        self.time = 0;
        self.state.active_agents = self.agent_schedule.active(0);
        self.state.active_targets = self.target_schedule.active(0);
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn time(&self) -> usize {
        self.time
    }

    fn layout(&self) -> RoundLayout {
        RoundLayout {
            agents: self.state.active_agents.clone(),
            actions: vec![STEERING_ACTIONS; self.state.active_agents.len()],
        }
    }

    fn observations(&self) -> Vec<AgentObservation> {
        self.state
            .active_agents
            .iter()
            .map(|&agent| AgentObservation {
                agent,
                key: self.observe(agent),
                mask: vec![true; STEERING_ACTIONS],
            })
            .collect()
    }

    fn oracle(&self) -> Box<dyn SubmodularOracle + '_> {
        Box::new(self.state.oracle())
    }

    fn communication(&self) -> Vec<Vec<bool>> {
        let s = &self.state;
        let pos: Vec<Pose> = s.active_agents.iter().map(|&i| s.agents[i]).collect();
        pos.iter()
            .map(|p| {
                pos.iter()
                    .map(|q| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() <= s.r_com)
                    .collect()
            })
            .collect()
    }

    fn step(&mut self, joint: &FeasibleSet, rng: &mut SimRng) -> Result<()> {
        let s = &mut self.state;
        if joint.num_agents() != s.active_agents.len() || !joint.is_full() {
            return Err(Error::Constraint(format!(
                "tracking step needs one action for each of {} active agents, got {joint}",
                s.active_agents.len()
            )));
        }
        for (block, &agent) in s.active_agents.iter().enumerate() {
            let action = joint.get(block).expect("checked full");
            let omega = *s
                .rates
                .get(action)
                .ok_or_else(|| Error::Validation(format!("steering action {action} out of range")))?;
            s.agents[agent] = unicycle_step(s.agents[agent], omega, s.agent_speed, s.dt, s.arena);
        }
        for &j in &s.active_targets {
            s.targets[j] = target_step(s.targets[j], s.target_speed, s.dt, s.arena, rng);
        }
        self.time += 1;
        if self.time < self.config.horizon {
            s.active_agents = self.agent_schedule.active(self.time);
            s.active_targets = self.target_schedule.active(self.time);
        }
        Ok(())
    }

    fn active_targets(&self) -> usize {
        self.state.active_targets.len()
    }

    fn digest(&self) -> String {
        let s = &self.state;
        let agents: Vec<String> = s
            .active_agents
            .iter()
            .map(|&i| format!("a{}:{:.6},{:.6},{:.6}", i, s.agents[i].x, s.agents[i].y, s.agents[i].heading))
            .collect();
        let targets: Vec<String> = s
            .active_targets
            .iter()
            .map(|&j| format!("m{}:{:.6},{:.6}", j, s.targets[j].x, s.targets[j].y))
            .collect();
        format!("t={} {} {}", self.time, agents.join(" "), targets.join(" "))
    }
}
