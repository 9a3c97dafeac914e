//! Tabular masked-softmax policies and the difference-reward policy-gradient
//! trainer.
//!
//! Each active agent draws its action from a categorical distribution given
//! by a masked softmax over a logit row indexed by (agent slot, observation
//! key). Rows are created lazily at zero logits, so an unseen observation
//! yields the uniform distribution over its feasible actions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::envs::{AgentObservation, MultiAgentEnv, ObservationKey};
use crate::error::{Error, Result};
use crate::pme::{pme_grad_exact, BlockVector, MarginalVector};
use crate::rng::SimRng;
use crate::submodular::{FeasibleSet, PartitionMatroid, SubmodularOracle};

/// Decay of the moving-average baseline.
pub const EMA_DECAY: f64 = 0.99;

/// Row identifier: (agent slot, observation key).
pub type RowKey = (usize, ObservationKey);

/// Gradient with respect to the logit table, one row per touched key.
pub type PolicyGradient = BTreeMap<RowKey, Vec<f64>>;

/// Softmax over the unmasked entries; masked entries get exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} logits against a mask of length {}",
            logits.len(),
            mask.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Infeasible("every action is masked".into()));
    }
    if !max.is_finite() {
        return Err(Error::Domain("logits must be finite".into()));
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Independent per-agent softmax policies over a shared logit table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabularSoftmaxPolicy {
    table: BTreeMap<RowKey, Vec<f64>>,
}

impl TabularSoftmaxPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of materialized rows.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn logits(&self, slot: usize, key: ObservationKey) -> Option<&[f64]> {
        self.table.get(&(slot, key)).map(Vec::as_slice)
    }

    /// The logit row, created at zeros when missing.
    pub fn row_mut(&mut self, slot: usize, key: ObservationKey, actions: usize) -> Result<&mut Vec<f64>> {
        let row = self.table.entry((slot, key)).or_insert_with(|| vec![0.0; actions]);
        if row.len() != actions {
            return Err(Error::Shape(format!(
                "row ({slot}, {key}) has {} actions, observation offers {actions}",
                row.len()
            )));
        }
        Ok(row)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&RowKey, &Vec<f64>)> {
        self.table.iter()
    }

    /// Action probabilities for one observation.
    pub fn probabilities(&self, obs: &AgentObservation) -> Result<Vec<f64>> {
        match self.table.get(&(obs.agent, obs.key)) {
            Some(row) => masked_softmax(row, &obs.mask),
            None => masked_softmax(&vec![0.0; obs.mask.len()], &obs.mask),
        }
    }

    /// x(θ): one probability row per observation, in order.
    pub fn policy_marginals(&self, observations: &[AgentObservation]) -> Result<MarginalVector> {
        let rows = observations
            .iter()
            .map(|o| self.probabilities(o))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockVector::new(rows))
    }

    /// Independent draws, one action per observation.
    pub fn sample_joint<R: Rng + ?Sized>(&self, observations: &[AgentObservation], rng: &mut R) -> Result<FeasibleSet> {
        let mut actions = Vec::with_capacity(observations.len());
        for o in observations {
            let probs = self.probabilities(o)?;
            actions.push(sample_categorical(&probs, rng));
        }
        Ok(FeasibleSet::full(&actions))
    }

    /// Most likely action per observation, lowest index on ties.
    pub fn greedy_joint(&self, observations: &[AgentObservation]) -> Result<FeasibleSet> {
        let mut actions = Vec::with_capacity(observations.len());
        for o in observations {
            let probs = self.probabilities(o)?;
            let best = probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (a, &p)| if p > acc.1 { (a, p) } else { acc })
                .0;
            actions.push(best);
        }
        Ok(FeasibleSet::full(&actions))
    }

    /// ∇_θ log π(action | obs) for the observation's row: one-hot − probs
    /// on unmasked entries, 0 on masked ones.
    pub fn score(&self, obs: &AgentObservation, action: usize) -> Result<Vec<f64>> {
        if action >= obs.mask.len() || !obs.mask[action] {
            return Err(Error::Infeasible(format!("action {action} is not available to agent {}", obs.agent)));
        }
        let probs = self.probabilities(obs)?;
        Ok(probs
            .iter()
            .enumerate()
            .map(|(a, &p)| {
                if !obs.mask[a] {
                    0.0
                } else if a == action {
                    1.0 - p
                } else {
                    -p
                }
            })
            .collect())
    }

    /// θ ← θ + η·g.
    pub fn apply(&mut self, gradient: &PolicyGradient, eta: f64) -> Result<()> {
        for (&(slot, key), g) in gradient {
            let row = self.row_mut(slot, key, g.len())?;
            for (theta, d) in row.iter_mut().zip(g) {
                *theta += eta * d;
            }
        }
        Ok(())
    }

    /// Checkpoint as `slot\tobs_key\taction\tlogit` lines, sorted by key.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (&(slot, key), row) in &self.table {
            for (action, logit) in row.iter().enumerate() {
                let _ = writeln!(out, "{slot}\t{key}\t{action}\t{logit:?}");
            }
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<RowKey, BTreeMap<usize, f64>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Validation(format!("checkpoint line {}: {what}", n + 1));
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let slot = fields[0].parse().map_err(|_| bad("bad slot"))?;
            let key = fields[1].parse().map_err(|_| bad("bad observation key"))?;
            let action: usize = fields[2].parse().map_err(|_| bad("bad action"))?;
            let logit: f64 = fields[3].parse().map_err(|_| bad("bad logit"))?;
            if !logit.is_finite() {
                return Err(bad("logit must be finite"));
            }
            if entries.entry((slot, key)).or_default().insert(action, logit).is_some() {
                return Err(bad("duplicate entry"));
            }
        }
        let mut table = BTreeMap::new();
        for (k, row) in entries {
            if row.keys().copied().ne(0..row.len()) {
                return Err(Error::Validation(format!("checkpoint row {k:?} has gaps in its actions")));
            }
            table.insert(k, row.into_values().collect());
        }
        Ok(Self { table })
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut cumulative = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return a;
        }
    }
    // rounding left u above the total: fall back to the last feasible action
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Exact ∇_θ f(x(θ)) for a single round: the PME gradient pushed through
/// each row's softmax Jacobian, ∂/∂θ_a = p_a (g_a − Σ_b p_b g_b).
pub fn exact_policy_gradient<F: SubmodularOracle + ?Sized>(
    policy: &TabularSoftmaxPolicy,
    observations: &[AgentObservation],
    oracle: &F,
) -> Result<PolicyGradient> {
    let x = policy.policy_marginals(observations)?;
    let matroid = PartitionMatroid::new(x.layout())?;
    let g = pme_grad_exact(oracle, &x, &matroid)?;
    let mut out = PolicyGradient::new();
    for (i, o) in observations.iter().enumerate() {
        let p = x.row(i);
        let mean: f64 = p.iter().zip(g.row(i)).map(|(p, g)| p * g).sum();
        let row: Vec<f64> = p.iter().zip(g.row(i)).map(|(p, g)| p * (g - mean)).collect();
        accumulate(&mut out, (o.agent, o.key), &row, 1.0);
    }
    Ok(out)
}

fn accumulate(gradient: &mut PolicyGradient, key: RowKey, row: &[f64], weight: f64) {
    let slot = gradient.entry(key).or_insert_with(|| vec![0.0; row.len()]);
    for (s, r) in slot.iter_mut().zip(row) {
        *s += weight * r;
    }
}

/// Which per-agent reward drives the returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    /// r_i = F(A) − F(A^{-i}).
    #[default]
    Difference,
    /// r_i = F(A) for every agent.
    Shared,
}

/// One round of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub observations: Vec<AgentObservation>,
    pub joint: FeasibleSet,
    /// F_t(A_t).
    pub utility: f64,
    /// F_t(A_t^{-i}) per block.
    pub counterfactual: Vec<f64>,
    /// F_t(A_t) − F_t(A_t^{-i}) per block.
    pub difference: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn new<F: SubmodularOracle + ?Sized>(
        observations: Vec<AgentObservation>,
        joint: FeasibleSet,
        oracle: &F,
    ) -> Self {
        let utility = oracle.eval(&joint);
        let counterfactual: Vec<f64> = (0..joint.num_agents())
            .map(|i| oracle.eval(&joint.without_agent(i)))
            .collect();
        let difference = counterfactual.iter().map(|c| utility - c).collect();
        Self {
            observations,
            joint,
            utility,
            counterfactual,
            difference,
        }
    }

    pub fn rewards(&self, mode: RewardMode) -> Vec<f64> {
        match mode {
            RewardMode::Difference => self.difference.clone(),
            RewardMode::Shared => vec![self.utility; self.difference.len()],
        }
    }
}

/// Action-independent baseline b subtracted from the returns.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    None,
    /// Per-(slot, observation) exponential moving average of observed
    /// returns, seeded with the first return seen for a row.
    MovingAverage { decay: f64, values: BTreeMap<RowKey, f64> },
}

impl Baseline {
    pub fn moving_average() -> Self {
        Baseline::MovingAverage {
            decay: EMA_DECAY,
            values: BTreeMap::new(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Baseline::None => "none",
            Baseline::MovingAverage { .. } => "ema",
        }
    }
}

/// Ψ_{i,t} = Σ_{k≥t} r_{i,k} − b_{i,t}, indexed `[round][block]`.
///
/// Suffix sums follow the agent id, so a departing agent's return stops at
/// its last active round. The moving average is read before it absorbs the
/// new returns.
pub fn difference_returns(traj: &[TrajectoryRecord], reward: RewardMode, baseline: &mut Baseline) -> Vec<Vec<f64>> {
    let mut tail: BTreeMap<usize, f64> = BTreeMap::new();
    let mut returns: Vec<Vec<f64>> = vec![Vec::new(); traj.len()];
    for (t, record) in traj.iter().enumerate().rev() {
        let r = record.rewards(reward);
        returns[t] = record
            .observations
            .iter()
            .zip(&r)
            .map(|(o, &ri)| {
                let g = tail.entry(o.agent).or_insert(0.0);
                *g += ri;
                *g
            })
            .collect();
    }
    let mut psi = returns.clone();
    if let Baseline::MovingAverage { decay, values } = baseline {
        for (t, record) in traj.iter().enumerate() {
            for (i, o) in record.observations.iter().enumerate() {
                let g = returns[t][i];
                let b = values.entry((o.agent, o.key)).or_insert(g);
                psi[t][i] = g - *b;
                *b = *decay * *b + (1.0 - *decay) * g;
            }
        }
    }
    psi
}

/// Σ_t Σ_i ∇_θ log π(a_{i,t} | o_{i,t}) · Ψ_{i,t}.
pub fn surrogate_gradient(
    policy: &TabularSoftmaxPolicy,
    traj: &[TrajectoryRecord],
    psi: &[Vec<f64>],
) -> Result<PolicyGradient> {
    if psi.len() != traj.len() {
        return Err(Error::Shape(format!("{} return rows for {} rounds", psi.len(), traj.len())));
    }
    let mut out = PolicyGradient::new();
    for (record, weights) in traj.iter().zip(psi) {
        for (i, o) in record.observations.iter().enumerate() {
            let action = record
                .joint
                .get(i)
                .ok_or_else(|| Error::Constraint(format!("agent {} has no action", o.agent)))?;
            let score = policy.score(o, action)?;
            accumulate(&mut out, (o.agent, o.key), &score, weights[i]);
        }
    }
    Ok(out)
}

/// How the policy picks actions during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Plays one episode from reset to the horizon.
pub fn rollout<E: MultiAgentEnv + ?Sized>(
    env: &mut E,
    policy: &TabularSoftmaxPolicy,
    mode: ActionMode,
    rng: &mut SimRng,
) -> Result<Vec<TrajectoryRecord>> {
    rollout_observed(env, policy, mode, rng, |_, _| Ok(()))
}

/// [`rollout`] with a hook that sees the env and the round's record just
/// before the joint action is applied.
pub fn rollout_observed<E, H>(
    env: &mut E,
    policy: &TabularSoftmaxPolicy,
    mode: ActionMode,
    rng: &mut SimRng,
    mut hook: H,
) -> Result<Vec<TrajectoryRecord>>
where
    E: MultiAgentEnv + ?Sized,
    H: FnMut(&E, &TrajectoryRecord) -> Result<()>,
{
    env.reset(rng);
    let mut traj = Vec::with_capacity(env.horizon());
    while !env.is_done() {
        let observations = env.observations();
        let joint = match mode {
            ActionMode::Sample => policy.sample_joint(&observations, rng)?,
            ActionMode::Greedy => policy.greedy_joint(&observations)?,
        };
        let record = TrajectoryRecord::new(observations, joint.clone(), &env.oracle());
        hook(env, &record)?;
        traj.push(record);
        env.step(&joint, rng)?;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub eta: f64,
    pub reward: RewardMode,
    /// Use the moving-average baseline instead of none.
    pub moving_average: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            eta: 0.1,
            reward: RewardMode::Difference,
            moving_average: false,
        }
    }
}

/// Per-episode cumulative utility Σ_t F_t(A_t).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub returns: Vec<f64>,
}

impl LearningCurve {
    /// Mean of the last `n` episodes (all of them if fewer).
    pub fn tail_mean(&self, n: usize) -> f64 {
        let start = self.returns.len().saturating_sub(n);
        let tail = &self.returns[start..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

/// One rollout, returns, surrogate and a vanilla ascent step. Returns the
/// episode's cumulative utility.
pub fn train_episode<E: MultiAgentEnv + ?Sized>(
    env: &mut E,
    policy: &mut TabularSoftmaxPolicy,
    config: &TrainConfig,
    baseline: &mut Baseline,
    rng: &mut SimRng,
) -> Result<f64> {
    let traj = rollout(env, policy, ActionMode::Sample, rng)?;
    let psi = difference_returns(&traj, config.reward, baseline);
    let gradient = surrogate_gradient(policy, &traj, &psi)?;
    policy.apply(&gradient, config.eta)?;
    Ok(traj.iter().map(|r| r.utility).sum())
}

/// The SubMAPG loop: `config.episodes` calls of [`train_episode`].
pub fn submapg_train<E: MultiAgentEnv + ?Sized>(
    env: &mut E,
    policy: &mut TabularSoftmaxPolicy,
    config: &TrainConfig,
    rng: &mut SimRng,
) -> Result<LearningCurve> {
    let mut baseline = if config.moving_average {
        Baseline::moving_average()
    } else {
        Baseline::None
    };
    let mut curve = LearningCurve::default();
    for _ in 0..config.episodes {
        curve.returns.push(train_episode(env, policy, config, &mut baseline, rng)?);
    }
    Ok(curve)
}
