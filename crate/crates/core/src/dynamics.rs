//! Projected stochastic gradient ascent on PME marginals.
//!
//! Two regimes are covered. [`stagewise_sga`] repeatedly ascends one fixed
//! stage objective on its categorical face and records the running average
//! value next to its guaranteed lower bound
//! `½·OPT − D·√(G² + σ²) / (2√K)`. [`run_online`] takes one step per round of
//! a changing stream (two projections per step so the iterate follows the
//! agent set) and accounts the expected dynamic ½-regret against the bound
//! `D²/(4η) + D·P_T/(2η) + η·T·(G² + σ²)/4`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::oracles::WeightedCoverage;
use crate::pme::{
    diff_reward_gradient, pme_exact, pme_grad_exact, BlockVector, GradientVector, MarginalVector,
};
use crate::polytope::{
    diameter_and_bounds, path_length, project_block, project_face, ExplicitBounds, FaceSpec,
    SlotMap,
};
use crate::rng::SimRng;
use crate::submodular::{
    brute_force_opt, brute_force_opt_full, PartitionMatroid, SubmodularOracle,
    DEFAULT_ENUMERATION_CAP,
};

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn require_nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be nonnegative and finite, got {v}")));
    }
    Ok(())
}

/// η = D / √(K (G² + σ²)).
pub fn step_size_stagewise(diameter: f64, gradient: f64, sigma: f64, iterations: usize) -> Result<f64> {
    require_positive("diameter", diameter)?;
    require_positive("gradient bound", gradient)?;
    require_positive("sigma", sigma)?;
    if iterations == 0 {
        return Err(Error::Domain("iteration count must be positive".into()));
    }
    Ok(diameter / (iterations as f64 * (gradient * gradient + sigma * sigma)).sqrt())
}

/// ½·OPT − D √(G² + σ²) / (2 √K).
pub fn stagewise_rhs(opt: f64, diameter: f64, gradient: f64, sigma: f64, iterations: usize) -> f64 {
    0.5 * opt
        - diameter * (gradient * gradient + sigma * sigma).sqrt() / (2.0 * (iterations as f64).sqrt())
}

/// η* = √(D (D + 2 P_T) / (T (G² + σ²))).
pub fn step_size_dynamic(
    diameter: f64,
    path: f64,
    horizon: usize,
    gradient: f64,
    sigma: f64,
) -> Result<f64> {
    require_positive("diameter", diameter)?;
    require_nonnegative("path length", path)?;
    require_nonnegative("gradient bound", gradient)?;
    require_nonnegative("sigma", sigma)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least one round".into()));
    }
    let noise = gradient * gradient + sigma * sigma;
    require_positive("G² + σ²", noise)?;
    Ok((diameter * (diameter + 2.0 * path) / (horizon as f64 * noise)).sqrt())
}

/// D²/(4η) + D·P_T/(2η) + η·T·(G² + σ²)/4.
pub fn regret_bound_rhs(
    diameter: f64,
    path: f64,
    horizon: usize,
    gradient: f64,
    sigma: f64,
    step: f64,
) -> Result<f64> {
    require_positive("step size", step)?;
    require_nonnegative("diameter", diameter)?;
    require_nonnegative("path length", path)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least one round".into()));
    }
    let noise = gradient * gradient + sigma * sigma;
    Ok(diameter * diameter / (4.0 * step)
        + diameter * path / (2.0 * step)
        + step * horizon as f64 * noise / 4.0)
}

/// ½ √(D (D + 2 P_T) T (G² + σ²)), the bound at η = η*.
pub fn regret_bound_optimal(diameter: f64, path: f64, horizon: usize, gradient: f64, sigma: f64) -> f64 {
    0.5 * (diameter * (diameter + 2.0 * path) * horizon as f64 * (gradient * gradient + sigma * sigma))
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientEstimator {
    /// Exact enumeration of the PME gradient.
    Exact,
    /// One joint draw, difference rewards for every pair.
    DifferenceReward,
}

pub fn estimate_gradient<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
    estimator: GradientEstimator,
    rng: &mut R,
) -> Result<GradientVector> {
    match estimator {
        GradientEstimator::Exact => pme_grad_exact(oracle, x, matroid),
        GradientEstimator::DifferenceReward => diff_reward_gradient(oracle, x, matroid, rng),
    }
}

/// Iterates and values of a stagewise run on one fixed stage objective.
#[derive(Debug, Clone)]
pub struct StagewiseRun {
    pub iterates: Vec<MarginalVector>,
    /// Exact PME value of each iterate.
    pub values: Vec<f64>,
    pub opt: f64,
    pub step: f64,
    pub bounds: ExplicitBounds,
}

impl StagewiseRun {
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    /// (1/K) Σ_k f(x_k).
    pub fn average_value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// The guaranteed lower bound on the expected average value.
    pub fn rhs(&self) -> f64 {
        stagewise_rhs(
            self.opt,
            self.bounds.diameter,
            self.bounds.gradient,
            self.bounds.sigma,
            self.iterations(),
        )
    }

    /// Whether the value is nondecreasing (within `tol`) over the final
    /// `fraction` of iterations.
    pub fn tail_is_monotone(&self, fraction: f64, tol: f64) -> bool {
        let n = self.values.len();
        let start = n - ((n as f64 * fraction).ceil() as usize).min(n);
        self.values[start..].windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// Projected stochastic gradient ascent x_{k+1} = Π_face(x_k + η g_k) from
/// the face barycenter.
pub fn stagewise_sga<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    iterations: usize,
    step: f64,
    estimator: GradientEstimator,
    rng: &mut R,
) -> Result<StagewiseRun> {
    stagewise_sga_from(
        oracle,
        matroid,
        BlockVector::uniform(matroid.blocks()),
        iterations,
        step,
        estimator,
        rng,
    )
}

pub fn stagewise_sga_from<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    start: MarginalVector,
    iterations: usize,
    step: f64,
    estimator: GradientEstimator,
    rng: &mut R,
) -> Result<StagewiseRun> {
    require_nonnegative("step size", step)?;
    let face = FaceSpec::categorical(matroid.blocks().to_vec())?;
    let mut x = project_face(&start, &face)?;
    let (_, opt) = brute_force_opt(oracle, matroid, DEFAULT_ENUMERATION_CAP)?;
    let bounds = diameter_and_bounds(oracle.marginal_bound(), matroid.num_agents(), matroid.max_block());
    let mut iterates = Vec::with_capacity(iterations);
    let mut values = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        values.push(pme_exact(oracle, &x, matroid)?);
        let g = estimate_gradient(oracle, &x, matroid, estimator, rng)?;
        let next = project_face(&x.add_scaled(&g, step), &face)?;
        iterates.push(std::mem::replace(&mut x, next));
    }
    Ok(StagewiseRun {
        iterates,
        values,
        opt,
        step,
        bounds,
    })
}

/// Active agent ids and their action counts for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundLayout {
    pub agents: Vec<usize>,
    pub actions: Vec<usize>,
}

impl RoundLayout {
    pub fn new(agents: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if agents.len() != actions.len() {
            return Err(Error::Shape("one action count per agent required".into()));
        }
        Ok(Self { agents, actions })
    }

    pub fn matroid(&self) -> Result<PartitionMatroid> {
        PartitionMatroid::new(self.actions.clone())
    }

    pub fn face(&self) -> Result<FaceSpec> {
        FaceSpec::categorical(self.actions.clone())
    }
}

/// Carries a point of round t's face onto round t+1's face: persisting agents
/// keep their block (resized if their action count changed), arriving agents
/// start uniform, departed agents are dropped; the result is projected.
pub fn remap_to_layout(x: &MarginalVector, from: &RoundLayout, to: &RoundLayout) -> Result<MarginalVector> {
    if x.layout() != from.actions {
        return Err(Error::Shape(format!(
            "iterate layout {:?} does not match round layout {:?}",
            x.layout(),
            from.actions
        )));
    }
    let rows = to
        .agents
        .iter()
        .zip(&to.actions)
        .map(|(agent, &k)| match from.agents.iter().position(|a| a == agent) {
            Some(i) => {
                let mut row = x.row(i).to_vec();
                row.resize(k, 0.0);
                project_block(&row, true)
            }
            None => vec![1.0 / k as f64; k],
        })
        .collect();
    Ok(BlockVector::new(rows))
}

/// x̄ = Π_{F_t}(x_t + η g_t), then x_{t+1} = Π_{F_{t+1}}(x̄) across the
/// change of agent set.
pub fn two_step_update(
    x: &MarginalVector,
    gradient: &GradientVector,
    step: f64,
    from: &RoundLayout,
    to: &RoundLayout,
) -> Result<MarginalVector> {
    if !x.same_layout(gradient) {
        return Err(Error::Shape("gradient layout differs from iterate".into()));
    }
    let bar = project_face(&x.add_scaled(gradient, step), &from.face()?)?;
    remap_to_layout(&bar, from, to)
}

/// One round of an online stream: who is active and what they are scored by.
pub struct OnlineRound {
    pub layout: RoundLayout,
    pub oracle: Box<dyn SubmodularOracle>,
}

/// A sequence of stage problems, revealed one round at a time.
pub trait OnlineStream {
    fn horizon(&self) -> usize;
    /// Largest number of simultaneously active agents.
    fn max_agents(&self) -> usize;
    /// Largest per-agent action count.
    fn max_actions(&self) -> usize;
    fn round(&mut self, t: usize, rng: &mut SimRng) -> Result<OnlineRound>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub round: usize,
    pub active_agents: usize,
    pub opt: f64,
    /// f̃_t(x_t), the expected utility of the played marginals.
    pub achieved: f64,
    /// ½·OPT_t − f̃_t(x_t).
    pub instantaneous: f64,
    pub cumulative: f64,
    /// Embedded indicator of the discrete maximizer (path-length proxy).
    pub embedded_opt: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub records: Vec<RegretRecord>,
    pub path_length: f64,
    pub step: f64,
    pub bounds: ExplicitBounds,
    /// Largest declared marginal bound B seen over the stream.
    pub marginal_bound: f64,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative)
    }

    /// Right-hand side of the regret bound at the step size used and the
    /// measured path length.
    pub fn bound_rhs(&self) -> Result<f64> {
        regret_bound_rhs(
            self.bounds.diameter,
            self.path_length,
            self.horizon().max(1),
            self.bounds.gradient,
            self.bounds.sigma,
            self.step,
        )
    }
}

/// Plays the two-step dynamics over a stream, starting from the uniform
/// marginals, and accounts the dynamic ½-regret of the expected utility.
pub fn run_online<S: OnlineStream + ?Sized>(
    stream: &mut S,
    step: f64,
    estimator: GradientEstimator,
    rng: &mut SimRng,
) -> Result<RegretTrace> {
    require_nonnegative("step size", step)?;
    let mut slots = SlotMap::new(stream.max_agents(), stream.max_actions());
    let mut records = Vec::with_capacity(stream.horizon());
    let mut previous: Option<(RoundLayout, MarginalVector)> = None;
    let mut cumulative = 0.0;
    let mut marginal_bound: f64 = 0.0;
    for t in 0..stream.horizon() {
        let OnlineRound { layout, oracle } = stream.round(t, rng)?;
        let matroid = layout.matroid()?;
        let x = match previous.take() {
            None => BlockVector::uniform(&layout.actions),
            Some((prev_layout, bar)) => remap_to_layout(&bar, &prev_layout, &layout)?,
        };
        let achieved = pme_exact(oracle.as_ref(), &x, &matroid)?;
        let (opt_set, opt) = brute_force_opt_full(oracle.as_ref(), &matroid, DEFAULT_ENUMERATION_CAP)?;
        slots.sync(&layout.agents)?;
        let embedded_opt = slots.embed(&layout.agents, &BlockVector::indicator(&opt_set, &layout.actions))?;
        marginal_bound = marginal_bound.max(oracle.marginal_bound());
        let instantaneous = 0.5 * opt - achieved;
        cumulative += instantaneous;
        records.push(RegretRecord {
            round: t,
            active_agents: layout.agents.len(),
            opt,
            achieved,
            instantaneous,
            cumulative,
            embedded_opt,
        });
        let g = estimate_gradient(oracle.as_ref(), &x, &matroid, estimator, rng)?;
        let bar = project_face(&x.add_scaled(&g, step), &layout.face()?)?;
        previous = Some((layout, bar));
    }
    let optima: Vec<Vec<f64>> = records.iter().map(|r| r.embedded_opt.clone()).collect();
    Ok(RegretTrace {
        path_length: path_length(&optima)?,
        step,
        bounds: diameter_and_bounds(marginal_bound, stream.max_agents(), stream.max_actions()),
        marginal_bound,
        records,
    })
}

/// Weighted-coverage stream whose item weights follow a bounded random walk
/// (each weight moves by at most `drift` per round, clipped to [0.01, 1]).
///
/// An optional schedule of `(arrival, departure)` rounds per agent turns it
/// into an open system; agents absent from a round are dropped from its
/// oracle.
#[derive(Debug, Clone)]
pub struct DriftingCoverageStream {
    base: WeightedCoverage,
    horizon: usize,
    drift: f64,
    schedule: Option<Vec<(usize, usize)>>,
    current: Vec<f64>,
}

impl DriftingCoverageStream {
    pub fn new(base: WeightedCoverage, horizon: usize, drift: f64) -> Self {
        let current = base.weights().to_vec();
        Self {
            base,
            horizon,
            drift,
            schedule: None,
            current,
        }
    }

    pub fn with_schedule(mut self, schedule: Vec<(usize, usize)>) -> Result<Self> {
        if schedule.len() != self.base.matroid().num_agents() {
            return Err(Error::Shape("one (arrival, departure) pair per agent required".into()));
        }
        self.schedule = Some(schedule);
        Ok(self)
    }

    fn active(&self, t: usize) -> Vec<usize> {
        let n = self.base.matroid().num_agents();
        match &self.schedule {
            None => (0..n).collect(),
            Some(s) => (0..n).filter(|&i| s[i].0 <= t && t < s[i].1).collect(),
        }
    }
}

impl OnlineStream for DriftingCoverageStream {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn max_agents(&self) -> usize {
        (0..self.horizon)
            .map(|t| self.active(t).len())
            .max()
            .unwrap_or(0)
    }

    fn max_actions(&self) -> usize {
        self.base.matroid().max_block()
    }

    fn round(&mut self, t: usize, rng: &mut SimRng) -> Result<OnlineRound> {
        if t > 0 && self.drift > 0.0 {
            for w in &mut self.current {
                *w = (*w + rng.random_range(-self.drift..=self.drift)).clamp(0.01, 1.0);
            }
        }
        let agents = self.active(t);
        let matroid = self.base.matroid();
        let cover = agents
            .iter()
            .map(|&i| {
                (0..matroid.block(i))
                    .map(|a| self.base.covered_by(i, a).to_vec())
                    .collect()
            })
            .collect();
        let actions = agents.iter().map(|&i| matroid.block(i)).collect();
        let oracle = WeightedCoverage::new(cover, self.current.clone())?;
        Ok(OnlineRound {
            layout: RoundLayout::new(agents, actions)?,
            oracle: Box::new(oracle),
        })
    }
}

/// Stream that alternates between two stage problems every round, so the
/// discrete optimum jumps each round.
pub struct AlternatingStream {
    pub first: WeightedCoverage,
    pub second: WeightedCoverage,
    pub horizon: usize,
}

impl OnlineStream for AlternatingStream {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn max_agents(&self) -> usize {
        self.first.matroid().num_agents()
    }

    fn max_actions(&self) -> usize {
        self.first.matroid().max_block()
    }

    fn round(&mut self, t: usize, _rng: &mut SimRng) -> Result<OnlineRound> {
        let oracle = if t.is_multiple_of(2) { &self.first } else { &self.second };
        let m = oracle.matroid();
        Ok(OnlineRound {
            layout: RoundLayout::new((0..m.num_agents()).collect(), m.blocks().to_vec())?,
            oracle: Box::new(oracle.clone()),
        })
    }
}
