//! The partition multilinear extension (PME).
//!
//! A marginal vector `x` assigns each agent a probability for every one of its
//! actions; the remaining `1 - Σ_a x_(i,a)` is the probability the agent
//! idles. The PME is the expectation of F under the product of these
//! per-agent categorical distributions:
//!
//! ```text
//! f(x) = Σ_{A independent} F(A) Π_i p_i(A; x),
//! p_i(A; x) = x_(i,a)            if A selects (i,a)
//!           = 1 - Σ_a x_(i,a)    if agent i idles in A
//! ```
//!
//! Its partial derivative in x_(i,a) is the expected marginal gain of (i,a)
//! over the other agents' draws, which is also what a single-sample
//! difference reward estimates without bias.

use rand::Rng;

use crate::error::{Error, Result};
use crate::submodular::{
    AgentActionPair, FeasibleSet, PartitionMatroid, SubmodularOracle, DEFAULT_ENUMERATION_CAP,
};

/// Slack allowed on polytope membership.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// One real per agent-action pair, stored per agent block.
///
/// Used both for marginal vectors (points of the polytope) and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    rows: Vec<Vec<f64>>,
}

pub type MarginalVector = BlockVector;
pub type GradientVector = BlockVector;

impl BlockVector {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn zeros(layout: &[usize]) -> Self {
        Self::new(layout.iter().map(|&k| vec![0.0; k]).collect())
    }

    /// Barycenter of the categorical face: every agent uniform over its actions.
    pub fn uniform(layout: &[usize]) -> Self {
        Self::new(layout.iter().map(|&k| vec![1.0 / k as f64; k]).collect())
    }

    /// Indicator vector of an independent set.
    pub fn indicator(set: &FeasibleSet, layout: &[usize]) -> Self {
        let mut v = Self::zeros(layout);
        for e in set.pairs() {
            v.rows[e.agent][e.action] = 1.0;
        }
        v
    }

    pub fn from_flat(layout: &[usize], flat: &[f64]) -> Result<Self> {
        let total: usize = layout.iter().sum();
        if total != flat.len() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, layout needs {total}",
                flat.len()
            )));
        }
        let mut rows = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for &k in layout {
            rows.push(flat[offset..offset + k].to_vec());
            offset += k;
        }
        Ok(Self::new(rows))
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.rows[agent]
    }

    pub fn row_mut(&mut self, agent: usize) -> &mut Vec<f64> {
        &mut self.rows[agent]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn get(&self, e: AgentActionPair) -> f64 {
        self.rows[e.agent][e.action]
    }

    pub fn num_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn layout(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().flatten().copied()
    }

    /// Probability that `agent` idles, 1 − Σ_a x_(i,a).
    pub fn idle(&self, agent: usize) -> f64 {
        1.0 - self.rows[agent].iter().sum::<f64>()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// self + scale · other.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        self.zip_with(other, |a, b| a + scale * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(
            self.rows
                .iter()
                .map(|r| r.iter().map(|v| v * s).collect())
                .collect(),
        )
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(
            self.rows
                .iter()
                .zip(&other.rows)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        )
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| a.len() == b.len())
    }

    /// Errors unless the layout matches `matroid` and the point lies in the
    /// partition matroid polytope (within [`MEMBERSHIP_TOL`]).
    pub fn check_polytope(&self, matroid: &PartitionMatroid) -> Result<()> {
        self.check_layout(matroid)?;
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(v) = row
                .iter()
                .find(|v| !v.is_finite() || **v < -MEMBERSHIP_TOL || **v > 1.0 + MEMBERSHIP_TOL)
            {
                return Err(Error::Domain(format!("agent {i} has coordinate {v} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + MEMBERSHIP_TOL {
                return Err(Error::Domain(format!("agent {i} has total mass {sum} > 1")));
            }
        }
        Ok(())
    }

    pub fn check_layout(&self, matroid: &PartitionMatroid) -> Result<()> {
        if self.layout() != matroid.blocks() {
            return Err(Error::Shape(format!(
                "vector layout {:?} does not match matroid blocks {:?}",
                self.layout(),
                matroid.blocks()
            )));
        }
        Ok(())
    }

    /// Whether every agent's mass sums to one within `tol`.
    pub fn is_on_face(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| {
            r.iter().all(|v| *v >= -tol) && (r.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// Visits every independent set with nonzero probability under D(x) together
/// with that probability, holding the agents in `skip` idle.
///
/// Idle mass is not clamped so the same routine evaluates the multilinear
/// polynomial slightly outside the polytope (finite differences need that).
fn for_each_weighted(
    x: &BlockVector,
    skip: &[usize],
    mut visit: impl FnMut(&FeasibleSet, f64),
) {
    fn recurse(
        x: &BlockVector,
        skip: &[usize],
        agent: usize,
        weight: f64,
        set: &mut FeasibleSet,
        visit: &mut dyn FnMut(&FeasibleSet, f64),
    ) {
        if agent == x.num_agents() {
            visit(set, weight);
            return;
        }
        if skip.contains(&agent) {
            recurse(x, skip, agent + 1, weight, set, visit);
            return;
        }
        for (action, &p) in x.row(agent).iter().enumerate() {
            if p != 0.0 {
                set.set(agent, Some(action));
                recurse(x, skip, agent + 1, weight * p, set, visit);
            }
        }
        set.set(agent, None);
        let idle = x.idle(agent);
        if idle != 0.0 {
            recurse(x, skip, agent + 1, weight * idle, set, visit);
        }
    }
    let mut set = FeasibleSet::empty(x.num_agents());
    recurse(x, skip, 0, 1.0, &mut set, &mut visit);
}

fn check_cap(matroid: &PartitionMatroid, skip: &[usize]) -> Result<()> {
    let required = matroid.feasible_count_without(skip);
    if required > DEFAULT_ENUMERATION_CAP {
        return Err(Error::Size {
            required,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    Ok(())
}

fn polynomial<F: SubmodularOracle + ?Sized>(oracle: &F, x: &BlockVector) -> f64 {
    let mut total = 0.0;
    for_each_weighted(x, &[], |set, w| total += w * oracle.eval(set));
    total
}

/// Exact PME value by enumeration of the independent sets.
pub fn pme_exact<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
) -> Result<f64> {
    x.check_polytope(matroid)?;
    check_cap(matroid, &[])?;
    Ok(polynomial(oracle, x))
}

/// Draws A ~ D(x) by inverse CDF per agent over (actions..., idle).
pub fn sample_set<R: Rng + ?Sized>(x: &MarginalVector, rng: &mut R) -> FeasibleSet {
    let mut set = FeasibleSet::empty(x.num_agents());
    for (agent, row) in x.rows().iter().enumerate() {
        let mass: f64 = row.iter().sum();
        // on the face the idle branch must never fire because of rounding
        let total = if 1.0 - mass <= MEMBERSHIP_TOL { mass } else { 1.0 };
        let u = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (action, &p) in row.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                chosen = Some(action);
                break;
            }
        }
        if chosen.is_none() && total == mass {
            chosen = row.iter().rposition(|&p| p > 0.0);
        }
        set.set(agent, chosen);
    }
    set
}

/// Monte-Carlo PME estimate: (mean, standard error of the mean).
pub fn pme_monte_carlo<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    x.check_polytope(matroid)?;
    if samples == 0 {
        return Err(Error::Domain("Monte-Carlo estimate needs at least one sample".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..samples {
        let v = oracle.eval(&sample_set(x, rng));
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let stderr = if samples > 1 {
        (m2 / (samples - 1) as f64).sqrt() / (samples as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// Exact gradient: ∂f/∂x_(i,a) = E_{A^{-i} ~ D^{-i}(x)} [F((i,a) | A^{-i})].
pub fn pme_grad_exact<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
) -> Result<GradientVector> {
    x.check_polytope(matroid)?;
    let mut grad = BlockVector::zeros(matroid.blocks());
    for agent in 0..matroid.num_agents() {
        check_cap(matroid, &[agent])?;
        let row = grad.row_mut(agent);
        for_each_weighted(x, &[agent], |others, w| {
            let base = oracle.eval(others);
            let mut with = others.clone();
            for (action, slot) in row.iter_mut().enumerate() {
                with.set(agent, Some(action));
                *slot += w * (oracle.eval(&with) - base);
            }
        });
    }
    Ok(grad)
}

/// Central finite differences of [`pme_exact`], one-sided where a coordinate
/// would leave [0, 1].
pub fn pme_grad_fd<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
    h: f64,
) -> Result<GradientVector> {
    x.check_polytope(matroid)?;
    check_cap(matroid, &[])?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step {h} must be positive")));
    }
    let mut grad = BlockVector::zeros(matroid.blocks());
    for agent in 0..matroid.num_agents() {
        for action in 0..matroid.block(agent) {
            let v = x.row(agent)[action];
            let forward = v + h <= 1.0;
            let backward = v - h >= 0.0;
            let eval_at = |value: f64| {
                let mut shifted = x.clone();
                shifted.row_mut(agent)[action] = value;
                polynomial(oracle, &shifted)
            };
            grad.row_mut(agent)[action] = match (forward, backward) {
                (true, true) => (eval_at(v + h) - eval_at(v - h)) / (2.0 * h),
                (true, false) => (eval_at(v + h) - eval_at(v)) / h,
                (false, true) => (eval_at(v) - eval_at(v - h)) / h,
                (false, false) => {
                    return Err(Error::Domain(format!("step {h} does not fit in [0, 1]")))
                }
            };
        }
    }
    Ok(grad)
}

/// Single-sample difference-reward gradient: draw A ~ D(x) and report
/// F((i,a) | A^{-i}) for every pair. Unbiased for [`pme_grad_exact`].
pub fn diff_reward_gradient<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
    rng: &mut R,
) -> Result<GradientVector> {
    x.check_polytope(matroid)?;
    let sample = sample_set(x, rng);
    Ok(difference_rewards_at(oracle, &sample, matroid))
}

/// F((i,a) | A^{-i}) for every pair, given a joint draw A.
pub fn difference_rewards_at<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    sample: &FeasibleSet,
    matroid: &PartitionMatroid,
) -> GradientVector {
    let mut grad = BlockVector::zeros(matroid.blocks());
    for agent in 0..matroid.num_agents() {
        let mut with = sample.without_agent(agent);
        let base = oracle.eval(&with);
        for (action, slot) in grad.row_mut(agent).iter_mut().enumerate() {
            with.set(agent, Some(action));
            *slot = oracle.eval(&with) - base;
        }
    }
    grad
}

/// Mixed second derivative ∂²f / ∂x_(i,a) ∂x_(u,v):
/// E_{S ~ D^{-{i,u}}} [F((i,a) | S ∪ {(u,v)}) − F((i,a) | S)].
///
/// Within one agent the PME is affine in that agent's block, so same-agent
/// pairs return exactly 0.
pub fn pme_second_diff<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    x: &MarginalVector,
    matroid: &PartitionMatroid,
    first: AgentActionPair,
    second: AgentActionPair,
) -> Result<f64> {
    x.check_polytope(matroid)?;
    matroid.check_pair(first)?;
    matroid.check_pair(second)?;
    if first.agent == second.agent {
        return Ok(0.0);
    }
    let skip = [first.agent, second.agent];
    check_cap(matroid, &skip)?;
    let mut total = 0.0;
    for_each_weighted(x, &skip, |s, w| {
        let mut set = s.clone();
        let f_s = oracle.eval(&set);
        set.set(first.agent, Some(first.action));
        let f_si = oracle.eval(&set);
        set.set(second.agent, Some(second.action));
        let f_siu = oracle.eval(&set);
        set.set(first.agent, None);
        let f_su = oracle.eval(&set);
        total += w * ((f_siu - f_su) - (f_si - f_s));
    });
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{overlap_toy, ModularOracle, WeightedCoverage, ZeroOracle};
    use crate::rng::seeded;

    fn half() -> BlockVector {
        BlockVector::new(vec![vec![0.5], vec![0.5]])
    }

    #[test]
    fn exact_value_on_toy() {
        let (f, m) = overlap_toy();
        assert!((pme_exact(&f, &half(), &m).unwrap() - 0.875).abs() < 1e-15);
        assert_eq!(pme_exact(&f, &BlockVector::zeros(m.blocks()), &m).unwrap(), 0.0);
        let ind = BlockVector::indicator(&FeasibleSet::full(&[0, 0]), m.blocks());
        assert_eq!(pme_exact(&f, &ind, &m).unwrap(), 1.5);
    }

    #[test]
    fn exact_rejects_points_outside_polytope() {
        let (f, m) = overlap_toy();
        let bad = BlockVector::new(vec![vec![1.2], vec![0.0]]);
        assert!(matches!(pme_exact(&f, &bad, &m), Err(Error::Domain(_))));
        let mass = BlockVector::new(vec![vec![0.7, 0.7]]);
        let m2 = PartitionMatroid::uniform(1, 2).unwrap();
        assert!(matches!(pme_exact(&ZeroOracle, &mass, &m2), Err(Error::Domain(_))));
        assert!(matches!(
            pme_exact(&f, &BlockVector::zeros(&[2, 1]), &m),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn monte_carlo_examples() {
        let (f, m) = overlap_toy();
        let mut rng = seeded(1);
        let ind = BlockVector::indicator(&FeasibleSet::full(&[0, 0]), m.blocks());
        assert_eq!(pme_monte_carlo(&f, &ind, &m, 100, &mut rng).unwrap(), (1.5, 0.0));
        let (mean, se) = pme_monte_carlo(&f, &half(), &m, 100_000, &mut rng).unwrap();
        assert!((mean - 0.875).abs() <= 4.0 * se, "mean {mean} se {se}");
        assert_eq!(pme_monte_carlo(&ZeroOracle, &half(), &m, 10, &mut rng).unwrap().0, 0.0);
        assert!(pme_monte_carlo(&f, &half(), &m, 0, &mut rng).is_err());
    }

    #[test]
    fn gradient_examples() {
        let (f, m) = overlap_toy();
        let g = pme_grad_exact(&f, &half(), &m).unwrap();
        assert_eq!(g.flat(), vec![0.75, 0.75]);

        let single = ModularOracle::new(vec![vec![0.3, 0.9, 0.4]]);
        let m1 = single.matroid();
        let x = BlockVector::new(vec![vec![0.2, 0.1, 0.3]]);
        assert_eq!(pme_grad_exact(&single, &x, &m1).unwrap().flat(), vec![0.3, 0.9, 0.4]);
    }

    #[test]
    fn finite_differences_match_exact_gradient() {
        let (f, m) = overlap_toy();
        let fd = pme_grad_fd(&f, &half(), &m, FD_STEP).unwrap();
        for (a, b) in fd.iter().zip(pme_grad_exact(&f, &half(), &m).unwrap().iter()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
        // a vertex forces one-sided differences everywhere
        let mut rng = seeded(2);
        let g = WeightedCoverage::random(3, 3, 6, &mut rng);
        let m3 = g.matroid();
        let vertex = BlockVector::indicator(&FeasibleSet::full(&[0, 2, 1]), m3.blocks());
        let fd = pme_grad_fd(&g, &vertex, &m3, 1e-3).unwrap();
        let exact = pme_grad_exact(&g, &vertex, &m3).unwrap();
        for (a, b) in fd.iter().zip(exact.iter()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn diff_reward_examples() {
        let mut rng = seeded(4);
        let single = ModularOracle::new(vec![vec![0.3, 0.9]]);
        let m1 = single.matroid();
        let x = BlockVector::new(vec![vec![0.5, 0.5]]);
        for _ in 0..5 {
            let g = diff_reward_gradient(&single, &x, &m1, &mut rng).unwrap();
            assert_eq!(g.flat(), vec![0.3, 0.9]);
        }
        let (f, m) = overlap_toy();
        let zero = diff_reward_gradient(&ZeroOracle, &half(), &m, &mut rng).unwrap();
        assert_eq!(zero.flat(), vec![0.0, 0.0]);

        let n = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let g = diff_reward_gradient(&f, &half(), &m, &mut rng).unwrap().flat();
            for k in 0..2 {
                sum[k] += g[k];
                sumsq[k] += g[k] * g[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sumsq[k] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - 0.75).abs() <= 4.0 * se, "coordinate {k}: {mean}");
        }
    }

    #[test]
    fn second_difference_examples() {
        let (f, m) = overlap_toy();
        let a = AgentActionPair::new(0, 0);
        let b = AgentActionPair::new(1, 0);
        assert_eq!(pme_second_diff(&f, &half(), &m, a, a).unwrap(), 0.0);
        assert!((pme_second_diff(&f, &half(), &m, a, b).unwrap() + 0.5).abs() < 1e-15);
        let modular = ModularOracle::new(vec![vec![0.2, 0.5], vec![0.1, 0.7]]);
        let mm = modular.matroid();
        let x = BlockVector::uniform(mm.blocks());
        let v = pme_second_diff(&modular, &x, &mm, a, AgentActionPair::new(1, 1)).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn sampling_on_face_never_idles() {
        let mut rng = seeded(9);
        let x = BlockVector::new(vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0; 3]]);
        for _ in 0..10_000 {
            assert!(sample_set(&x, &mut rng).is_full());
        }
    }
}
