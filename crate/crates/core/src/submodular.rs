//! Ground sets, partition matroids and set-function oracles.
//!
//! Every round exposes a ground set of agent-action pairs split into one
//! block per active agent. A set is independent in the partition matroid iff
//! it holds at most one pair per block, so feasible sets are stored as one
//! optional action per agent ([`FeasibleSet`]) and infeasibility can only
//! arise when building a set from loose pairs.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Default bound on the number of feasible sets an exhaustive routine may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Absolute tolerance used by the property checker.
pub const PROPERTY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentActionPair {
    pub agent: usize,
    pub action: usize,
}

impl AgentActionPair {
    pub fn new(agent: usize, action: usize) -> Self {
        Self { agent, action }
    }
}

impl fmt::Display for AgentActionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.agent, self.action)
    }
}

/// Per-agent action counts of one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionMatroid {
    blocks: Vec<usize>,
}

impl PartitionMatroid {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if let Some(i) = blocks.iter().position(|&b| b == 0) {
            return Err(Error::Validation(format!("agent {i} has an empty action block")));
        }
        Ok(Self { blocks })
    }

    /// `agents` blocks of `actions` actions each.
    pub fn uniform(agents: usize, actions: usize) -> Result<Self> {
        Self::new(vec![actions; agents])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, agent: usize) -> usize {
        self.blocks[agent]
    }

    /// |Ω|, the number of agent-action pairs.
    pub fn ground_size(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn max_block(&self) -> usize {
        self.blocks.iter().copied().max().unwrap_or(0)
    }

    /// Number of independent sets, Π (|A_i| + 1).
    pub fn feasible_count(&self) -> u128 {
        self.blocks
            .iter()
            .fold(1u128, |acc, &b| acc.saturating_mul(b as u128 + 1))
    }

    /// Number of independent sets once `excluded` agents are dropped.
    pub fn feasible_count_without(&self, excluded: &[usize]) -> u128 {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .fold(1u128, |acc, (_, &b)| acc.saturating_mul(b as u128 + 1))
    }

    pub fn check_pair(&self, e: AgentActionPair) -> Result<()> {
        match self.blocks.get(e.agent) {
            None => Err(Error::Validation(format!(
                "agent {} out of range for {} agents",
                e.agent,
                self.blocks.len()
            ))),
            Some(&b) if e.action >= b => Err(Error::Validation(format!(
                "action {} out of range for agent {} with {} actions",
                e.action, e.agent, b
            ))),
            Some(_) => Ok(()),
        }
    }

    pub fn check_set(&self, set: &FeasibleSet) -> Result<()> {
        if set.num_agents() != self.num_agents() {
            return Err(Error::Shape(format!(
                "selection covers {} agents, matroid has {}",
                set.num_agents(),
                self.num_agents()
            )));
        }
        for e in set.pairs() {
            self.check_pair(e)?;
        }
        Ok(())
    }

    /// Visits every independent set in lexicographic order of the selection
    /// vector, idle ordered before action 0.
    pub fn for_each_feasible(&self, mut visit: impl FnMut(&FeasibleSet)) {
        let mut set = FeasibleSet::empty(self.num_agents());
        loop {
            visit(&set);
            // odometer increment from the last agent
            let mut i = self.num_agents();
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                let next = match set.selection[i] {
                    None => Some(0),
                    Some(a) if a + 1 < self.blocks[i] => Some(a + 1),
                    Some(_) => None,
                };
                set.selection[i] = next;
                if next.is_some() {
                    break;
                }
            }
        }
    }

    /// Visits every full selection (one action per agent), lexicographically.
    pub fn for_each_full(&self, mut visit: impl FnMut(&FeasibleSet)) {
        let n = self.num_agents();
        let mut set = FeasibleSet::from_selection(vec![Some(0); n]);
        loop {
            visit(&set);
            let mut i = n;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                let a = set.selection[i].unwrap_or(0);
                if a + 1 < self.blocks[i] {
                    set.selection[i] = Some(a + 1);
                    break;
                }
                set.selection[i] = Some(0);
            }
        }
    }

    fn enforce_cap(&self, cap: u128) -> Result<()> {
        let required = self.feasible_count();
        if required > cap {
            return Err(Error::Size { required, cap });
        }
        Ok(())
    }
}

/// An independent set of the partition matroid: at most one action per agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeasibleSet {
    selection: Vec<Option<usize>>,
}

impl FeasibleSet {
    pub fn empty(num_agents: usize) -> Self {
        Self {
            selection: vec![None; num_agents],
        }
    }

    pub fn from_selection(selection: Vec<Option<usize>>) -> Self {
        Self { selection }
    }

    /// One action per agent.
    pub fn full(actions: &[usize]) -> Self {
        Self {
            selection: actions.iter().map(|&a| Some(a)).collect(),
        }
    }

    /// Builds a set from loose pairs, rejecting two pairs in one block.
    pub fn from_pairs(num_agents: usize, pairs: &[AgentActionPair]) -> Result<Self> {
        let mut set = Self::empty(num_agents);
        for &e in pairs {
            if e.agent >= num_agents {
                return Err(Error::Validation(format!("agent {} out of range", e.agent)));
            }
            if set.selection[e.agent].is_some() {
                return Err(Error::Constraint(format!(
                    "agent {} already selected an action",
                    e.agent
                )));
            }
            set.selection[e.agent] = Some(e.action);
        }
        Ok(set)
    }

    pub fn num_agents(&self) -> usize {
        self.selection.len()
    }

    pub fn selection(&self) -> &[Option<usize>] {
        &self.selection
    }

    pub fn get(&self, agent: usize) -> Option<usize> {
        self.selection[agent]
    }

    pub fn set(&mut self, agent: usize, action: Option<usize>) {
        self.selection[agent] = action;
    }

    pub fn contains(&self, e: AgentActionPair) -> bool {
        self.selection.get(e.agent).copied().flatten() == Some(e.action)
    }

    /// Number of selected pairs, |A|.
    pub fn len(&self) -> usize {
        self.selection.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.selection.iter().all(Option::is_none)
    }

    /// True when every agent selects an action.
    pub fn is_full(&self) -> bool {
        self.selection.iter().all(Option::is_some)
    }

    pub fn pairs(&self) -> impl Iterator<Item = AgentActionPair> + '_ {
        self.selection
            .iter()
            .enumerate()
            .filter_map(|(agent, s)| s.map(|action| AgentActionPair { agent, action }))
    }

    /// A ∪ {e}; errors when the agent of `e` already selected something.
    pub fn with(&self, e: AgentActionPair) -> Result<Self> {
        match self.selection.get(e.agent) {
            None => Err(Error::Validation(format!("agent {} out of range", e.agent))),
            Some(Some(a)) => Err(Error::Constraint(format!(
                "agent {} already selected action {a}",
                e.agent
            ))),
            Some(None) => {
                let mut out = self.clone();
                out.selection[e.agent] = Some(e.action);
                Ok(out)
            }
        }
    }

    /// A with `agent` idle, i.e. A^{-i}.
    pub fn without_agent(&self, agent: usize) -> Self {
        let mut out = self.clone();
        out.selection[agent] = None;
        out
    }

    pub fn is_subset_of(&self, other: &FeasibleSet) -> bool {
        self.selection
            .iter()
            .zip(&other.selection)
            .all(|(a, b)| a.is_none() || a == b)
    }
}

impl fmt::Display for FeasibleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .selection
            .iter()
            .map(|s| s.map_or_else(|| "-".to_string(), |a| a.to_string()))
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// A set function F(·; s) over the agent-action pairs of one round, with the
/// state folded into the implementor.
///
/// Implementations are expected to be normalized, monotone and submodular
/// with every marginal gain in `[0, marginal_bound()]`; [`check_assumption`]
/// verifies this.
pub trait SubmodularOracle: Sync {
    fn eval(&self, set: &FeasibleSet) -> f64;

    /// Analytic upper bound B on any marginal gain.
    fn marginal_bound(&self) -> f64;

    /// The oracle as seen by `agent` from its own sensing range. `None`
    /// means local information equals global information.
    fn local_view(&self, _agent: usize) -> Option<Box<dyn SubmodularOracle + '_>> {
        None
    }
}

impl<T: SubmodularOracle + ?Sized> SubmodularOracle for &T {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        (**self).eval(set)
    }
    fn marginal_bound(&self) -> f64 {
        (**self).marginal_bound()
    }
    fn local_view(&self, agent: usize) -> Option<Box<dyn SubmodularOracle + '_>> {
        (**self).local_view(agent)
    }
}

impl<T: SubmodularOracle + ?Sized> SubmodularOracle for Box<T> {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        (**self).eval(set)
    }
    fn marginal_bound(&self) -> f64 {
        (**self).marginal_bound()
    }
    fn local_view(&self, agent: usize) -> Option<Box<dyn SubmodularOracle + '_>> {
        (**self).local_view(agent)
    }
}

/// F(e | A) = F(A ∪ {e}) − F(A).
pub fn marginal_gain<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    e: AgentActionPair,
    set: &FeasibleSet,
    matroid: &PartitionMatroid,
) -> Result<f64> {
    matroid.check_set(set)?;
    matroid.check_pair(e)?;
    let extended = set.with(e)?;
    Ok(oracle.eval(&extended) - oracle.eval(set))
}

/// Whether a loose collection of pairs is independent.
pub fn is_feasible(pairs: &[AgentActionPair], matroid: &PartitionMatroid) -> Result<bool> {
    let mut seen = vec![false; matroid.num_agents()];
    let mut feasible = true;
    for &e in pairs {
        matroid.check_pair(e)?;
        if std::mem::replace(&mut seen[e.agent], true) {
            feasible = false;
        }
    }
    Ok(feasible)
}

/// Exhaustive maximum over every independent set, idle choices included.
///
/// Ties resolve to the lexicographically smallest selection vector.
pub fn brute_force_opt<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    cap: u128,
) -> Result<(FeasibleSet, f64)> {
    matroid.enforce_cap(cap)?;
    let mut best = FeasibleSet::empty(matroid.num_agents());
    let mut best_value = f64::NEG_INFINITY;
    matroid.for_each_feasible(|set| {
        let v = oracle.eval(set);
        if v > best_value {
            best_value = v;
            best = set.clone();
        }
    });
    Ok((best, best_value))
}

/// Exhaustive maximum over full selections only (one action per agent).
///
/// For monotone F this attains the same value as [`brute_force_opt`]; the
/// maximizer is a vertex of the categorical face.
pub fn brute_force_opt_full<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    cap: u128,
) -> Result<(FeasibleSet, f64)> {
    matroid.enforce_cap(cap)?;
    let mut best = FeasibleSet::full(&vec![0; matroid.num_agents()]);
    let mut best_value = f64::NEG_INFINITY;
    matroid.for_each_full(|set| {
        let v = oracle.eval(set);
        if v > best_value {
            best_value = v;
            best = set.clone();
        }
    });
    Ok((best, best_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Every pair A ⊆ B of independent sets and every admissible e.
    Exhaustive,
    /// `trials` random triples (A ⊆ B, e).
    Sampled { trials: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Normalization,
    Monotonicity,
    Submodularity,
    MarginalBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub smaller: FeasibleSet,
    pub larger: FeasibleSet,
    pub element: Option<AgentActionPair>,
    /// How far the inequality is violated.
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropertyReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks normalization, monotonicity, diminishing returns and the declared
/// marginal bound. Violations are reported, never raised.
pub fn check_assumption<F: SubmodularOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    mode: CheckMode,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::default();
    let n = matroid.num_agents();
    let empty = FeasibleSet::empty(n);
    let f_empty = oracle.eval(&empty);
    if f_empty.abs() > PROPERTY_TOL {
        report.violations.push(Violation {
            kind: ViolationKind::Normalization,
            smaller: empty.clone(),
            larger: empty.clone(),
            element: None,
            amount: f_empty.abs(),
        });
    }
    let bound = oracle.marginal_bound();
    match mode {
        CheckMode::Exhaustive => {
            // each agent is idle in B, or picks one action in B with or without A
            let pairs_required = matroid
                .blocks()
                .iter()
                .fold(1u128, |acc, &b| acc.saturating_mul(2 * b as u128 + 1));
            if pairs_required > DEFAULT_ENUMERATION_CAP {
                return Err(Error::Size {
                    required: pairs_required,
                    cap: DEFAULT_ENUMERATION_CAP,
                });
            }
            matroid.for_each_feasible(|larger| {
                let selected: Vec<usize> = (0..n).filter(|&i| larger.get(i).is_some()).collect();
                for mask in 0u64..(1u64 << selected.len()) {
                    let mut smaller = larger.clone();
                    for (bit, &agent) in selected.iter().enumerate() {
                        if mask & (1 << bit) == 0 {
                            smaller.set(agent, None);
                        }
                    }
                    check_triples(oracle, matroid, &smaller, larger, bound, &mut report);
                }
            });
        }
        CheckMode::Sampled { trials } => {
            for _ in 0..trials {
                let mut larger = FeasibleSet::empty(n);
                let mut smaller = FeasibleSet::empty(n);
                for i in 0..n {
                    let choice = rng.random_range(0..=matroid.block(i));
                    if choice < matroid.block(i) {
                        larger.set(i, Some(choice));
                        if rng.random_bool(0.5) {
                            smaller.set(i, Some(choice));
                        }
                    }
                }
                check_triples(oracle, matroid, &smaller, &larger, bound, &mut report);
            }
        }
    }
    Ok(report)
}

fn check_triples<F: SubmodularOracle + ?Sized>(
    oracle: &F,
    matroid: &PartitionMatroid,
    smaller: &FeasibleSet,
    larger: &FeasibleSet,
    bound: f64,
    report: &mut PropertyReport,
) {
    let f_small = oracle.eval(smaller);
    let f_large = oracle.eval(larger);
    report.checked += 1;
    if f_small > f_large + PROPERTY_TOL {
        report.violations.push(Violation {
            kind: ViolationKind::Monotonicity,
            smaller: smaller.clone(),
            larger: larger.clone(),
            element: None,
            amount: f_small - f_large,
        });
    }
    for agent in (0..matroid.num_agents()).filter(|&i| larger.get(i).is_none()) {
        for action in 0..matroid.block(agent) {
            let e = AgentActionPair { agent, action };
            let mut s = smaller.clone();
            s.set(agent, Some(action));
            let mut l = larger.clone();
            l.set(agent, Some(action));
            let gain_small = oracle.eval(&s) - f_small;
            let gain_large = oracle.eval(&l) - f_large;
            report.checked += 1;
            if gain_large > gain_small + PROPERTY_TOL {
                report.violations.push(Violation {
                    kind: ViolationKind::Submodularity,
                    smaller: smaller.clone(),
                    larger: larger.clone(),
                    element: Some(e),
                    amount: gain_large - gain_small,
                });
            }
            for (gain, base) in [(gain_small, smaller), (gain_large, larger)] {
                let excess = if gain < -PROPERTY_TOL {
                    -gain
                } else if gain > bound + PROPERTY_TOL {
                    gain - bound
                } else {
                    0.0
                };
                if excess > 0.0 {
                    report.violations.push(Violation {
                        kind: ViolationKind::MarginalBound,
                        smaller: base.clone(),
                        larger: base.clone(),
                        element: Some(e),
                        amount: excess,
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{overlap_toy, ModularOracle, SquaredCardinality, WeightedCoverage, ZeroOracle};
    use crate::rng::seeded;

    fn e(agent: usize, action: usize) -> AgentActionPair {
        AgentActionPair::new(agent, action)
    }

    #[test]
    fn overlap_toy_marginals() {
        let (f, m) = overlap_toy();
        let empty = FeasibleSet::empty(2);
        assert_eq!(marginal_gain(&f, e(0, 0), &empty, &m).unwrap(), 1.0);
        let with_e2 = FeasibleSet::full(&[0, 0]).without_agent(0);
        assert_eq!(marginal_gain(&f, e(0, 0), &with_e2, &m).unwrap(), 0.5);
    }

    #[test]
    fn marginal_gain_of_redundant_element_is_zero() {
        let f = WeightedCoverage::new(vec![vec![vec![0]], vec![vec![0]]], vec![2.0]).unwrap();
        let m = PartitionMatroid::uniform(2, 1).unwrap();
        let a = FeasibleSet::from_selection(vec![None, Some(0)]);
        assert_eq!(marginal_gain(&f, e(0, 0), &a, &m).unwrap(), 0.0);
    }

    #[test]
    fn marginal_gain_rejects_second_pair_in_block() {
        let (f, m) = overlap_toy();
        let a = FeasibleSet::from_selection(vec![Some(0), None]);
        assert!(matches!(
            marginal_gain(&f, e(0, 0), &a, &m),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let m = PartitionMatroid::uniform(2, 2).unwrap();
        assert!(is_feasible(&[e(0, 1), e(1, 0)], &m).unwrap());
        assert!(!is_feasible(&[e(0, 0), e(0, 1)], &m).unwrap());
        assert!(is_feasible(&[], &m).unwrap());
        assert!(matches!(is_feasible(&[e(0, 2)], &m), Err(Error::Validation(_))));
        assert!(matches!(is_feasible(&[e(2, 0)], &m), Err(Error::Validation(_))));
    }

    #[test]
    fn enumeration_visits_every_independent_set_once() {
        let m = PartitionMatroid::new(vec![2, 1, 3]).unwrap();
        let mut seen = Vec::new();
        m.for_each_feasible(|s| seen.push(s.clone()));
        assert_eq!(seen.len() as u128, m.feasible_count());
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, seen, "lexicographic and unique");
        let mut full = 0;
        m.for_each_full(|s| {
            assert!(s.is_full());
            full += 1;
        });
        assert_eq!(full, 6);
    }

    #[test]
    fn brute_force_examples() {
        let (f, m) = overlap_toy();
        let (set, v) = brute_force_opt(&f, &m, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(set, FeasibleSet::full(&[0, 0]));
        assert_eq!(v, 1.5);

        let single = ModularOracle::new(vec![vec![0.2, 0.7]]);
        let m1 = PartitionMatroid::uniform(1, 2).unwrap();
        assert_eq!(brute_force_opt(&single, &m1, DEFAULT_ENUMERATION_CAP).unwrap().1, 0.7);

        let (set, v) = brute_force_opt(&ZeroOracle, &m, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(v, 0.0);
        assert!(set.is_empty(), "ties resolve to the lexicographically first set");
    }

    #[test]
    fn brute_force_respects_cap() {
        let m = PartitionMatroid::uniform(4, 9).unwrap();
        let err = brute_force_opt(&ZeroOracle, &m, 1000).unwrap_err();
        assert_eq!(err, Error::Size { required: 10_000, cap: 1000 });
    }

    #[test]
    fn brute_force_dominates_every_set() {
        let mut rng = seeded(11);
        for _ in 0..20 {
            let f = WeightedCoverage::random(3, 3, 6, &mut rng);
            let m = PartitionMatroid::uniform(3, 3).unwrap();
            let (_, best) = brute_force_opt(&f, &m, DEFAULT_ENUMERATION_CAP).unwrap();
            m.for_each_feasible(|s| assert!(f.eval(s) <= best));
        }
    }

    #[test]
    fn check_assumption_examples() {
        let mut rng = seeded(3);
        let m = PartitionMatroid::uniform(2, 2).unwrap();
        let f = WeightedCoverage::random(2, 2, 5, &mut rng);
        assert!(check_assumption(&f, &m, CheckMode::Exhaustive, &mut rng).unwrap().passed());

        let sq = SquaredCardinality;
        let report = check_assumption(&sq, &m, CheckMode::Exhaustive, &mut rng).unwrap();
        assert!(report.count(ViolationKind::Submodularity) >= 1);

        assert!(check_assumption(&ZeroOracle, &m, CheckMode::Exhaustive, &mut rng)
            .unwrap()
            .passed());
        assert!(check_assumption(&f, &m, CheckMode::Sampled { trials: 200 }, &mut rng)
            .unwrap()
            .passed());
    }

    #[test]
    fn marginal_gain_identity_holds_exactly() {
        let mut rng = seeded(5);
        let f = WeightedCoverage::random(3, 3, 7, &mut rng);
        let m = PartitionMatroid::uniform(3, 3).unwrap();
        m.for_each_feasible(|a| {
            for agent in (0..3).filter(|&i| a.get(i).is_none()) {
                for action in 0..3 {
                    let pair = e(agent, action);
                    let g = marginal_gain(&f, pair, a, &m).unwrap();
                    let direct = f.eval(&a.with(pair).unwrap());
                    assert!((g + f.eval(a) - direct).abs() <= 1e-12);
                }
            }
        });
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn feasibility_is_downward_closed(
                picks in proptest::collection::vec((0usize..4, 0usize..3), 0..6),
                drop_mask in any::<u8>(),
            ) {
                let m = PartitionMatroid::uniform(4, 3).unwrap();
                let pairs: Vec<AgentActionPair> = picks.iter().map(|&(i, a)| e(i, a)).collect();
                if is_feasible(&pairs, &m).unwrap() {
                    let subset: Vec<AgentActionPair> = pairs
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| drop_mask & (1 << (k % 8)) == 0)
                        .map(|(_, p)| *p)
                        .collect();
                    prop_assert!(is_feasible(&subset, &m).unwrap());
                }
            }
        }
    }
}
