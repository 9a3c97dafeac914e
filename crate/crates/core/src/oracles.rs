//! Concrete set functions: weighted coverage (which also backs the grid
//! coverage environment), plus small modular and degenerate functions used as
//! fixtures.

use rand::Rng;

use crate::error::{Error, Result};
use crate::submodular::{FeasibleSet, PartitionMatroid, SubmodularOracle};

/// F(A) = Σ_{items covered by some pair in A} weight(item).
///
/// Nonnegative weights make this normalized, monotone and submodular.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCoverage {
    /// `cover[agent][action]` lists the item indices the pair covers.
    cover: Vec<Vec<Vec<usize>>>,
    weights: Vec<f64>,
    bound: f64,
}

impl WeightedCoverage {
    pub fn new(cover: Vec<Vec<Vec<usize>>>, weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation(format!("item weight {w} must be finite and nonnegative")));
        }
        for (i, actions) in cover.iter().enumerate() {
            if actions.is_empty() {
                return Err(Error::Validation(format!("agent {i} has no actions")));
            }
            for items in actions {
                if let Some(&bad) = items.iter().find(|&&j| j >= weights.len()) {
                    return Err(Error::Validation(format!("item {bad} out of range")));
                }
            }
        }
        let mut oracle = Self {
            cover,
            weights,
            bound: 0.0,
        };
        oracle.bound = oracle.max_singleton();
        Ok(oracle)
    }

    /// Random instance: each pair covers a random nonempty subset of items
    /// with weights uniform in (0, 1].
    pub fn random<R: Rng + ?Sized>(agents: usize, actions: usize, items: usize, rng: &mut R) -> Self {
        let weights: Vec<f64> = (0..items).map(|_| 1.0 - rng.random::<f64>()).collect();
        let cover = (0..agents)
            .map(|_| {
                (0..actions)
                    .map(|_| {
                        let mut set: Vec<usize> =
                            (0..items).filter(|_| rng.random_bool(0.4)).collect();
                        if set.is_empty() {
                            set.push(rng.random_range(0..items));
                        }
                        set
                    })
                    .collect()
            })
            .collect();
        Self::new(cover, weights).expect("generated instance is valid")
    }

    pub fn matroid(&self) -> PartitionMatroid {
        PartitionMatroid::new(self.cover.iter().map(Vec::len).collect())
            .expect("constructor rejects empty blocks")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn covered_by(&self, agent: usize, action: usize) -> &[usize] {
        &self.cover[agent][action]
    }

    /// Recomputes the marginal bound after weights were edited in place.
    pub fn refresh_bound(&mut self) {
        self.bound = self.max_singleton();
    }

    fn max_singleton(&self) -> f64 {
        self.cover
            .iter()
            .flatten()
            .map(|items| self.mass(items))
            .fold(0.0, f64::max)
    }

    fn mass(&self, items: &[usize]) -> f64 {
        let mut items = items.to_vec();
        items.sort_unstable();
        items.dedup();
        items.iter().map(|&j| self.weights[j]).sum()
    }
}

impl SubmodularOracle for WeightedCoverage {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        let mut items: Vec<usize> = set
            .pairs()
            .flat_map(|e| self.cover[e.agent][e.action].iter().copied())
            .collect();
        items.sort_unstable();
        items.dedup();
        items.iter().map(|&j| self.weights[j]).sum()
    }

    /// A pair's gain never exceeds the mass it covers on its own.
    fn marginal_bound(&self) -> f64 {
        self.bound
    }
}

/// Two agents with one action each: F({e1}) = F({e2}) = 1, F({e1, e2}) = 1.5.
pub fn overlap_toy() -> (WeightedCoverage, PartitionMatroid) {
    let f = WeightedCoverage::new(vec![vec![vec![0, 2]], vec![vec![1, 2]]], vec![0.5, 0.5, 0.5])
        .expect("valid toy");
    let m = f.matroid();
    (f, m)
}

/// Two agents with three actions each where both agents' strongest action
/// covers the same item, so the optimum needs them to split up.
///
/// Action 0 covers a shared item of weight 1.0, action 1 a private item of
/// weight 0.7, action 2 a private item of weight 0.3. OPT = 1.7.
pub fn overlap_bandit() -> (WeightedCoverage, PartitionMatroid) {
    let cover = vec![
        vec![vec![0], vec![1], vec![2]],
        vec![vec![0], vec![3], vec![4]],
    ];
    let f = WeightedCoverage::new(cover, vec![1.0, 0.7, 0.3, 0.7, 0.3]).expect("valid bandit");
    let m = f.matroid();
    (f, m)
}

/// F(A) = Σ_{(i,a) ∈ A} value[i][a]; every second difference vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularOracle {
    values: Vec<Vec<f64>>,
}

impl ModularOracle {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }

    pub fn random<R: Rng + ?Sized>(agents: usize, actions: usize, rng: &mut R) -> Self {
        Self::new(
            (0..agents)
                .map(|_| (0..actions).map(|_| rng.random::<f64>()).collect())
                .collect(),
        )
    }

    pub fn matroid(&self) -> PartitionMatroid {
        PartitionMatroid::new(self.values.iter().map(Vec::len).collect()).expect("nonempty rows")
    }
}

impl SubmodularOracle for ModularOracle {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        set.pairs().map(|e| self.values[e.agent][e.action]).sum()
    }

    fn marginal_bound(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// F ≡ 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroOracle;

impl SubmodularOracle for ZeroOracle {
    fn eval(&self, _set: &FeasibleSet) -> f64 {
        0.0
    }

    fn marginal_bound(&self) -> f64 {
        0.0
    }
}

/// F(A) = |A|², supermodular. Only useful to exercise the property checker.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SquaredCardinality;

impl SubmodularOracle for SquaredCardinality {
    fn eval(&self, set: &FeasibleSet) -> f64 {
        let n = set.len() as f64;
        n * n
    }

    fn marginal_bound(&self) -> f64 {
        f64::INFINITY
    }
}
