//! The categorical face, Euclidean projections and the zero-padding slot
//! embedding used to compare marginal vectors across time-varying agent sets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pme::{BlockVector, MarginalVector};

/// Per-agent constraint shape: `equality[i]` selects the sum-to-one face for
/// agent i, otherwise the block only needs Σ ≤ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceSpec {
    blocks: Vec<usize>,
    equality: Vec<bool>,
}

impl FaceSpec {
    /// The categorical face: every agent's probabilities sum to one.
    pub fn categorical(blocks: Vec<usize>) -> Result<Self> {
        let n = blocks.len();
        Self::new(blocks, vec![true; n])
    }

    /// The full partition matroid polytope.
    pub fn polytope(blocks: Vec<usize>) -> Result<Self> {
        let n = blocks.len();
        Self::new(blocks, vec![false; n])
    }

    pub fn new(blocks: Vec<usize>, equality: Vec<bool>) -> Result<Self> {
        if blocks.len() != equality.len() {
            return Err(Error::Shape("one equality flag per block required".into()));
        }
        if blocks.contains(&0) {
            return Err(Error::Validation("face blocks must be nonempty".into()));
        }
        Ok(Self { blocks, equality })
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_equality(&self, agent: usize) -> bool {
        self.equality[agent]
    }
}

/// Euclidean projection of `v` onto {x ≥ 0, Σx = 1} (`equality`) or
/// {x ≥ 0, Σx ≤ 1}, by sorting and thresholding.
pub fn project_block(v: &[f64], equality: bool) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    if !equality {
        let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
        if clipped.iter().sum::<f64>() <= 1.0 {
            return clipped;
        }
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Blockwise projection onto a [`FaceSpec`].
pub fn project_face(x: &BlockVector, face: &FaceSpec) -> Result<MarginalVector> {
    if x.layout() != face.blocks() {
        return Err(Error::Shape(format!(
            "vector layout {:?} does not match face blocks {:?}",
            x.layout(),
            face.blocks()
        )));
    }
    Ok(BlockVector::new(
        x.rows()
            .iter()
            .enumerate()
            .map(|(i, row)| project_block(row, face.is_equality(i)))
            .collect(),
    ))
}

/// Fixed slots for agent ids in the padded space R^{N_max · N^a_max}.
///
/// Arrivals take the lowest free slot; a departure frees its slot. A
/// persisting agent keeps its slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMap {
    max_agents: usize,
    max_actions: usize,
    slots: BTreeMap<usize, usize>,
}

impl SlotMap {
    pub fn new(max_agents: usize, max_actions: usize) -> Self {
        Self {
            max_agents,
            max_actions,
            slots: BTreeMap::new(),
        }
    }

    pub fn max_agents(&self) -> usize {
        self.max_agents
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions
    }

    pub fn dimension(&self) -> usize {
        self.max_agents * self.max_actions
    }

    pub fn slot(&self, agent: usize) -> Option<usize> {
        self.slots.get(&agent).copied()
    }

    pub fn assign(&mut self, agent: usize) -> Result<usize> {
        if let Some(s) = self.slot(agent) {
            return Ok(s);
        }
        let used: Vec<usize> = self.slots.values().copied().collect();
        let free = (0..self.max_agents)
            .find(|s| !used.contains(s))
            .ok_or_else(|| Error::Mapping(format!("no free slot for agent {agent}")))?;
        self.slots.insert(agent, free);
        Ok(free)
    }

    pub fn release(&mut self, agent: usize) {
        self.slots.remove(&agent);
    }

    /// Frees the slots of departed agents, then assigns arrivals in order.
    pub fn sync(&mut self, active: &[usize]) -> Result<()> {
        self.slots.retain(|agent, _| active.contains(agent));
        for &agent in active {
            self.assign(agent)?;
        }
        Ok(())
    }

    /// Copies each active agent's block into its slot; everything else is 0.
    pub fn embed(&self, agents: &[usize], x: &BlockVector) -> Result<Vec<f64>> {
        if agents.len() != x.num_agents() {
            return Err(Error::Shape(format!(
                "{} agent ids for {} blocks",
                agents.len(),
                x.num_agents()
            )));
        }
        let mut out = vec![0.0; self.dimension()];
        for (row, &agent) in x.rows().iter().zip(agents) {
            let slot = self
                .slot(agent)
                .ok_or_else(|| Error::Mapping(format!("agent {agent} has no slot")))?;
            if row.len() > self.max_actions {
                return Err(Error::Shape(format!(
                    "agent {agent} has {} actions, padding allows {}",
                    row.len(),
                    self.max_actions
                )));
            }
            let start = slot * self.max_actions;
            out[start..start + row.len()].copy_from_slice(row);
        }
        Ok(out)
    }
}

/// Σ_t ‖v_t − v_{t+1}‖₂ over consecutive embedded vectors.
pub fn path_length(sequence: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for pair in sequence.windows(2) {
        total += distance(&pair[0], &pair[1])?;
    }
    Ok(total)
}

pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dimensions {} and {} differ", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Closed-form constants for the step-size and regret formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitBounds {
    /// Diameter bound √(2 N_max).
    pub diameter: f64,
    /// Gradient norm bound B √(N_max N^a_max).
    pub gradient: f64,
    /// Estimator deviation bound B √(N_max N^a_max).
    pub sigma: f64,
}

/// Explicit D, G and σ bounds from the marginal bound B and the largest agent
/// and action counts.
pub fn diameter_and_bounds(marginal_bound: f64, max_agents: usize, max_actions: usize) -> ExplicitBounds {
    let scale = ((max_agents * max_actions) as f64).sqrt();
    ExplicitBounds {
        diameter: (2.0 * max_agents as f64).sqrt(),
        gradient: marginal_bound * scale,
        sigma: marginal_bound * scale,
    }
}

/// [`diameter_and_bounds`] with N_max and N^a_max read off a list of faces.
pub fn bounds_for_faces(faces: &[FaceSpec], marginal_bound: f64) -> ExplicitBounds {
    let max_agents = faces.iter().map(FaceSpec::num_agents).max().unwrap_or(0);
    let max_actions = faces
        .iter()
        .flat_map(|f| f.blocks().iter().copied())
        .max()
        .unwrap_or(0);
    diameter_and_bounds(marginal_bound, max_agents, max_actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn block_projection_examples() {
        assert!(close(&project_block(&[0.7, 0.7], true), &[0.5, 0.5], 1e-15));
        assert_eq!(project_block(&[0.3, 0.2], false), vec![0.3, 0.2]);
        assert!(close(&project_block(&[1.2, -0.3], true), &[1.0, 0.0], 1e-15));
        // inequality branch falls back to the equality threshold when Σ > 1
        assert!(close(&project_block(&[0.7, 0.7], false), &[0.5, 0.5], 1e-15));
        assert!(close(&project_block(&[-0.2, 0.4], false), &[0.0, 0.4], 1e-15));
    }

    #[test]
    fn face_projection_examples() {
        let face = FaceSpec::categorical(vec![2, 2, 2]).unwrap();
        let x = BlockVector::new(vec![vec![0.7, 0.7]; 3]);
        let p = project_face(&x, &face).unwrap();
        for row in p.rows() {
            assert!(close(row, &[0.5, 0.5], 1e-15));
        }
        assert_eq!(project_face(&p, &face).unwrap(), p);
        let wrong = BlockVector::zeros(&[2, 3]);
        assert!(matches!(project_face(&wrong, &face), Err(Error::Shape(_))));
    }

    /// Dense grid minimisation of ‖v − x‖² over the target set.
    fn grid_projection(v: &[f64], equality: bool, step: f64) -> Vec<f64> {
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, vec![]);
        let mut consider = |x: Vec<f64>| {
            let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, x);
            }
        };
        match v.len() {
            2 => {
                for i in 0..=n {
                    let a = i as f64 * step;
                    if equality {
                        consider(vec![a, 1.0 - a]);
                    } else {
                        for j in 0..=(n - i) {
                            consider(vec![a, j as f64 * step]);
                        }
                    }
                }
            }
            3 => {
                for i in 0..=n {
                    for j in 0..=(n - i) {
                        let (a, b) = (i as f64 * step, j as f64 * step);
                        if equality {
                            consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                        } else {
                            for k in 0..=(n - i - j) {
                                consider(vec![a, b, k as f64 * step]);
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        best.1
    }

    #[test]
    fn projection_matches_grid_search() {
        let mut rng = seeded(21);
        for trial in 0..12 {
            let dim = if trial % 2 == 0 { 2 } else { 3 };
            let equality = trial % 4 < 2;
            let step = if dim == 3 && !equality { 5e-3 } else { 1e-3 };
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..1.5)).collect();
            let exact = project_block(&v, equality);
            let grid = grid_projection(&v, equality, step);
            assert!(close(&exact, &grid, (2.0 * step).max(2e-3)), "{v:?}: {exact:?} vs {grid:?}");
        }
    }

    #[test]
    fn slot_embedding() {
        let mut slots = SlotMap::new(2, 2);
        slots.sync(&[7]).unwrap();
        let x = BlockVector::new(vec![vec![0.25, 0.75]]);
        assert_eq!(slots.embed(&[7], &x).unwrap(), vec![0.25, 0.75, 0.0, 0.0]);
        assert!(matches!(slots.embed(&[8], &x), Err(Error::Mapping(_))));

        slots.sync(&[7, 3]).unwrap();
        assert_eq!(slots.slot(3), Some(1));
        let two = BlockVector::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = slots.embed(&[7, 3], &two).unwrap();
        let b = slots.embed(&[3, 7], &two).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(b, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn slots_are_stable_and_reused() {
        let mut slots = SlotMap::new(3, 1);
        slots.sync(&[1, 2, 3]).unwrap();
        assert_eq!((slots.slot(1), slots.slot(2), slots.slot(3)), (Some(0), Some(1), Some(2)));
        slots.sync(&[1, 3]).unwrap();
        assert_eq!(slots.slot(3), Some(2));
        slots.sync(&[1, 3, 9]).unwrap();
        assert_eq!(slots.slot(9), Some(1));
        assert!(slots.sync(&[1, 3, 9, 10]).is_err());
    }

    #[test]
    fn path_length_examples() {
        let a = vec![0.0, 0.0];
        let b = vec![0.9, 1.2];
        assert_eq!(path_length(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        assert!((path_length(&[a.clone(), b.clone()]).unwrap() - 1.5).abs() < 1e-15);
        assert!((path_length(&[a.clone(), b.clone(), a.clone()]).unwrap() - 3.0).abs() < 1e-15);
        assert!(path_length(&[a, vec![1.0]]).is_err());
    }

    #[test]
    fn explicit_bound_examples() {
        let b = diameter_and_bounds(1.0, 5, 5);
        assert!((b.diameter - 10f64.sqrt()).abs() < 1e-15);
        assert!((b.diameter - 3.16228).abs() < 1e-5);
        assert!((b.gradient - 5.0).abs() < 1e-15);
        assert!((b.sigma - 5.0).abs() < 1e-15);
        assert!((diameter_and_bounds(1.0, 1, 3).diameter - 2f64.sqrt()).abs() < 1e-15);
        let faces = vec![
            FaceSpec::categorical(vec![2, 3]).unwrap(),
            FaceSpec::categorical(vec![4]).unwrap(),
        ];
        assert_eq!(bounds_for_faces(&faces, 2.0), diameter_and_bounds(2.0, 2, 4));
    }

    fn block_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0f64..2.0, 1..6)
    }

    proptest! {
        #[test]
        fn projection_lands_on_target_and_is_idempotent(v in block_strategy(), equality: bool) {
            let p = project_block(&v, equality);
            let sum: f64 = p.iter().sum();
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            if equality {
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            } else {
                prop_assert!(sum <= 1.0 + 1e-12);
            }
            let again = project_block(&p, equality);
            prop_assert!(close(&again, &p, 1e-12));
        }

        #[test]
        fn projection_is_non_expansive(
            pair in (1usize..6).prop_flat_map(|n| (
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, n),
            )),
            equality: bool,
        ) {
            let (u, w) = pair;
            let d_in = distance(&u, &w).unwrap();
            let d_out = distance(&project_block(&u, equality), &project_block(&w, equality)).unwrap();
            prop_assert!(d_out <= d_in + 1e-12);
        }

        #[test]
        fn embedding_is_isometric(rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 1..4), 1..4)) {
            let x = BlockVector::new(rows);
            let ids: Vec<usize> = (0..x.num_agents()).map(|i| 10 + i).collect();
            let mut slots = SlotMap::new(4, 4);
            slots.sync(&ids).unwrap();
            let padded = slots.embed(&ids, &x).unwrap();
            let norm: f64 = padded.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert_eq!(norm, x.norm());
        }
    }
}
