mod common;

use common::{expectation_by_enumeration, small_instance};
use rand::Rng;
use submapg_core::envs::{AgentObservation, BanditEnv, MultiAgentEnv};
use submapg_core::oracles::overlap_bandit;
use submapg_core::pme::{pme_exact, pme_grad_exact};
use submapg_core::policy::{
    difference_returns, exact_policy_gradient, submapg_train, surrogate_gradient, Baseline, PolicyGradient,
    RewardMode, TabularSoftmaxPolicy, TrainConfig, TrajectoryRecord,
};
use submapg_core::rng::{derive, seeded, SimRng};
use submapg_core::submodular::{brute_force_opt, is_feasible, DEFAULT_ENUMERATION_CAP};
use submapg_core::{PartitionMatroid, SubmodularOracle};

fn observations(m: &PartitionMatroid) -> Vec<AgentObservation> {
    m.blocks()
        .iter()
        .enumerate()
        .map(|(agent, &k)| AgentObservation { agent, key: 0, mask: vec![true; k] })
        .collect()
}

fn random_policy(obs: &[AgentObservation], rng: &mut SimRng) -> TabularSoftmaxPolicy {
    let mut p = TabularSoftmaxPolicy::new();
    for o in obs {
        for v in p.row_mut(o.agent, o.key, o.mask.len()).unwrap() {
            *v = rng.random_range(-1.5..1.5);
        }
    }
    p
}

/// ∂/∂θ of the exhaustive expectation, by central differences on each logit.
fn fd_policy_gradient(f: &dyn SubmodularOracle, p: &TabularSoftmaxPolicy, obs: &[AgentObservation]) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::new();
    for o in obs {
        for a in 0..o.mask.len() {
            let shifted = |d: f64| {
                let mut q = p.clone();
                q.row_mut(o.agent, o.key, o.mask.len()).unwrap()[a] += d;
                expectation_by_enumeration(f, &q.policy_marginals(obs).unwrap())
            };
            out.push((shifted(h) - shifted(-h)) / (2.0 * h));
        }
    }
    out
}

fn flatten(g: &PolicyGradient, obs: &[AgentObservation]) -> Vec<f64> {
    obs.iter()
        .flat_map(|o| g.get(&(o.agent, o.key)).cloned().unwrap_or_else(|| vec![0.0; o.mask.len()]))
        .collect()
}

#[test]
fn sampled_joints_are_feasible_and_full() {
    let mut rng = seeded(21);
    for _ in 0..200 {
        let n = rng.random_range(0..5);
        let obs: Vec<AgentObservation> = (0..n)
            .map(|agent| {
                let k = rng.random_range(1..6);
                let mut mask: Vec<bool> = (0..k).map(|_| rng.random_bool(0.6)).collect();
                let keep = rng.random_range(0..k);
                mask[keep] = true;
                AgentObservation { agent, key: rng.random_range(0..4), mask }
            })
            .collect();
        let p = random_policy(&obs, &mut rng);
        let set = p.sample_joint(&obs, &mut rng).unwrap();
        assert_eq!(set.len(), n);
        if n > 0 {
            let m = PartitionMatroid::new(obs.iter().map(|o| o.mask.len()).collect()).unwrap();
            assert!(is_feasible(&set.pairs().collect::<Vec<_>>(), &m).unwrap());
        }
        for (i, o) in obs.iter().enumerate() {
            assert!(o.mask[set.get(i).unwrap()]);
        }
    }
}

#[test]
fn chain_rule_gradient_matches_finite_differences() {
    let mut rng = seeded(22);
    for k in 0..50 {
        let (f, m, _) = small_instance(k, &mut rng);
        let obs = observations(&m);
        let p = random_policy(&obs, &mut rng);
        let exact = flatten(&exact_policy_gradient(&p, &obs, &f).unwrap(), &obs);
        let fd = fd_policy_gradient(&*f, &p, &obs);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6, "instance {k}: {a} vs {b}");
        }
    }
}

/// Mean and standard error of the single-round surrogate over `n` rollouts.
fn surrogate_moments(
    f: &dyn SubmodularOracle,
    p: &TabularSoftmaxPolicy,
    obs: &[AgentObservation],
    baseline: &mut Baseline,
    n: usize,
    rng: &mut SimRng,
) -> (Vec<f64>, Vec<f64>) {
    let dim: usize = obs.iter().map(|o| o.mask.len()).sum();
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for _ in 0..n {
        let joint = p.sample_joint(obs, rng).unwrap();
        let traj = vec![TrajectoryRecord::new(obs.to_vec(), joint, f)];
        let psi = difference_returns(&traj, RewardMode::Difference, baseline);
        let g = flatten(&surrogate_gradient(p, &traj, &psi).unwrap(), obs);
        for (j, v) in g.iter().enumerate() {
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let se = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n as f64 - m * m).max(0.0) / (n - 1) as f64).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn surrogate_is_consistent_with_exact_gradient() {
    let mut rng = seeded(23);
    for k in 0..10 {
        let (f, m, _) = small_instance(k, &mut rng);
        let obs = observations(&m);
        let p = random_policy(&obs, &mut rng);
        let exact = fd_policy_gradient(&*f, &p, &obs);
        let (mean, se) = surrogate_moments(&*f, &p, &obs, &mut Baseline::None, 100_000, &mut derive(23, k as u64));
        for j in 0..exact.len() {
            assert!((mean[j] - exact[j]).abs() <= 4.0 * se[j] + 1e-6, "instance {k} coord {j}: {} vs {}", mean[j], exact[j]);
        }
    }
}

#[test]
fn moving_average_baseline_keeps_the_mean() {
    let mut rng = seeded(24);
    for k in 0..10 {
        let (f, m, _) = small_instance(k, &mut rng);
        let obs = observations(&m);
        let p = random_policy(&obs, &mut rng);
        let n = 100_000;
        let (plain, se_plain) = surrogate_moments(&*f, &p, &obs, &mut Baseline::None, n, &mut derive(24, 2 * k as u64));
        let (ema, se_ema) =
            surrogate_moments(&*f, &p, &obs, &mut Baseline::moving_average(), n, &mut derive(24, 2 * k as u64 + 1));
        for j in 0..plain.len() {
            let combined = (se_plain[j].powi(2) + se_ema[j].powi(2)).sqrt();
            assert!((plain[j] - ema[j]).abs() <= 4.0 * combined + 1e-9, "instance {k} coord {j}");
        }
    }
}

#[test]
fn exact_policy_step_is_an_ascent_direction() {
    let mut rng = seeded(25);
    for k in 0..100 {
        let (f, m, _) = small_instance(k, &mut rng);
        let obs = observations(&m);
        let mut p = random_policy(&obs, &mut rng);
        let x0 = p.policy_marginals(&obs).unwrap();
        let grad_x = pme_grad_exact(&f, &x0, &m).unwrap();
        let g = exact_policy_gradient(&p, &obs, &f).unwrap();
        p.apply(&g, 1e-3).unwrap();
        let x1 = p.policy_marginals(&obs).unwrap();
        assert!(grad_x.dot(&x1.sub(&x0)) >= -1e-8, "instance {k}");
        assert!(pme_exact(&f, &x1, &m).unwrap() >= pme_exact(&f, &x0, &m).unwrap() - 1e-12);
    }
}

#[test]
fn bandit_training_approaches_opt() {
    let (f, m) = overlap_bandit();
    let (_, opt) = brute_force_opt(&f, &m, DEFAULT_ENUMERATION_CAP).unwrap();
    let cfg = TrainConfig { episodes: 5000, eta: 0.5, reward: RewardMode::Difference, moving_average: false };
    let mut total = 0.0;
    for seed in 0..10 {
        let mut env = BanditEnv::new(f.clone(), 1);
        let mut p = TabularSoftmaxPolicy::new();
        submapg_train(&mut env, &mut p, &cfg, &mut seeded(seed)).unwrap();
        let x = p.policy_marginals(&env.observations()).unwrap();
        total += pme_exact(&f, &x, &m).unwrap();
    }
    assert!(total / 10.0 >= 0.95 * opt);
}
