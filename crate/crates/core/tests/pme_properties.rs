mod common;

use common::{expectation_by_enumeration, face_point, small_instance, tracking_instance};
use rand::Rng;
use submapg_core::oracles::WeightedCoverage;
use submapg_core::pme::{diff_reward_gradient, pme_exact, pme_grad_exact, pme_grad_fd, pme_second_diff, BlockVector, FD_STEP};
use submapg_core::polytope::SlotMap;
use submapg_core::rng::{derive, seeded};
use submapg_core::submodular::{check_assumption, CheckMode};
use submapg_core::{AgentActionPair, PartitionMatroid};

#[test]
fn pme_equals_policy_expectation() {
    let mut rng = seeded(11);
    for k in 0..100 {
        let (f, m, _) = small_instance(k, &mut rng);
        let x = face_point(&m, &mut rng);
        let exact = pme_exact(&f, &x, &m).unwrap();
        let reference = expectation_by_enumeration(&*f, &x);
        assert!((exact - reference).abs() <= 1e-12, "instance {k}: {exact} vs {reference}");
    }
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let mut rng = seeded(12);
    for k in 0..100 {
        let (f, m, _) = small_instance(k, &mut rng);
        let x = face_point(&m, &mut rng);
        let g = pme_grad_exact(&f, &x, &m).unwrap();
        let fd = pme_grad_fd(&f, &x, &m, FD_STEP).unwrap();
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "instance {k}: {a} vs {b}");
        }
    }
}

#[test]
fn difference_reward_gradient_is_unbiased() {
    let n = 100_000;
    let mut rng = seeded(13);
    for k in 0..100 {
        let (f, m, _) = small_instance(k, &mut rng);
        let x = face_point(&m, &mut rng);
        let exact = pme_grad_exact(&f, &x, &m).unwrap().flat();
        let mut sample_rng = derive(13, k as u64);
        let mut sum = vec![0.0; exact.len()];
        let mut sq = vec![0.0; exact.len()];
        for _ in 0..n {
            let g = diff_reward_gradient(&f, &x, &m, &mut sample_rng).unwrap();
            for (j, v) in g.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        for j in 0..exact.len() {
            let mean = sum[j] / n as f64;
            let var = (sq[j] / n as f64 - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            // the floor only absorbs summation rounding on zero-variance coordinates
            assert!((mean - exact[j]).abs() <= 4.0 * se + 1e-9, "instance {k} coord {j}: {mean} vs {}", exact[j]);
        }
    }
}

#[test]
fn gradient_and_variance_bounds() {
    let mut rng = seeded(14);
    for k in 0..50 {
        let (f, m, _) = small_instance(k, &mut rng);
        let b = f.marginal_bound();
        let scale = (m.num_agents() * m.max_block()) as f64;
        let x = face_point(&m, &mut rng);
        let g = pme_grad_exact(&f, &x, &m).unwrap();
        assert!(g.max_abs() <= b + 1e-12);
        assert!(g.norm() <= b * scale.sqrt() + 1e-12);
        assert!(g.iter().all(|v| v >= -1e-12));
        let samples = 2000;
        let mut total = 0.0;
        for _ in 0..samples {
            let s = diff_reward_gradient(&f, &x, &m, &mut rng).unwrap();
            assert!(s.iter().all(|v| (-1e-12..=b + 1e-12).contains(&v)));
            total += s.sub(&g).norm().powi(2);
        }
        assert!(total / samples as f64 <= scale * b * b);
    }
}

#[test]
fn embedded_diameter_bound() {
    let mut rng = seeded(15);
    for _ in 0..50 {
        let n_max = rng.random_range(1..=4);
        let na_max = rng.random_range(1..=4);
        let mut slots = SlotMap::new(n_max, na_max);
        let agents: Vec<usize> = (0..n_max).collect();
        slots.sync(&agents).unwrap();
        let m = PartitionMatroid::new((0..n_max).map(|_| rng.random_range(1..=na_max)).collect()).unwrap();
        for _ in 0..20 {
            let a = slots.embed(&agents, &face_point(&m, &mut rng)).unwrap();
            let b = slots.embed(&agents, &face_point(&m, &mut rng)).unwrap();
            let d: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(d <= (2.0 * n_max as f64).sqrt() + 1e-12);
        }
    }
}

#[test]
fn second_differences_are_nonpositive() {
    let mut rng = seeded(16);
    for k in 0..100 {
        let (f, m, _) = small_instance(k, &mut rng);
        let x = face_point(&m, &mut rng);
        let pairs: Vec<AgentActionPair> = (0..m.num_agents())
            .flat_map(|i| (0..m.block(i)).map(move |a| AgentActionPair::new(i, a)))
            .collect();
        for &p in &pairs {
            for &q in &pairs {
                assert!(pme_second_diff(&f, &x, &m, p, q).unwrap() <= 1e-12);
            }
        }
    }
}

#[test]
fn restricted_dr_gap_holds_on_face() {
    let mut rng = seeded(17);
    for k in 0..20 {
        let (f, m, _) = small_instance(k, &mut rng);
        for _ in 0..1000 {
            let x = face_point(&m, &mut rng);
            let y = face_point(&m, &mut rng);
            let fx = pme_exact(&f, &x, &m).unwrap();
            let fy = pme_exact(&f, &y, &m).unwrap();
            let g = pme_grad_exact(&f, &x, &m).unwrap();
            let slack = 0.5 * g.dot(&y.sub(&x)) - (0.5 * fy - fx);
            assert!(slack >= -1e-10, "instance {k}: slack {slack}");
        }
    }
}

#[test]
fn environment_oracles_satisfy_assumption() {
    let mut rng = seeded(18);
    for k in 0..100 {
        let agents = rng.random_range(1..=3);
        let actions = rng.random_range(1..=3);
        let m = PartitionMatroid::uniform(agents, actions).unwrap();
        let report = if k % 2 == 0 {
            let f = WeightedCoverage::random(agents, actions, 6, &mut rng);
            check_assumption(&f, &m, CheckMode::Exhaustive, &mut rng).unwrap()
        } else {
            let f = tracking_instance(agents, actions, 3, &mut rng).oracle();
            check_assumption(&f, &m, CheckMode::Exhaustive, &mut rng).unwrap()
        };
        assert!(report.passed(), "instance {k}: {:?}", report.violations.first());
    }
}

#[test]
fn vertices_reproduce_set_values() {
    let mut rng = seeded(19);
    for k in 0..20 {
        let (f, m, _) = small_instance(k, &mut rng);
        m.for_each_full(|set| {
            let x = BlockVector::indicator(set, m.blocks());
            assert!((pme_exact(&f, &x, &m).unwrap() - f.eval(set)).abs() <= 1e-12);
        });
    }
}
