//! Verification suites behind `submapg verify`.
//!
//! Each suite returns a list of checks with the measured quantity, the bound
//! it is compared against and the verdict. Failures are report content; the
//! caller decides the exit code.

use std::fmt;
use std::str::FromStr;

use anyhow::Result;
use rand::Rng;

use submapg_core::baselines::{csg, Sensing};
use submapg_core::dynamics::{
    run_online, step_size_dynamic, step_size_stagewise, stagewise_sga, AlternatingStream, DriftingCoverageStream,
    GradientEstimator, OnlineStream,
};
use submapg_core::oracles::{ModularOracle, WeightedCoverage};
use submapg_core::pme::{diff_reward_gradient, pme_exact, pme_grad_exact, pme_grad_fd, pme_second_diff, FD_STEP};
use submapg_core::polytope::{diameter_and_bounds, SlotMap};
use submapg_core::rng::{derive, seeded, stream_id};
use submapg_core::submodular::{brute_force_opt, check_assumption, CheckMode, DEFAULT_ENUMERATION_CAP};
use submapg_core::{AgentActionPair, PartitionMatroid, SubmodularOracle};

use crate::instances::{face_point, small_instance, Family};
use crate::metrics::fmt_real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Properties,
    Stagewise,
    Regret,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "properties" => Ok(Suite::Properties),
            "stagewise" => Ok(Suite::Stagewise),
            "regret" => Ok(Suite::Regret),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite `{other}` (properties, stagewise, regret, all)")),
        }
    }
}

/// Problem sizes: `Full` matches the documented acceptance sizes, `Quick`
/// is for smoke tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn pick(self, full: usize, quick: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

/// How a measured value is compared with its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
    /// Informational only.
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, measured: f64, relation: Relation, bound: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            measured,
            bound,
            relation,
        }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.measured <= self.bound,
            Relation::AtLeast => self.measured >= self.bound,
            Relation::Report => true,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (rel, status) = match self.relation {
            Relation::AtMost => ("<=", if self.passed() { "PASS" } else { "FAIL" }),
            Relation::AtLeast => (">=", if self.passed() { "PASS" } else { "FAIL" }),
            Relation::Report => ("", "INFO"),
        };
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.suite,
            self.name,
            fmt_real(self.measured),
            rel,
            fmt_real(self.bound),
            status
        )
    }
}

pub const REPORT_HEADER: &str = "suite\tcheck\tmeasured\trelation\tbound\tstatus";

pub fn run_suite(suite: Suite, seed: u64, scale: Scale) -> Result<Vec<Check>> {
    Ok(match suite {
        Suite::Properties => properties(seed, scale)?,
        Suite::Stagewise => stagewise(seed, scale)?,
        Suite::Regret => regret(seed, scale)?,
        Suite::All => {
            let mut all = properties(seed, scale)?;
            all.extend(stagewise(seed, scale)?);
            all.extend(regret(seed, scale)?);
            all
        }
    })
}

/// Σ over full joint actions of Π x · F, by direct enumeration.
fn enumerate_expectation(oracle: &dyn SubmodularOracle, x: &submapg_core::BlockVector, m: &PartitionMatroid) -> f64 {
    let mut total = 0.0;
    m.for_each_full(|set| {
        let w: f64 = set.pairs().map(|e| x.get(e)).product();
        if w > 0.0 {
            total += w * oracle.eval(set);
        }
    });
    total
}

fn properties(seed: u64, scale: Scale) -> Result<Vec<Check>> {
    const S: &str = "properties";
    let mut rng = derive(seed, stream_id(10, 0));
    let n_inst = scale.pick(100, 10);
    let mut eq_err: f64 = 0.0;
    let mut fd_err: f64 = 0.0;
    let mut dr_max = f64::NEG_INFINITY;
    let mut grad_ratio: f64 = 0.0;
    let mut min_coord = f64::INFINITY;
    let mut gap_slack = f64::INFINITY;
    let mut violations = 0usize;
    for k in 0..n_inst {
        let inst = small_instance(k, &mut rng);
        let (f, m) = (&inst.oracle, &inst.matroid);
        let x = face_point(m, &mut rng);
        eq_err = eq_err.max((pme_exact(f, &x, m)? - enumerate_expectation(f.as_ref(), &x, m)).abs());
        let g = pme_grad_exact(f, &x, m)?;
        let fd = pme_grad_fd(f, &x, m, FD_STEP)?;
        for (a, b) in g.iter().zip(fd.iter()) {
            fd_err = fd_err.max((a - b).abs() / a.abs().max(1.0));
            min_coord = min_coord.min(a);
        }
        let b = f.marginal_bound();
        grad_ratio = grad_ratio.max(g.norm() / (b * ((m.num_agents() * m.max_block()) as f64).sqrt()));
        let pairs: Vec<AgentActionPair> = (0..m.num_agents())
            .flat_map(|i| (0..m.block(i)).map(move |a| AgentActionPair::new(i, a)))
            .collect();
        for &p in &pairs {
            for &q in &pairs {
                dr_max = dr_max.max(pme_second_diff(f, &x, m, p, q)?);
            }
        }
        for _ in 0..scale.pick(1000, 50) {
            let x = face_point(m, &mut rng);
            let y = face_point(m, &mut rng);
            let g = pme_grad_exact(f, &x, m)?;
            let slack = 0.5 * g.dot(&y.sub(&x)) - (0.5 * pme_exact(f, &y, m)? - pme_exact(f, &x, m)?);
            gap_slack = gap_slack.min(slack);
        }
        let report = check_assumption(f, m, CheckMode::Exhaustive, &mut rng)?;
        violations += report.violations.len();
    }

    let (n_unb, samples) = (scale.pick(20, 3), scale.pick(100_000, 5_000));
    let mut worst_z: f64 = 0.0;
    let mut var_ratio: f64 = 0.0;
    for k in 0..n_unb {
        let inst = small_instance(k, &mut rng);
        let (f, m) = (&inst.oracle, &inst.matroid);
        let x = face_point(m, &mut rng);
        let exact = pme_grad_exact(f, &x, m)?;
        let ex = exact.flat();
        let mut sum = vec![0.0; ex.len()];
        let mut sq = vec![0.0; ex.len()];
        let mut dev = 0.0;
        let mut sample_rng = derive(seed, stream_id(11, k as u32));
        for _ in 0..samples {
            let g = diff_reward_gradient(f, &x, m, &mut sample_rng)?;
            dev += g.sub(&exact).norm().powi(2);
            for (j, v) in g.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        let n = samples as f64;
        for j in 0..ex.len() {
            let mean = sum[j] / n;
            let se = ((sq[j] / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
            let diff = (mean - ex[j]).abs();
            // zero-variance coordinates only differ by summation rounding
            let z = if se > 0.0 { diff / se } else if diff <= 1e-9 { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z);
        }
        let b = f.marginal_bound();
        var_ratio = var_ratio.max(dev / n / ((m.num_agents() * m.max_block()) as f64 * b * b));
    }

    let mut diam_ratio: f64 = 0.0;
    for _ in 0..scale.pick(50, 10) {
        let n_max = rng.random_range(1..=4);
        let na_max = rng.random_range(1..=4);
        let mut slots = SlotMap::new(n_max, na_max);
        let agents: Vec<usize> = (0..n_max).collect();
        slots.sync(&agents)?;
        let m = PartitionMatroid::new((0..n_max).map(|_| rng.random_range(1..=na_max)).collect())?;
        for _ in 0..20 {
            let a = slots.embed(&agents, &face_point(&m, &mut rng))?;
            let b = slots.embed(&agents, &face_point(&m, &mut rng))?;
            let d = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            diam_ratio = diam_ratio.max(d / (2.0 * n_max as f64).sqrt());
        }
    }

    let mut greedy_ratio = f64::INFINITY;
    for _ in 0..scale.pick(200, 20) {
        let agents = rng.random_range(1..=4);
        let actions = rng.random_range(1..=4);
        let f = WeightedCoverage::random(agents, actions, 8, &mut rng);
        let m = f.matroid();
        let (_, opt) = brute_force_opt(&f, &m, DEFAULT_ENUMERATION_CAP)?;
        greedy_ratio = greedy_ratio.min(f.eval(&csg(&f, &m, Sensing::Global)) / opt);
    }
    let mut modular_gap: f64 = 0.0;
    for _ in 0..scale.pick(50, 10) {
        let f = ModularOracle::random(rng.random_range(1..=4), rng.random_range(1..=4), &mut rng);
        let m = f.matroid();
        let (_, opt) = brute_force_opt(&f, &m, DEFAULT_ENUMERATION_CAP)?;
        modular_gap = modular_gap.max((f.eval(&csg(&f, &m, Sensing::Global)) - opt).abs());
    }

    Ok(vec![
        Check::new(S, "objective_equivalence_max_abs_error", eq_err, Relation::AtMost, 1e-12),
        Check::new(S, "gradient_fd_max_rel_error", fd_err, Relation::AtMost, 1e-6),
        Check::new(S, "diff_reward_max_z_score", worst_z, Relation::AtMost, 4.0),
        Check::new(S, "gradient_norm_over_bound", grad_ratio, Relation::AtMost, 1.0 + 1e-12),
        Check::new(S, "gradient_min_coordinate", min_coord, Relation::AtLeast, -1e-12),
        Check::new(S, "variance_over_bound", var_ratio, Relation::AtMost, 1.0),
        Check::new(S, "embedded_diameter_over_bound", diam_ratio, Relation::AtMost, 1.0 + 1e-12),
        Check::new(S, "second_difference_max", dr_max, Relation::AtMost, 1e-12),
        Check::new(S, "restricted_dr_gap_min_slack", gap_slack, Relation::AtLeast, -1e-10),
        Check::new(S, "assumption_violations", violations as f64, Relation::AtMost, 0.0),
        Check::new(S, "greedy_over_opt_min", greedy_ratio, Relation::AtLeast, 0.5),
        Check::new(S, "greedy_modular_max_gap", modular_gap, Relation::AtMost, 1e-12),
    ])
}

/// Seed-averaged (1/K) Σ f(x_k) against ½·OPT − D√(G²+σ²)/(2√K), with the
/// slack per instance family.
fn stagewise(seed: u64, scale: Scale) -> Result<Vec<Check>> {
    const S: &str = "stagewise";
    let iterations = 500;
    let mut rng = derive(seed, stream_id(12, 0));
    let mut per_family: Vec<(Family, f64, f64, f64)> = Vec::new();
    for k in 0..scale.pick(50, 4) {
        let inst = small_instance(k, &mut rng);
        let (f, m) = (&inst.oracle, &inst.matroid);
        let bounds = diameter_and_bounds(f.marginal_bound(), m.num_agents(), m.max_block());
        let step = step_size_stagewise(bounds.diameter, bounds.gradient, bounds.sigma, iterations)?;
        let seeds = scale.pick(20, 3);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for s in 0..seeds {
            let mut run_rng = derive(seed, stream_id(13, (k * 100 + s) as u32));
            let run = stagewise_sga(f, m, iterations, step, GradientEstimator::DifferenceReward, &mut run_rng)?;
            lhs += run.average_value() / seeds as f64;
            rhs = run.rhs();
        }
        per_family.push((inst.family, lhs, rhs, lhs - rhs));
    }
    let mut checks = Vec::new();
    for family in [Family::Coverage, Family::Tracking] {
        let group: Vec<_> = per_family.iter().filter(|r| r.0 == family).collect();
        if group.is_empty() {
            continue;
        }
        let min_slack = group.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
        let mean_lhs = group.iter().map(|r| r.1).sum::<f64>() / group.len() as f64;
        let mean_rhs = group.iter().map(|r| r.2).sum::<f64>() / group.len() as f64;
        checks.push(Check::new(S, format!("{}_mean_average_value", family.tag()), mean_lhs, Relation::Report, 0.0));
        checks.push(Check::new(S, format!("{}_mean_rhs", family.tag()), mean_rhs, Relation::Report, 0.0));
        checks.push(Check::new(S, format!("{}_min_slack", family.tag()), min_slack, Relation::AtLeast, 0.0));
    }
    Ok(checks)
}

fn drift_base(seed: u64) -> WeightedCoverage {
    WeightedCoverage::random(3, 3, 8, &mut derive(seed, stream_id(14, 0)))
}

/// Mean cumulative ½-regret, mean bound and mean path length of the online
/// dynamics on drifting streams.
pub fn drift_regret(seed: u64, horizon: usize, drift: f64, seeds: usize) -> Result<(f64, f64, f64)> {
    let base = drift_base(seed);
    let probe = DriftingCoverageStream::new(base.clone(), horizon, drift);
    let bounds = diameter_and_bounds(base.marginal_bound(), probe.max_agents(), probe.max_actions());
    let step = step_size_dynamic(bounds.diameter, 0.0, horizon, bounds.gradient, bounds.sigma)?;
    let (mut regret, mut bound, mut path) = (0.0, 0.0, 0.0);
    for s in 0..seeds {
        let mut stream = DriftingCoverageStream::new(base.clone(), horizon, drift);
        let mut rng = derive(seed, stream_id(15, s as u32));
        let trace = run_online(&mut stream, step, GradientEstimator::DifferenceReward, &mut rng)?;
        regret += trace.cumulative_regret() / seeds as f64;
        bound += trace.bound_rhs()? / seeds as f64;
        path += trace.path_length / seeds as f64;
    }
    Ok((regret, bound, path))
}

fn regret(seed: u64, scale: Scale) -> Result<Vec<Check>> {
    const S: &str = "regret";
    let long = scale.pick(2000, 200);
    let short = scale.pick(200, 50);
    let seeds = scale.pick(5, 2);
    let (r_long, b_long, p_long) = drift_regret(seed, long, 0.01, seeds)?;
    let (r_short, _, _) = drift_regret(seed, short, 0.01, seeds)?;
    let mut checks = vec![
        Check::new(S, format!("drift_cum_regret_T{long}"), r_long, Relation::AtMost, b_long),
        Check::new(S, format!("drift_path_length_T{long}"), p_long, Relation::Report, 0.0),
        Check::new(S, format!("drift_regret_per_round_T{long}_vs_T{short}"), r_long / long as f64, Relation::AtMost, r_short / short as f64),
    ];

    // adversarial: every action label is rotated on odd rounds, so the optimum
    // jumps each round; report, no assertion
    let first = drift_base(seed);
    let m = first.matroid();
    let rotated = (0..m.num_agents())
        .map(|i| {
            let k = m.block(i);
            (0..k).map(|a| first.covered_by(i, (a + 1) % k).to_vec()).collect()
        })
        .collect();
    let second = WeightedCoverage::new(rotated, first.weights().to_vec())?;
    let mut stream = AlternatingStream {
        first,
        second,
        horizon: short,
    };
    let bounds = diameter_and_bounds(
        stream.first.marginal_bound().max(stream.second.marginal_bound()),
        stream.max_agents(),
        stream.max_actions(),
    );
    let step = step_size_dynamic(bounds.diameter, 0.0, short, bounds.gradient, bounds.sigma)?;
    let trace = run_online(&mut stream, step, GradientEstimator::DifferenceReward, &mut seeded(seed))?;
    checks.push(Check::new(S, "adversarial_path_length", trace.path_length, Relation::Report, 0.0));
    checks.push(Check::new(S, "adversarial_cum_regret", trace.cumulative_regret(), Relation::Report, 0.0));
    checks.push(Check::new(S, "adversarial_bound", trace.bound_rhs()?, Relation::Report, 0.0));
    Ok(checks)
}
