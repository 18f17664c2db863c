//! Acceptance suites: each criterion runs a small experiment and compares
//! the outcome against an independent oracle or a fixed tolerance.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::adversary::{
    delay_overlap_count, generate_delays, play_episode, CostGenerator, CostSequence, DelayKind, DelaySchedule,
};
use crate::bench::{run_all, Environment};
use crate::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use crate::config::{CostConfig, DelayConfig, ExperimentConfig, LearnerConfig, MdpSource, RunSetup};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::learners::{
    exploration_bonus, Algorithm, DelayedHedge, DelayedOreps, Learner, Tuning, UobFtrl, UobReps,
};
use crate::mdp::{
    occupancy_from, state_action_occupancy, validate_occupancy, CostFunction, Dims,
    MdpSpec, OccupancyMeasure, Policy, Transition,
};
use crate::occupancy_opt::{
    comp_uob, kkt_residuals, omd_objective, solve_omd_unknown, solve_oreps_known, uniform_reference, SolverConfig,
};
use crate::rng::{stream, substream};

/// Flow and membership tolerance for learner iterates.
pub const OCCUPANCY_TOL: f64 = 1e-6;
pub const KL_SLACK: f64 = 1e-9;
pub const KL_MIN_UPDATES: usize = 10_000;
pub const COVERAGE_MIN: f64 = 0.9;
pub const UOB_SAMPLE_SLACK: f64 = 1e-9;
pub const UOB_GRID_TOL: f64 = 1e-3;
pub const EXP3_TOL: f64 = 1e-9;
pub const REGRET_RATIO_MAX: f64 = 0.5;
pub const DELAY_SLOPE_MAX: f64 = 0.75;
pub const KKT_TOL: f64 = 1e-6;
pub const REDUCTION_TIME_LIMIT: Duration = Duration::from_secs(30);
pub const VALIDITY_TIME_LIMIT: Duration = Duration::from_secs(300);
pub const REGRET_TIME_LIMIT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<20} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type CheckFn = fn() -> Result<(bool, String)>;

/// `(id, name, check)` in criterion order.
pub const SUITES: [(usize, &str, CheckFn); 11] = [
    (1, "estimator-reduction", estimator_reduction),
    (2, "occupancy-validity", occupancy_validity),
    (3, "kl-stability", kl_stability),
    (4, "confidence-coverage", confidence_coverage),
    (5, "comp-uob", comp_uob_correctness),
    (6, "exp3-equivalence", exp3_equivalence),
    (7, "sublinear-regret", sublinear_regret),
    (8, "delay-scaling", delay_scaling),
    (9, "delay-overlap", delay_overlap),
    (10, "hedge-optimism", hedge_optimism),
    (11, "solver-optimality", solver_optimality),
];

pub fn suite_names() -> impl Iterator<Item = &'static str> {
    SUITES.iter().map(|s| s.1).chain(std::iter::once("all"))
}

/// Runs one suite by name, or every suite for `"all"`. Errors inside a
/// check are reported as failures rather than aborting the others.
pub fn run_suite(name: &str) -> Result<Vec<CriterionResult>> {
    let selected: Vec<_> = SUITES.iter().filter(|s| name == "all" || s.1 == name).collect();
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "unknown suite {name:?}; expected one of {}",
            suite_names().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(selected.into_iter().map(|&(id, name, f)| run_criterion(id, name, f)).collect())
}

pub fn run_criterion(id: usize, name: &'static str, check: CheckFn) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn micro() -> Dims {
    Dims::new(2, 2, 2).expect("valid")
}

fn switching_config(algorithm: Algorithm, episodes: usize, delay: i64, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        name: format!("{algorithm}-d{delay}-k{episodes}"),
        mdp: MdpSource::LayeredRandom {
            states: 2,
            actions: 2,
            horizon: 2,
            seed: None,
        },
        costs: CostConfig {
            generator: CostGenerator::Switching { period: 100 },
            seed: None,
        },
        delays: DelayConfig {
            kind: DelayKind::Constant { value: delay },
            seed: None,
        },
        learner: LearnerConfig::new(algorithm),
        episodes,
        seeds,
        exact_expected_cost: true,
        output_dir: None,
    }
}

fn setup_for(config: &ExperimentConfig, seed: u64) -> Result<RunSetup> {
    config.setup(seed)
}

/// Criterion 1: with no delay the two estimators agree bit for bit, and so
/// do the policies of learners built on either.
pub fn estimator_reduction() -> Result<(bool, String)> {
    let start = Instant::now();
    let cfg = switching_config(Algorithm::UobReps, 2000, 0, vec![1]);
    let setup = setup_for(&cfg, 1)?;
    let dims = setup.mdp.dims();
    let feedback = cfg.learner.feedback();
    let mut adapted = UobReps::new(dims, 0, setup.tuning, cfg.learner.solver, EstimatorKind::DelayAdapted, feedback)?;
    let mut standard = UobReps::new(dims, 0, setup.tuning, cfg.learner.solver, EstimatorKind::Standard, feedback)?;
    let mut env_a = Environment::from_setup(&setup, true)?;
    let mut env_b = Environment::from_setup(&setup, true)?;
    let (mut mismatched_estimates, mut mismatched_policies) = (0usize, 0usize);
    while !env_a.is_done() {
        let a = env_a.step(&mut adapted)?;
        let b = env_b.step(&mut standard)?;
        mismatched_estimates += a.diagnostics.estimator_mismatches + b.diagnostics.estimator_mismatches;
        let same = a.policy.as_slice().iter().zip(b.policy.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
        mismatched_policies += usize::from(!same);
    }
    let elapsed = start.elapsed();
    let passed = mismatched_estimates == 0 && mismatched_policies == 0 && elapsed < REDUCTION_TIME_LIMIT;
    Ok((
        passed,
        format!(
            "K=2000, d=0: {mismatched_estimates} estimate mismatches, {mismatched_policies} policy mismatches, {:.1}s",
            elapsed.as_secs_f64()
        ),
    ))
}

struct Validity {
    checked: usize,
    worst_flow: f64,
    worst_membership: f64,
}

impl Validity {
    fn record(&mut self, q: &OccupancyMeasure, set: &ConfidenceSet) {
        self.checked += 1;
        self.worst_flow = self.worst_flow.max(validate_occupancy(q, 0.0).max_magnitude());
        self.worst_membership = self.worst_membership.max(set.occupancy_violation(q));
    }
}

/// Criterion 2: every iterate of the mirror-descent learners stays in its
/// polytope.
pub fn occupancy_validity() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut v = Validity {
        checked: 0,
        worst_flow: 0.0,
        worst_membership: 0.0,
    };
    for algorithm in [Algorithm::UobReps, Algorithm::UobFtrl, Algorithm::OrepsKnown] {
        let mut cfg = switching_config(algorithm, 2000, 0, vec![]);
        cfg.delays.kind = DelayKind::UniformRandom { max: 20 };
        for seed in 1..=10 {
            let setup = setup_for(&cfg, seed)?;
            let dims = setup.mdp.dims();
            let mut env = Environment::from_setup(&setup, true)?;
            let l = &cfg.learner;
            match algorithm {
                Algorithm::UobReps => {
                    let mut learner = UobReps::new(dims, 0, setup.tuning, l.solver, l.estimator, l.feedback())?;
                    v.record(learner.occupancy(), learner.confidence_set());
                    while !env.is_done() {
                        env.step(&mut learner)?;
                        v.record(learner.occupancy(), learner.confidence_set());
                    }
                }
                Algorithm::UobFtrl => {
                    let mut learner = UobFtrl::new(dims, 0, setup.tuning, l.solver, l.feedback())?;
                    v.record(learner.occupancy(), learner.decision_set());
                    while !env.is_done() {
                        env.step(&mut learner)?;
                        v.record(learner.occupancy(), learner.decision_set());
                    }
                }
                _ => {
                    let truth = ConfidenceSet::singleton(setup.mdp.transition());
                    let mut learner = DelayedOreps::new(setup.mdp.clone(), setup.tuning, l.solver, l.estimator)?;
                    v.record(learner.occupancy(), &truth);
                    while !env.is_done() {
                        env.step(&mut learner)?;
                        v.record(learner.occupancy(), &truth);
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = v.worst_flow <= OCCUPANCY_TOL && v.worst_membership <= OCCUPANCY_TOL && elapsed < VALIDITY_TIME_LIMIT;
    Ok((
        passed,
        format!(
            "{} iterates: worst flow {:.2e}, worst membership {:.2e}, {:.1}s",
            v.checked,
            v.worst_flow,
            v.worst_membership,
            elapsed.as_secs_f64()
        ),
    ))
}

/// Criterion 3: `Σ KL(q^k ‖ q^{k+1}) ≤ (η²/2) Σ q^k ĉ²` on every known-transition update.
pub fn kl_stability() -> Result<(bool, String)> {
    let mut updates = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for (seed, delay) in [(1, DelayKind::Constant { value: 0 }), (2, DelayKind::UniformRandom { max: 20 })] {
        let mut cfg = switching_config(Algorithm::OrepsKnown, 10_000, 0, vec![seed]);
        cfg.costs.generator = CostGenerator::IidBernoulli;
        cfg.delays.kind = delay;
        let setup = setup_for(&cfg, seed)?;
        let mut learner = DelayedOreps::new(setup.mdp.clone(), setup.tuning, cfg.learner.solver, cfg.learner.estimator)?;
        let mut env = Environment::from_setup(&setup, true)?;
        while !env.is_done() {
            if let Some((lhs, rhs)) = env.step(&mut learner)?.diagnostics.kl_stability {
                updates += 1;
                worst = worst.max(lhs - rhs);
                violations += usize::from(lhs > rhs + KL_SLACK);
            }
        }
    }
    Ok((
        updates >= KL_MIN_UPDATES && violations == 0,
        format!("{updates} updates, {violations} violations, max lhs-rhs {worst:.2e}"),
    ))
}

/// Criterion 4: the true transition stays inside every `P^k` on most runs.
pub fn confidence_coverage() -> Result<(bool, String)> {
    let dims = Dims::new(3, 2, 3)?;
    let (runs, episodes, delta) = (500usize, 2000usize, 0.1);
    let mut covered = 0usize;
    for run in 0..runs as u64 {
        let mut rng = substream(4, "coverage", run);
        let mdp = MdpSpec::layered_random(dims, &mut rng);
        let policy = Policy::random(dims, &mut rng);
        let mut counters = VisitCounters::new(dims);
        let mut inside = true;
        for k in 1..=episodes {
            let set = ConfidenceSet::build(&counters, CounterKind::Immediate, delta, episodes, k)?;
            if !set.contains(mdp.transition()) {
                inside = false;
                break;
            }
            counters.update(&play_episode(k, &policy, &mdp, &mut rng), CounterKind::Immediate);
        }
        covered += usize::from(inside);
    }
    let rate = covered as f64 / runs as f64;
    Ok((rate >= COVERAGE_MIN, format!("{covered}/{runs} runs covered at every episode ({rate:.3})")))
}

/// A confidence set around `p` after `episodes` random-policy episodes.
fn learned_set(mdp: &MdpSpec, episodes: usize, seed: u64) -> Result<ConfidenceSet> {
    let dims = mdp.dims();
    let mut rng = stream(seed, "learned-set");
    let mut counters = VisitCounters::new(dims);
    let policy = Policy::uniform(dims);
    for k in 1..=episodes {
        counters.update(&play_episode(k, &policy, mdp, &mut rng), CounterKind::Immediate);
    }
    ConfidenceSet::build(&counters, CounterKind::Immediate, 0.1, 1000, episodes + 1)
}

/// Grid maximum of `q^{π,p'}_1(s,a)` over the two first-layer rows leaving
/// the initial state, with every other row at `base`.
fn grid_uob(policy: &Policy, set: &ConfidenceSet, base: &Transition, points: usize) -> Result<Vec<f64>> {
    let dims = policy.dims();
    let ranges: Vec<(f64, f64)> = (0..dims.actions).map(|a| set.entry_ranges(0, 0, a)[0]).collect();
    let mut best = vec![0.0f64; dims.sa_len()];
    let mut p = base.clone();
    let mut idx = vec![0usize; dims.actions];
    loop {
        for (a, &i) in idx.iter().enumerate() {
            let (lo, hi) = ranges[a];
            let x = if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
            let row = p.row_mut(0, 0, a);
            row[0] = x;
            row[1] = 1.0 - x;
        }
        let q = state_action_occupancy(policy, &p, 0)?;
        best.iter_mut().zip(&q).for_each(|(b, x)| *b = b.max(*x));
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx[pos] < points {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Criterion 5: `u` dominates sampled member occupancies and matches a grid search.
pub fn comp_uob_correctness() -> Result<(bool, String)> {
    let dims = micro();
    let (mut sample_violations, mut worst_grid_gap, mut samples) = (0usize, 0.0f64, 0usize);
    for instance in 0..12u64 {
        let mut rng = substream(5, "uob", instance);
        let mdp = MdpSpec::layered_random(dims, &mut rng);
        let set = learned_set(&mdp, [3, 10, 40, 200][instance as usize % 4], instance)?;
        let policy = Policy::random(dims, &mut rng);
        let u = comp_uob(&policy, &set, 0)?;
        for _ in 0..1000 {
            let member = set.sample_member(&mut rng)?;
            let q = state_action_occupancy(&policy, &member, 0)?;
            samples += 1;
            sample_violations += usize::from(q.iter().zip(&u).any(|(q, u)| *q > u + UOB_SAMPLE_SLACK));
        }
        let base = set.sample_member(&mut rng)?;
        let grid = grid_uob(&policy, &set, &base, 201)?;
        for (g, x) in grid.iter().zip(&u) {
            worst_grid_gap = worst_grid_gap.max((g - x).abs());
        }
    }
    Ok((
        sample_violations == 0 && worst_grid_gap <= UOB_GRID_TOL,
        format!("{samples} sampled members, {sample_violations} violations; max |u - grid| {worst_grid_gap:.2e}"),
    ))
}

/// Delayed exponential weights over arms, written directly.
struct Exp3Oracle {
    weights: Vec<f64>,
    history: Vec<Vec<f64>>,
    eta: f64,
    gamma: f64,
    adapted: bool,
}

impl Exp3Oracle {
    fn new(arms: usize, eta: f64, gamma: f64, adapted: bool) -> Self {
        Self {
            weights: vec![1.0 / arms as f64; arms],
            history: Vec::new(),
            eta,
            gamma,
            adapted,
        }
    }

    /// Records `w^k`, then applies the packets `(j, arm, cost)` released at `k`.
    fn step(&mut self, released: &[(usize, usize, f64)]) {
        self.history.push(self.weights.clone());
        let now = self.weights.clone();
        let mut loss = vec![0.0; now.len()];
        for &(j, arm, cost) in released {
            let then = self.history[j - 1][arm];
            let denom = if self.adapted { then.max(now[arm]) } else { then } + self.gamma;
            loss[arm] += cost / denom;
        }
        let raw: Vec<f64> = now.iter().zip(&loss).map(|(w, l)| w * (-self.eta * l).exp()).collect();
        let z: f64 = raw.iter().sum();
        self.weights = raw.iter().map(|w| w / z).collect();
    }
}

/// Criterion 6: on a one-state, one-step MDP every learner is delayed EXP3.
pub fn exp3_equivalence() -> Result<(bool, String)> {
    let arms = 3;
    let dims = Dims::new(1, arms, 1)?;
    let episodes = 500;
    let mdp = MdpSpec::new(Transition::uniform(dims), 0)?;
    let costs = CostSequence::generate(&CostGenerator::IidBernoulli, dims, episodes, 6)?;
    let spike = DelayKind::Spike {
        base: 2,
        height: 40,
        period: 25,
    };
    let delays = generate_delays(&spike, episodes, 6)?;
    let tuning = Tuning {
        eta: 0.3,
        gamma: 0.05,
        delta: 0.1,
        episodes,
    };
    let solver = SolverConfig::default();
    let mut report = Vec::new();
    let mut passed = true;
    for algorithm in [Algorithm::Hedge, Algorithm::OrepsKnown, Algorithm::UobReps] {
        let mut hedge = None;
        let mut learner: Box<dyn Learner> = match algorithm {
            Algorithm::Hedge => {
                let h = DelayedHedge::new(dims, 0, tuning, CounterKind::Immediate, 4096)?;
                // arm played by each enumerated policy
                hedge = Some(
                    h.policies()
                        .iter()
                        .map(|p| p.row(0, 0).iter().position(|&x| x == 1.0).unwrap_or(0))
                        .collect::<Vec<_>>(),
                );
                Box::new(h)
            }
            Algorithm::OrepsKnown => Box::new(DelayedOreps::new(mdp.clone(), tuning, solver, EstimatorKind::DelayAdapted)?),
            _ => Box::new(UobReps::new(dims, 0, tuning, solver, EstimatorKind::DelayAdapted, CounterKind::Delayed)?),
        };
        let mut oracle = Exp3Oracle::new(arms, tuning.eta, tuning.gamma, hedge.is_none());
        let mut env = Environment::new(&mdp, &costs, &delays, 6, true)?;
        let mut actions = Vec::with_capacity(episodes);
        let mut worst = 0.0f64;
        while !env.is_done() {
            let out = env.step(learner.as_mut())?;
            let k = out.k;
            match &hedge {
                // Hedge plays a sampled deterministic policy; its mixture is
                // checked through the expected cost under exact reporting.
                Some(_) => {
                    let mixture: f64 = (0..arms).map(|a| oracle.weights[a] * costs.episode(k).cost(0, 0, a)).sum();
                    worst = worst.max((out.expected_cost - mixture).abs());
                }
                None => {
                    for (a, b) in out.policy.row(0, 0).iter().zip(&oracle.weights) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            actions.push(out.trajectory.actions[0]);
            let released: Vec<(usize, usize, f64)> = (1..=k)
                .filter(|&j| j + delays.delay(j) == k)
                .map(|j| (j, actions[j - 1], costs.episode(j).cost(0, 0, actions[j - 1])))
                .collect();
            let origins: Vec<usize> = out.arrivals.iter().map(|p| p.origin).collect();
            if origins != released.iter().map(|r| r.0).collect::<Vec<_>>() {
                return Err(Error::Protocol(format!("arrival sets disagree at episode {k}")));
            }
            oracle.step(&released);
        }
        passed &= worst <= EXP3_TOL;
        report.push(format!("{algorithm} {worst:.1e}"));
    }
    Ok((passed, format!("K=500 spike delays, max weight gap: {}", report.join(", "))))
}

/// Mean `R_K` over seeds `1..=10`.
fn mean_regret(algorithm: Algorithm, episodes: usize, delay: i64) -> Result<f64> {
    let cfg = switching_config(algorithm, episodes, delay, (1..=10).collect());
    let records = run_all(&cfg)?;
    Ok(records.iter().map(|r| r.summary.regret).sum::<f64>() / records.len() as f64)
}

/// Criterion 7: `R_K / K` at least halves when `K` grows tenfold.
pub fn sublinear_regret() -> Result<(bool, String)> {
    let start = Instant::now();
    let short = mean_regret(Algorithm::OrepsKnown, 2000, 0)? / 2000.0;
    let long = mean_regret(Algorithm::OrepsKnown, 20_000, 0)? / 20_000.0;
    let ratio = long / short;
    let elapsed = start.elapsed();
    Ok((
        ratio < REGRET_RATIO_MAX && elapsed < REGRET_TIME_LIMIT,
        format!(
            "R/K {short:.4} at K=2000, {long:.4} at K=20000, ratio {ratio:.3}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    ))
}

/// Criterion 8: regret grows with delay, at most like `D^0.75` beyond the no-delay run.
pub fn delay_scaling() -> Result<(bool, String)> {
    let episodes = 20_000;
    let delays = [0i64, 50, 200];
    let regrets = delays
        .iter()
        .map(|&d| mean_regret(Algorithm::OrepsKnown, episodes, d))
        .collect::<Result<Vec<_>>>()?;
    let monotone = regrets.windows(2).all(|w| w[0] <= w[1]);
    let (x1, x2) = ((episodes as f64) * 50.0, (episodes as f64) * 200.0);
    let (y1, y2) = (regrets[1] - regrets[0], regrets[2] - regrets[0]);
    let slope = if y1 > 0.0 && y2 > 0.0 {
        (y2 / y1).ln() / (x2 / x1).ln()
    } else {
        f64::NAN
    };
    Ok((
        monotone && slope <= DELAY_SLOPE_MAX,
        format!(
            "mean R_K {:.1} / {:.1} / {:.1} for d = 0 / 50 / 200, slope {slope:.3}",
            regrets[0], regrets[1], regrets[2]
        ),
    ))
}

/// Criterion 9: the overlap count never exceeds `D + K`, and the fast count
/// matches the double loop.
pub fn delay_overlap() -> Result<(bool, String)> {
    let mut rng = stream(9, "overlap");
    let (mut violations, mut mismatches) = (0usize, 0usize);
    let schedules = 10_000;
    for _ in 0..schedules {
        let episodes = rng.random_range(1..=120usize);
        let max = rng.random_range(0..=60usize);
        let d: Vec<usize> = (0..episodes)
            .map(|_| if rng.random_bool(0.2) { rng.random_range(0..=4 * max) } else { rng.random_range(0..=max) })
            .collect();
        let schedule = DelaySchedule::new(d.clone());
        let fast = delay_overlap_count(&schedule);
        let mut brute = 0u64;
        for k in 1..=episodes {
            for i in 1..=episodes {
                let release = i + d[i - 1];
                brute += u64::from(k <= release && release < k + d[k - 1]);
            }
        }
        mismatches += usize::from(fast != brute);
        violations += usize::from(brute > (schedule.total() + episodes) as u64);
    }
    Ok((
        violations == 0 && mismatches == 0,
        format!("{schedules} schedules, {violations} bound violations, {mismatches} count mismatches"),
    ))
}

/// Criterion 10: whenever `p ∈ P^k` throughout a run, the bonus keeps the
/// empirical value optimistic.
pub fn hedge_optimism() -> Result<(bool, String)> {
    let dims = micro();
    let episodes = 1500;
    let probes_per_run = 100;
    let (mut eligible, mut skipped, mut violations, mut informative) = (0usize, 0usize, 0usize, 0usize);
    for run in 0..10u64 {
        let mut cfg = switching_config(Algorithm::Hedge, episodes, 0, vec![run]);
        cfg.delays.kind = DelayKind::UniformRandom { max: 10 };
        let setup = setup_for(&cfg, run)?;
        let mut learner = DelayedHedge::new(dims, 0, setup.tuning, CounterKind::Immediate, 4096)?;
        let mut env = Environment::from_setup(&setup, true)?;
        let mut rng = substream(10, "probes", run);
        let mut probe_at: Vec<usize> = (0..probes_per_run).map(|_| rng.random_range(1..=episodes)).collect();
        probe_at.sort_unstable();
        let mut sets = Vec::with_capacity(probes_per_run);
        let mut covered = true;
        let mut next = 0;
        while !env.is_done() {
            let k = env.next_episode();
            let set = learner.confidence_set();
            covered &= set.contains(setup.mdp.transition());
            while next < probe_at.len() && probe_at[next] == k {
                sets.push(set.clone());
                next += 1;
            }
            env.step(&mut learner)?;
        }
        if !covered {
            skipped += 1;
            continue;
        }
        eligible += 1;
        for set in &sets {
            let policy = Policy::random(dims, &mut rng);
            let cost = CostFunction::random(dims, &mut rng);
            let bonus = exploration_bonus(&policy, set.center(), set, 0)?;
            let optimistic = state_action_occupancy(&policy, set.center(), 0)?
                .iter()
                .zip(cost.as_slice())
                .map(|(q, c)| q * c)
                .sum::<f64>();
            let truth = occupancy_from(&policy, setup.mdp.transition(), 0)?.dot(cost.as_slice());
            violations += usize::from(optimistic - bonus > truth + 1e-12);
            informative += usize::from(bonus < 2.0 * dims.horizon as f64);
        }
    }
    Ok((
        eligible > 0 && violations == 0,
        format!(
            "{eligible} covered runs ({skipped} skipped), {} probes ({informative} below the cap), {violations} violations",
            eligible * probes_per_run
        ),
    ))
}

fn random_interior_occupancy(dims: Dims, rng: &mut impl Rng) -> Result<(OccupancyMeasure, Transition)> {
    let p = Transition::random(dims, 1.0, rng);
    let policy = Policy::random(dims, rng);
    Ok((occupancy_from(&policy, &p, 0)?, p))
}

fn random_loss(dims: Dims, rng: &mut impl Rng) -> Vec<f64> {
    (0..dims.sa_len())
        .map(|_| if rng.random_bool(0.4) { rng.random_range(0.0..8.0) } else { 0.0 })
        .collect()
}

/// Criterion 11: both dual solvers beat random feasible points and satisfy KKT.
pub fn solver_optimality() -> Result<(bool, String)> {
    let cfg = SolverConfig::default();
    let (mut beaten, mut worst_kkt_known, mut worst_kkt_unknown) = (0usize, 0.0f64, 0.0f64);
    for instance in 0..50u64 {
        let mut rng = substream(11, "known", instance);
        let dims = Dims::new(rng.random_range(1..=3), rng.random_range(2..=3), rng.random_range(1..=3))?;
        let (q_prev, p) = random_interior_occupancy(dims, &mut rng)?;
        let loss = random_loss(dims, &mut rng);
        let eta = rng.random_range(0.05..1.0);
        let (q, _, _) = solve_oreps_known(&q_prev, &p, &loss, eta, &cfg)?;
        let best = omd_objective(&q, &q_prev, &loss, eta)?;
        worst_kkt_known = worst_kkt_known.max(validate_occupancy(&q, 0.0).max_magnitude());
        worst_kkt_known = worst_kkt_known.max(ConfidenceSet::singleton(&p).occupancy_violation(&q));
        for _ in 0..100 {
            let other = occupancy_from(&Policy::random(dims, &mut rng), &p, 0)?;
            beaten += usize::from(omd_objective(&other, &q_prev, &loss, eta)? < best - 1e-12);
        }
    }
    for instance in 0..50u64 {
        let mut rng = substream(11, "unknown", instance);
        let dims = Dims::new(rng.random_range(1..=3), rng.random_range(2..=3), rng.random_range(1..=3))?;
        let mdp = MdpSpec::layered_random(dims, &mut rng);
        let set = learned_set(&mdp, rng.random_range(0..60), instance)?;
        let q_prev = if rng.random_bool(0.5) {
            uniform_reference(dims, 0)
        } else {
            random_interior_occupancy(dims, &mut rng)?.0
        };
        let loss = random_loss(dims, &mut rng);
        let eta = rng.random_range(0.05..1.0);
        let (q, duals, _) = solve_omd_unknown(&q_prev, &set, &loss, eta, &cfg)?;
        let best = omd_objective(&q, &q_prev, &loss, eta)?;
        worst_kkt_unknown = worst_kkt_unknown.max(kkt_residuals(&q, &duals, &set).max());
        for _ in 0..100 {
            let member = set.sample_member(&mut rng)?;
            let other = occupancy_from(&Policy::random(dims, &mut rng), &member, 0)?;
            beaten += usize::from(omd_objective(&other, &q_prev, &loss, eta)? < best - 1e-12);
        }
    }
    Ok((
        beaten == 0 && worst_kkt_known <= KKT_TOL && worst_kkt_unknown <= KKT_TOL,
        format!(
            "2x50 instances x 100 points: {beaten} better points; max KKT residual {worst_kkt_known:.1e} known, {worst_kkt_unknown:.1e} unknown"
        ),
    ))
}
