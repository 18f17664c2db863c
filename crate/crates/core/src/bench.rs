//! Runs learners against the adversary and measures regret.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::adversary::{
    delay_overlap_count, play_episode, CostSequence, DelaySchedule, EpisodeTrajectory, FeedbackPacket, FeedbackQueue,
};
use crate::config::{ExperimentConfig, RunSetup, SweepConfig};
use crate::error::{Error, Result};
use crate::learners::{Algorithm, Learner, StepDiagnostics};
use crate::mdp::{occupancy_from, CostFunction, MdpSpec, Policy, Transition};
use crate::rng::{stream, StreamRng};

/// `π* = argmin_π ⟨q^{π,p}, Σ_k c^k⟩` by backward induction, and its value.
pub fn best_in_hindsight(costs: &CostSequence, mdp: &MdpSpec) -> Result<(Policy, f64)> {
    let dims = mdp.dims();
    let total = costs.total();
    if total.len() != dims.sa_len() {
        return Err(Error::InvalidInput("cost tables do not match the MDP".into()));
    }
    let p: &Transition = mdp.transition();
    let mut value = vec![0.0; dims.states];
    let mut choice = vec![0usize; dims.states * dims.horizon];
    for h in (0..dims.horizon).rev() {
        let mut next = vec![0.0; dims.states];
        for s in 0..dims.states {
            let mut best = (f64::INFINITY, 0);
            for a in 0..dims.actions {
                let future: f64 = p.row(h, s, a).iter().zip(&value).map(|(x, v)| x * v).sum();
                let q = total[dims.sa(h, s, a)] + future;
                if q < best.0 {
                    best = (q, a);
                }
            }
            next[s] = best.0;
            choice[h * dims.states + s] = best.1;
        }
        value = next;
    }
    Ok((Policy::deterministic(dims, &choice)?, value[mdp.initial_state()]))
}

/// One episode as seen by the environment.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub k: usize,
    pub policy: Policy,
    pub trajectory: EpisodeTrajectory,
    pub arrivals: Vec<FeedbackPacket>,
    pub expected_cost: f64,
    pub realized_cost: f64,
    pub diagnostics: StepDiagnostics,
}

/// The environment side of the protocol: MDP, oblivious costs and delays,
/// and the release queue.
pub struct Environment<'a> {
    mdp: &'a MdpSpec,
    costs: &'a CostSequence,
    delays: &'a DelaySchedule,
    queue: FeedbackQueue,
    episodes_rng: StreamRng,
    learner_rng: StreamRng,
    exact: bool,
    next: usize,
}

impl<'a> Environment<'a> {
    pub fn new(mdp: &'a MdpSpec, costs: &'a CostSequence, delays: &'a DelaySchedule, seed: u64, exact: bool) -> Result<Self> {
        if costs.len() != delays.len() {
            return Err(Error::InvalidInput("cost and delay sequences differ in length".into()));
        }
        Ok(Self {
            mdp,
            costs,
            delays,
            queue: FeedbackQueue::new(),
            episodes_rng: stream(seed, "episodes"),
            learner_rng: stream(seed, "learner"),
            exact,
            next: 1,
        })
    }

    pub fn from_setup(setup: &'a RunSetup, exact: bool) -> Result<Self> {
        Self::new(&setup.mdp, &setup.costs, &setup.delays, setup.seed, exact)
    }

    pub fn episodes(&self) -> usize {
        self.costs.len()
    }

    /// Index of the episode the next [`Environment::step`] plays.
    pub fn next_episode(&self) -> usize {
        self.next
    }

    pub fn is_done(&self) -> bool {
        self.next > self.costs.len()
    }

    /// Plays the next episode with `learner`.
    pub fn step(&mut self, learner: &mut dyn Learner) -> Result<EpisodeOutcome> {
        let k = self.next;
        if k > self.costs.len() {
            return Err(Error::Protocol("all episodes have been played".into()));
        }
        let cost: &CostFunction = self.costs.episode(k);
        let policy = learner.select_policy(k, &mut self.learner_rng)?;
        let expected_cost = if self.exact {
            learner.expected_cost(self.mdp, cost)?
        } else {
            occupancy_from(&policy, self.mdp.transition(), self.mdp.initial_state())?.dot(cost.as_slice())
        };
        let trajectory = play_episode(k, &policy, self.mdp, &mut self.episodes_rng);
        let packet = FeedbackPacket::observe(cost, &trajectory);
        let realized_cost = packet.costs.iter().sum();
        self.queue.enqueue(packet, self.delays.delay(k))?;
        let arrivals = self.queue.arrivals_at(k)?;
        let diagnostics = learner.observe(k, &trajectory, &arrivals)?;
        self.next += 1;
        Ok(EpisodeOutcome {
            k,
            policy,
            trajectory,
            arrivals,
            expected_cost,
            realized_cost,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub k: usize,
    pub d_k: usize,
    pub arrivals: usize,
    pub expected_cost: f64,
    pub realized_cost: f64,
    pub cum_expected: f64,
    pub cum_best: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: usize,
    pub eta: f64,
    pub gamma: f64,
    pub regret: f64,
    pub best_in_hindsight: f64,
    pub total_delay: usize,
    pub max_delay: usize,
    /// `d_max > √D`; allowed but outside the usual assumptions.
    pub max_delay_exceeds_sqrt_total: bool,
    pub delay_overlap: u64,
    pub solver_iterations: u64,
    pub max_solver_grad_norm: f64,
    pub max_estimate: f64,
    pub estimator_mismatches: usize,
    /// Largest `lhs − rhs` of the KL stability inequality, if tracked.
    pub max_kl_excess: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<EpisodeRow>,
    pub summary: RunSummary,
}

/// Runs `learner` over a prepared environment.
pub fn run_with(setup: &RunSetup, learner: &mut dyn Learner, run_id: &str, exact: bool) -> Result<RunRecord> {
    let start = Instant::now();
    let (best_policy, best_value) = best_in_hindsight(&setup.costs, &setup.mdp)?;
    let best_q = occupancy_from(&best_policy, setup.mdp.transition(), setup.mdp.initial_state())?;
    let mut env = Environment::from_setup(setup, exact)?;
    let mut rows = Vec::with_capacity(setup.costs.len());
    let mut summary = RunSummary {
        run_id: run_id.to_string(),
        algorithm: learner.algorithm(),
        seed: setup.seed,
        episodes: setup.costs.len(),
        eta: setup.tuning.eta,
        gamma: setup.tuning.gamma,
        regret: 0.0,
        best_in_hindsight: best_value,
        total_delay: setup.delays.total(),
        max_delay: setup.delays.max(),
        max_delay_exceeds_sqrt_total: setup.delays.exceeds_sqrt_total(),
        delay_overlap: delay_overlap_count(&setup.delays),
        solver_iterations: 0,
        max_solver_grad_norm: 0.0,
        max_estimate: 0.0,
        estimator_mismatches: 0,
        max_kl_excess: None,
        wall_time_secs: 0.0,
    };
    let (mut cum_expected, mut cum_best) = (0.0, 0.0);
    while !env.is_done() {
        let out = env.step(learner)?;
        cum_expected += out.expected_cost;
        cum_best += best_q.dot(setup.costs.episode(out.k).as_slice());
        let d = &out.diagnostics;
        summary.solver_iterations += d.solver_iterations.unwrap_or(0) as u64;
        summary.max_solver_grad_norm = summary.max_solver_grad_norm.max(d.solver_grad_norm.unwrap_or(0.0));
        summary.max_estimate = summary.max_estimate.max(d.estimate_max);
        summary.estimator_mismatches += d.estimator_mismatches;
        if let Some((lhs, rhs)) = d.kl_stability {
            let excess = summary.max_kl_excess.unwrap_or(f64::NEG_INFINITY).max(lhs - rhs);
            summary.max_kl_excess = Some(excess);
        }
        rows.push(EpisodeRow {
            k: out.k,
            d_k: setup.delays.delay(out.k),
            arrivals: out.arrivals.len(),
            expected_cost: out.expected_cost,
            realized_cost: out.realized_cost,
            cum_expected,
            cum_best,
            regret: cum_expected - cum_best,
        });
    }
    if learner.audit().consumed_count() != setup.delays.as_slice().iter().enumerate().filter(|(i, d)| i + 1 + *d <= setup.costs.len()).count() {
        return Err(Error::Protocol("learner did not consume every released packet".into()));
    }
    summary.regret = rows.last().map_or(0.0, |r| r.regret);
    summary.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(RunRecord { rows, summary })
}

/// Runs the configured learner for one seed.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let setup = config.setup(seed)?;
    let mut learner = config.learner.build(&setup.mdp, setup.tuning)?;
    run_with(&setup, learner.as_mut(), &format!("{}-s{seed}", config.name), config.exact_expected_cost)
}

/// All seeds of `config`, in seed order; runs execute in parallel.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    use rayon::prelude::*;
    config.seeds.par_iter().map(|&seed| run_experiment(config, seed)).collect()
}

/// Every point of a sweep with its records, in grid order.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<(ExperimentConfig, Vec<RunRecord>)>> {
    use rayon::prelude::*;
    sweep
        .expand()?
        .into_par_iter()
        .map(|cfg| {
            let records = run_all(&cfg)?;
            Ok((cfg, records))
        })
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    run_id: &'a str,
    algorithm: &'a str,
    k: usize,
    d_k: usize,
    arrivals: usize,
    expected_cost: f64,
    realized_cost: f64,
    cum_expected: f64,
    cum_best: f64,
    regret: f64,
}

pub fn write_csv<W: std::io::Write>(record: &RunRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &record.rows {
        w.serialize(CsvRow {
            run_id: &record.summary.run_id,
            algorithm: record.summary.algorithm.name(),
            k: r.k,
            d_k: r.d_k,
            arrivals: r.arrivals,
            expected_cost: r.expected_cost,
            realized_cost: r.realized_cost,
            cum_expected: r.cum_expected,
            cum_best: r.cum_best,
            regret: r.regret,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Regret statistics across seeds at every episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub episodes: usize,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub final_mean: f64,
    pub final_median: f64,
    pub final_iqr: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    let episodes = records
        .first()
        .map(|r| r.rows.len())
        .ok_or_else(|| Error::InvalidInput("nothing to aggregate".into()))?;
    if records.iter().any(|r| r.rows.len() != episodes) || episodes == 0 {
        return Err(Error::InvalidInput("records differ in length".into()));
    }
    let mut out = Aggregate {
        runs: records.len(),
        episodes,
        mean: Vec::with_capacity(episodes),
        median: Vec::with_capacity(episodes),
        q1: Vec::with_capacity(episodes),
        q3: Vec::with_capacity(episodes),
        final_mean: 0.0,
        final_median: 0.0,
        final_iqr: 0.0,
    };
    let mut column = Vec::with_capacity(records.len());
    for i in 0..episodes {
        column.clear();
        column.extend(records.iter().map(|r| r.rows[i].regret));
        column.sort_by(f64::total_cmp);
        out.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        out.median.push(quantile(&column, 0.5));
        out.q1.push(quantile(&column, 0.25));
        out.q3.push(quantile(&column, 0.75));
    }
    out.final_mean = out.mean[episodes - 1];
    out.final_median = out.median[episodes - 1];
    out.final_iqr = out.q3[episodes - 1] - out.q1[episodes - 1];
    Ok(out)
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    name: &'a str,
    config: &'a ExperimentConfig,
    runs: Vec<&'a RunSummary>,
    regret: Aggregate,
}

/// Writes `<run_id>.csv` per run and `<name>.summary.json` into `dir`.
pub fn write_outputs(config: &ExperimentConfig, records: &[RunRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in records {
        let file = std::fs::File::create(dir.join(format!("{}.csv", r.summary.run_id)))?;
        write_csv(r, std::io::BufWriter::new(file))?;
    }
    let summary = ExperimentSummary {
        name: &config.name,
        config,
        runs: records.iter().map(|r| &r.summary).collect(),
        regret: aggregate(records)?,
    };
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(dir.join(format!("{}.summary.json", config.name)), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Dims;

    #[test]
    fn bandit_hindsight() {
        let d = Dims::new(1, 2, 1).unwrap();
        let mdp = MdpSpec::new(Transition::uniform(d), 0).unwrap();
        let costs = CostSequence::new(vec![
            CostFunction::new(d, vec![0.9, 0.1]).unwrap(),
            CostFunction::new(d, vec![0.9, 0.2]).unwrap(),
        ]);
        let (pi, v) = best_in_hindsight(&costs, &mdp).unwrap();
        assert_eq!(pi.row(0, 0), &[0.0, 1.0]);
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }
}
