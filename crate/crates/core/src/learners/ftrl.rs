//! Delayed UOB-FTRL over cumulatively intersected confidence polytopes.

use crate::adversary::{EpisodeTrajectory, FeedbackPacket};
use crate::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use crate::error::Result;
use crate::estimators::standard_estimator;
use crate::mdp::{policy_from_occupancy, CostFunction, Dims, MdpSpec, OccupancyMeasure, Policy};
use crate::occupancy_opt::{comp_uob, solve_ftrl, uniform_reference, SolverConfig};
use crate::rng::StreamRng;

use super::{policy_cost, Algorithm, Learner, Outstanding, ProtocolAudit, StepDiagnostics, Tuning};

pub struct UobFtrl {
    dims: Dims,
    initial_state: usize,
    tuning: Tuning,
    solver: SolverConfig,
    feedback: CounterKind,
    counters: VisitCounters,
    /// `P^k`, the set of the current episode's bound.
    set: ConfidenceSet,
    /// `∩_{j ≤ k} P^j`.
    decision_set: ConfidenceSet,
    cumulative_loss: Vec<f64>,
    q: OccupancyMeasure,
    policy: Policy,
    stored: Outstanding<Vec<f64>>,
    audit: ProtocolAudit,
}

impl UobFtrl {
    pub fn new(dims: Dims, initial_state: usize, tuning: Tuning, solver: SolverConfig, feedback: CounterKind) -> Result<Self> {
        tuning.validate()?;
        solver.validate()?;
        let q = uniform_reference(dims, initial_state);
        Ok(Self {
            dims,
            initial_state,
            tuning,
            solver,
            feedback,
            counters: VisitCounters::new(dims),
            set: ConfidenceSet::trivial(dims),
            decision_set: ConfidenceSet::trivial(dims),
            cumulative_loss: vec![0.0; dims.sa_len()],
            policy: policy_from_occupancy(&q),
            q,
            stored: Outstanding::default(),
            audit: ProtocolAudit::default(),
        })
    }

    pub fn occupancy(&self) -> &OccupancyMeasure {
        &self.q
    }

    pub fn decision_set(&self) -> &ConfidenceSet {
        &self.decision_set
    }

    pub fn cumulative_loss(&self) -> &[f64] {
        &self.cumulative_loss
    }

    pub fn eta(&self) -> f64 {
        self.tuning.eta
    }
}

impl Learner for UobFtrl {
    fn algorithm(&self) -> Algorithm {
        Algorithm::UobFtrl
    }

    fn select_policy(&mut self, k: usize, _rng: &mut StreamRng) -> Result<Policy> {
        self.audit.select(k)?;
        self.stored.store(k, comp_uob(&self.policy, &self.set, self.initial_state)?);
        Ok(self.policy.clone())
    }

    fn expected_cost(&self, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64> {
        policy_cost(&self.policy, mdp, cost)
    }

    fn observe(&mut self, k: usize, trajectory: &EpisodeTrajectory, arrivals: &[FeedbackPacket]) -> Result<StepDiagnostics> {
        self.audit.observe(k, trajectory, arrivals)?;
        let mut diag = StepDiagnostics {
            arrivals: arrivals.len(),
            ..Default::default()
        };
        match self.feedback {
            CounterKind::Immediate => self.counters.update(trajectory, CounterKind::Immediate),
            CounterKind::Delayed => {
                for packet in arrivals {
                    self.counters.update(&packet.trajectory, CounterKind::Delayed);
                }
            }
        }
        for packet in arrivals {
            let u = self.stored.take(packet.origin)?;
            let est = standard_estimator(self.dims, packet, &u, self.tuning.gamma)?;
            diag.estimate_max = diag.estimate_max.max(est.max_entry());
            est.accumulate_into(&mut self.cumulative_loss);
        }
        self.set = ConfidenceSet::build(&self.counters, self.feedback, self.tuning.delta, self.tuning.episodes, k + 1)?;
        self.decision_set = self.decision_set.intersect(&self.set)?;
        let (next, _, solve) = solve_ftrl(
            &self.cumulative_loss,
            &self.decision_set,
            self.tuning.eta,
            self.initial_state,
            &self.solver,
        )?;
        diag.solver_iterations = Some(solve.iterations);
        diag.solver_grad_norm = Some(solve.grad_norm);
        self.policy = policy_from_occupancy(&next);
        self.q = next;
        Ok(diag)
    }

    fn audit(&self) -> &ProtocolAudit {
        &self.audit
    }
}
