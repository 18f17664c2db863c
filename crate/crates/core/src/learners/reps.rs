//! Delayed UOB-REPS: mirror descent over the confidence polytope with the
//! delay-adapted estimator.

use crate::adversary::{EpisodeTrajectory, FeedbackPacket};
use crate::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use crate::error::Result;
use crate::estimators::{delay_adapted_estimator, standard_estimator, EstimatorKind};
use crate::mdp::{policy_from_occupancy, CostFunction, Dims, MdpSpec, OccupancyMeasure, Policy};
use crate::occupancy_opt::{comp_uob, solve_omd_unknown, uniform_reference, SolverConfig};
use crate::rng::StreamRng;

use super::{policy_cost, Algorithm, Learner, Outstanding, ProtocolAudit, StepDiagnostics, Tuning};

pub struct UobReps {
    dims: Dims,
    initial_state: usize,
    tuning: Tuning,
    solver: SolverConfig,
    estimator: EstimatorKind,
    feedback: CounterKind,
    counters: VisitCounters,
    set: ConfidenceSet,
    q: OccupancyMeasure,
    policy: Policy,
    /// `u^k` of the current episode.
    current: Vec<f64>,
    stored: Outstanding<Vec<f64>>,
    audit: ProtocolAudit,
}

impl UobReps {
    /// `feedback` picks which trajectories feed the counters: the episode's
    /// own (`Immediate`) or those of arriving packets (`Delayed`).
    pub fn new(
        dims: Dims,
        initial_state: usize,
        tuning: Tuning,
        solver: SolverConfig,
        estimator: EstimatorKind,
        feedback: CounterKind,
    ) -> Result<Self> {
        tuning.validate()?;
        solver.validate()?;
        let q = uniform_reference(dims, initial_state);
        Ok(Self {
            dims,
            initial_state,
            tuning,
            solver,
            estimator,
            feedback,
            counters: VisitCounters::new(dims),
            set: ConfidenceSet::trivial(dims),
            policy: policy_from_occupancy(&q),
            q,
            current: Vec::new(),
            stored: Outstanding::default(),
            audit: ProtocolAudit::default(),
        })
    }

    pub fn occupancy(&self) -> &OccupancyMeasure {
        &self.q
    }

    /// The set the current occupancy was projected onto.
    pub fn confidence_set(&self) -> &ConfidenceSet {
        &self.set
    }

    pub fn counters(&self) -> &VisitCounters {
        &self.counters
    }
}

impl Learner for UobReps {
    fn algorithm(&self) -> Algorithm {
        Algorithm::UobReps
    }

    fn select_policy(&mut self, k: usize, _rng: &mut StreamRng) -> Result<Policy> {
        self.audit.select(k)?;
        self.current = comp_uob(&self.policy, &self.set, self.initial_state)?;
        self.stored.store(k, self.current.clone());
        Ok(self.policy.clone())
    }

    fn expected_cost(&self, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64> {
        policy_cost(&self.policy, mdp, cost)
    }

    fn observe(&mut self, k: usize, trajectory: &EpisodeTrajectory, arrivals: &[FeedbackPacket]) -> Result<StepDiagnostics> {
        self.audit.observe(k, trajectory, arrivals)?;
        let dims = self.dims;
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
        let gamma = self.tuning.gamma;
        let mut batch = vec![0.0; dims.sa_len()];
        for packet in arrivals {
            let origin = self.stored.take(packet.origin)?;
            let adapted = delay_adapted_estimator(dims, packet, &origin, &self.current, gamma)?;
            let standard = standard_estimator(dims, packet, &origin, gamma)?;
            let differs = adapted
                .values
                .iter()
                .zip(&standard.values)
                .any(|(a, b)| a.to_bits() != b.to_bits());
            diag.estimator_mismatches += usize::from(differs);
            let est = match self.estimator {
                EstimatorKind::DelayAdapted => adapted,
                EstimatorKind::Standard => standard,
            };
            diag.estimate_max = diag.estimate_max.max(est.max_entry());
            est.accumulate_into(&mut batch);
        }
        let next_set = ConfidenceSet::build(&self.counters, self.feedback, self.tuning.delta, self.tuning.episodes, k + 1)?;
        // With no arrivals this is the KL projection of q^k onto the new polytope.
        let (next, _, solve) = solve_omd_unknown(&self.q, &next_set, &batch, self.tuning.eta, &self.solver)?;
        diag.solver_iterations = Some(solve.iterations);
        diag.solver_grad_norm = Some(solve.grad_norm);
        self.policy = policy_from_occupancy(&next);
        self.q = next;
        self.set = next_set;
        Ok(diag)
    }

    fn audit(&self) -> &ProtocolAudit {
        &self.audit
    }
}
