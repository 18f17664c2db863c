//! Delayed O-REPS with known transitions and the delay-adapted estimator.

use crate::adversary::{EpisodeTrajectory, FeedbackPacket};
use crate::error::Result;
use crate::estimators::{delay_adapted_estimator, standard_estimator, EstimatorKind};
use crate::mdp::{occupancy_from, policy_from_occupancy, CostFunction, MdpSpec, OccupancyMeasure, Policy};
use crate::occupancy_opt::{kl_stability_check, solve_oreps_known, SolverConfig};
use crate::rng::StreamRng;

use super::{policy_cost, Algorithm, Learner, Outstanding, ProtocolAudit, StepDiagnostics, Tuning};

pub struct DelayedOreps {
    mdp: MdpSpec,
    tuning: Tuning,
    solver: SolverConfig,
    estimator: EstimatorKind,
    q: OccupancyMeasure,
    /// `q^k_h(s,a)` of the current episode.
    current: Vec<f64>,
    policy: Policy,
    stored: Outstanding<Vec<f64>>,
    audit: ProtocolAudit,
}

impl DelayedOreps {
    /// Starts from the occupancy of the uniform policy under the known transition.
    pub fn new(mdp: MdpSpec, tuning: Tuning, solver: SolverConfig, estimator: EstimatorKind) -> Result<Self> {
        tuning.validate()?;
        solver.validate()?;
        let policy = Policy::uniform(mdp.dims());
        let q = occupancy_from(&policy, mdp.transition(), mdp.initial_state())?;
        Ok(Self {
            current: q.state_action_table(),
            q,
            policy,
            mdp,
            tuning,
            solver,
            estimator,
            stored: Outstanding::default(),
            audit: ProtocolAudit::default(),
        })
    }

    pub fn occupancy(&self) -> &OccupancyMeasure {
        &self.q
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }
}

impl Learner for DelayedOreps {
    fn algorithm(&self) -> Algorithm {
        Algorithm::OrepsKnown
    }

    fn select_policy(&mut self, k: usize, _rng: &mut StreamRng) -> Result<Policy> {
        self.audit.select(k)?;
        self.stored.store(k, self.current.clone());
        Ok(self.policy.clone())
    }

    fn expected_cost(&self, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64> {
        policy_cost(&self.policy, mdp, cost)
    }

    fn observe(&mut self, k: usize, trajectory: &EpisodeTrajectory, arrivals: &[FeedbackPacket]) -> Result<StepDiagnostics> {
        self.audit.observe(k, trajectory, arrivals)?;
        let dims = self.mdp.dims();
        let mut diag = StepDiagnostics {
            arrivals: arrivals.len(),
            ..Default::default()
        };
        let mut batch = vec![0.0; dims.sa_len()];
        for packet in arrivals {
            let origin = self.stored.take(packet.origin)?;
            let est = match self.estimator {
                EstimatorKind::DelayAdapted => {
                    delay_adapted_estimator(dims, packet, &origin, &self.current, self.tuning.gamma)?
                }
                EstimatorKind::Standard => standard_estimator(dims, packet, &origin, self.tuning.gamma)?,
            };
            diag.estimate_max = diag.estimate_max.max(est.max_entry());
            est.accumulate_into(&mut batch);
        }
        if arrivals.is_empty() {
            return Ok(diag);
        }
        let (next, _, solve) = solve_oreps_known(&self.q, self.mdp.transition(), &batch, self.tuning.eta, &self.solver)?;
        diag.solver_iterations = Some(solve.iterations);
        diag.solver_grad_norm = Some(solve.grad_norm);
        diag.kl_stability = Some(kl_stability_check(&self.q, &next, &batch, self.tuning.eta)?);
        self.policy = policy_from_occupancy(&next);
        self.current = next.state_action_table();
        self.q = next;
        Ok(diag)
    }

    fn audit(&self) -> &ProtocolAudit {
        &self.audit
    }
}
