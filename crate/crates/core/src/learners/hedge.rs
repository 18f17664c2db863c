//! Delayed Hedge over all deterministic policies with an optimistic bonus.

use rand::Rng;

use crate::adversary::{EpisodeTrajectory, FeedbackPacket};
use crate::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use crate::error::{Error, Result};
use crate::estimators::standard_estimator;
use crate::mdp::{state_action_occupancy, CostFunction, Dims, MdpSpec, Policy, Transition};
use crate::occupancy_opt::{comp_uob, mixture_uob};
use crate::rng::StreamRng;

use super::{policy_cost, Algorithm, Learner, Outstanding, ProtocolAudit, StepDiagnostics, Tuning};

/// Upper bound on `max_{p' ∈ P} ‖q^{π,p̄} − q^{π,p'}‖₁` over `(h, s, a)`, capped at `2H`.
///
/// A row error at layer `m` leaks into the `H − 1 − m` later layers, each by
/// at most `q^{π,p̄}_m(s,a) · ‖p̄_m(·|s,a) − p'_m(·|s,a)‖₁`.
pub fn exploration_bonus(policy: &Policy, empirical: &Transition, set: &ConfidenceSet, initial_state: usize) -> Result<f64> {
    let dims = policy.dims();
    if dims != set.dims() || dims != empirical.dims() {
        return Err(Error::InvalidInput("policy, transition and set dimensions differ".into()));
    }
    let q = state_action_occupancy(policy, empirical, initial_state)?;
    let horizon = dims.horizon;
    let mut total = 0.0;
    for (h, s, a) in dims.state_actions() {
        if h + 1 >= horizon {
            continue;
        }
        let mass = q[dims.sa(h, s, a)];
        if mass == 0.0 {
            continue;
        }
        let spread: f64 = set.effective_radius(h, s, a).iter().sum();
        total += (horizon - 1 - h) as f64 * mass * spread;
    }
    Ok(total.min(2.0 * horizon as f64))
}

fn enumerate_policies(dims: Dims, cap: usize) -> Result<Vec<Policy>> {
    let slots = dims.states * dims.horizon;
    let count = u32::try_from(slots)
        .ok()
        .and_then(|e| dims.actions.checked_pow(e))
        .filter(|&c| c <= cap)
        .ok_or_else(|| {
            Error::Structural(format!(
                "{}^{slots} deterministic policies exceed the enumeration cap {cap}",
                dims.actions
            ))
        })?;
    let mut choice = vec![0usize; slots];
    (0..count)
        .map(|mut index| {
            for c in choice.iter_mut() {
                *c = index % dims.actions;
                index /= dims.actions;
            }
            Policy::deterministic(dims, &choice)
        })
        .collect()
}

struct Snapshot {
    bound: Vec<f64>,
    empirical: Transition,
}

pub struct DelayedHedge {
    dims: Dims,
    initial_state: usize,
    tuning: Tuning,
    feedback: CounterKind,
    policies: Vec<Policy>,
    log_weights: Vec<f64>,
    counters: VisitCounters,
    set: ConfidenceSet,
    chosen: usize,
    stored: Outstanding<Snapshot>,
    audit: ProtocolAudit,
}

impl DelayedHedge {
    pub fn new(dims: Dims, initial_state: usize, tuning: Tuning, feedback: CounterKind, cap: usize) -> Result<Self> {
        tuning.validate()?;
        let policies = enumerate_policies(dims, cap)?;
        let uniform = -(policies.len() as f64).ln();
        Ok(Self {
            dims,
            initial_state,
            tuning,
            feedback,
            log_weights: vec![uniform; policies.len()],
            policies,
            counters: VisitCounters::new(dims),
            set: ConfidenceSet::trivial(dims),
            chosen: 0,
            stored: Outstanding::default(),
            audit: ProtocolAudit::default(),
        })
    }

    /// Deterministic policies in enumeration order.
    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `P^k` of the current episode; its center is `p̄^k`.
    pub fn confidence_set(&self) -> &ConfidenceSet {
        &self.set
    }

    pub fn bonus(&self, policy: &Policy) -> Result<f64> {
        exploration_bonus(policy, self.set.center(), &self.set, self.initial_state)
    }

    fn normalize(&mut self) {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + self.log_weights.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
        self.log_weights.iter_mut().for_each(|w| *w -= log_z);
    }
}

impl Learner for DelayedHedge {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Hedge
    }

    fn select_policy(&mut self, k: usize, rng: &mut StreamRng) -> Result<Policy> {
        self.audit.select(k)?;
        let weights = self.weights();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        self.chosen = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                self.chosen = i;
                break;
            }
        }
        let per_policy = self
            .policies
            .iter()
            .zip(&weights)
            .map(|(pi, &w)| {
                if w == 0.0 {
                    Ok(vec![0.0; self.dims.sa_len()])
                } else {
                    comp_uob(pi, &self.set, self.initial_state)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let snapshot = Snapshot {
            bound: mixture_uob(&weights, &per_policy)?,
            empirical: self.set.center().clone(),
        };
        self.stored.store(k, snapshot);
        Ok(self.policies[self.chosen].clone())
    }

    /// `Σ_π ω^k(π) ⟨q^{π,p}, c⟩`.
    fn expected_cost(&self, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64> {
        let mut total = 0.0;
        for (pi, w) in self.policies.iter().zip(&self.log_weights) {
            let w = w.exp();
            if w > 0.0 {
                total += w * policy_cost(pi, mdp, cost)?;
            }
        }
        Ok(total)
    }

    fn observe(&mut self, k: usize, trajectory: &EpisodeTrajectory, arrivals: &[FeedbackPacket]) -> Result<StepDiagnostics> {
        self.audit.observe(k, trajectory, arrivals)?;
        let mut diag = StepDiagnostics {
            arrivals: arrivals.len(),
            ..Default::default()
        };
        let eta = self.tuning.eta;
        let mut bonus_max: f64 = 0.0;
        for (i, pi) in self.policies.iter().enumerate() {
            let b = exploration_bonus(pi, self.set.center(), &self.set, self.initial_state)?;
            bonus_max = bonus_max.max(b);
            self.log_weights[i] += eta * b;
        }
        diag.bonus_max = Some(bonus_max);
        for packet in arrivals {
            let snap = self.stored.take(packet.origin)?;
            let est = standard_estimator(self.dims, packet, &snap.bound, self.tuning.gamma)?;
            diag.estimate_max = diag.estimate_max.max(est.max_entry());
            for (i, pi) in self.policies.iter().enumerate() {
                let q = state_action_occupancy(pi, &snap.empirical, self.initial_state)?;
                let loss: f64 = q.iter().zip(&est.values).map(|(a, b)| a * b).sum();
                self.log_weights[i] -= eta * loss;
            }
        }
        self.normalize();
        match self.feedback {
            CounterKind::Immediate => self.counters.update(trajectory, CounterKind::Immediate),
            CounterKind::Delayed => {
                for packet in arrivals {
                    self.counters.update(&packet.trajectory, CounterKind::Delayed);
                }
            }
        }
        self.set = ConfidenceSet::build(&self.counters, self.feedback, self.tuning.delta, self.tuning.episodes, k + 1)?;
        Ok(diag)
    }

    fn audit(&self) -> &ProtocolAudit {
        &self.audit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn tuning(eta: f64) -> Tuning {
        Tuning {
            eta,
            gamma: 0.1,
            delta: 0.1,
            episodes: 10,
        }
    }

    #[test]
    fn enumeration_is_total_and_capped() {
        let d = Dims::new(2, 2, 2).unwrap();
        let all = enumerate_policies(d, 4096).unwrap();
        assert_eq!(all.len(), 16);
        let distinct: std::collections::HashSet<Vec<u64>> =
            all.iter().map(|p| p.as_slice().iter().map(|x| x.to_bits()).collect()).collect();
        assert_eq!(distinct.len(), 16);
        assert!(enumerate_policies(d, 15).is_err());
    }

    #[test]
    fn two_arm_update_arithmetic() {
        // one arm observed with estimate 1 on the other arm's zero
        let d = Dims::new(1, 2, 1).unwrap();
        let mut h = DelayedHedge::new(d, 0, tuning(0.5), CounterKind::Immediate, 16).unwrap();
        h.log_weights[0] -= 0.5;
        h.normalize();
        let w = h.weights();
        assert!((w[0] - 0.3775406687981454).abs() < 1e-12);
        assert!((w[1] - 0.6224593312018546).abs() < 1e-12);
    }

    #[test]
    fn no_arrivals_keep_weights_when_bonus_vanishes() {
        let d = Dims::new(1, 3, 1).unwrap();
        let mut h = DelayedHedge::new(d, 0, tuning(0.5), CounterKind::Immediate, 16).unwrap();
        let mut rng = stream(1, "test");
        h.select_policy(1, &mut rng).unwrap();
        let before = h.weights();
        let traj = EpisodeTrajectory {
            episode: 1,
            states: vec![0, 0],
            actions: vec![h.chosen],
        };
        let diag = h.observe(1, &traj, &[]).unwrap();
        assert_eq!(diag.bonus_max, Some(0.0));
        for (a, b) in before.iter().zip(h.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bonus_is_zero_on_singleton_and_capped() {
        let d = Dims::new(2, 2, 3).unwrap();
        let mut rng = stream(2, "test");
        let p = Transition::random(d, 1.0, &mut rng);
        let pi = Policy::random(d, &mut rng);
        assert_eq!(exploration_bonus(&pi, &p, &ConfidenceSet::singleton(&p), 0).unwrap(), 0.0);
        let trivial = ConfidenceSet::trivial(d);
        assert!(exploration_bonus(&pi, trivial.center(), &trivial, 0).unwrap() <= 6.0);
    }
}
