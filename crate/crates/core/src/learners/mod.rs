//! Episode-by-episode learners.
//!
//! The driving loop for episode `k` is: [`Learner::select_policy`], play the
//! episode, release the packets `F^k`, then [`Learner::observe`] with the
//! episode's own trajectory and `F^k`. Learners never see the cost table or
//! the true transition unless the algorithm assumes it is known.

mod ftrl;
mod hedge;
mod oreps;
mod reps;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::adversary::{EpisodeTrajectory, FeedbackPacket};
use crate::error::{Error, Result};
use crate::mdp::{CostFunction, MdpSpec, Policy};
use crate::rng::StreamRng;

pub use ftrl::UobFtrl;
pub use hedge::{exploration_bonus, DelayedHedge};
pub use oreps::DelayedOreps;
pub use reps::UobReps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "hedge")]
    Hedge,
    #[serde(rename = "uob-ftrl")]
    UobFtrl,
    #[serde(rename = "uob-reps")]
    UobReps,
    #[serde(rename = "oreps-known")]
    OrepsKnown,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Hedge, Self::UobFtrl, Self::UobReps, Self::OrepsKnown];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hedge => "hedge",
            Self::UobFtrl => "uob-ftrl",
            Self::UobReps => "uob-reps",
            Self::OrepsKnown => "oreps-known",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Step sizes shared by all learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuning {
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Number of episodes `K`; enters the confidence radius.
    pub episodes: usize,
}

impl Tuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episode count must be positive".into()));
        }
        Ok(())
    }
}

/// Per-episode diagnostics; fields that do not apply to a learner stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub arrivals: usize,
    pub solver_iterations: Option<usize>,
    pub solver_grad_norm: Option<f64>,
    /// Largest entry among this step's estimates.
    pub estimate_max: f64,
    pub bonus_max: Option<f64>,
    /// Sides of the KL stability inequality (known transition only).
    pub kl_stability: Option<(f64, f64)>,
    /// Arrivals whose delay-adapted and standard estimates differ in any bit.
    pub estimator_mismatches: usize,
}

pub trait Learner: Send {
    fn algorithm(&self) -> Algorithm;

    /// Commits to `π^k`; called once per episode, `k = 1, 2, ...`.
    fn select_policy(&mut self, k: usize, rng: &mut StreamRng) -> Result<Policy>;

    /// Expected cost of the distribution committed for the current episode.
    fn expected_cost(&self, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64>;

    fn observe(
        &mut self,
        k: usize,
        trajectory: &EpisodeTrajectory,
        arrivals: &[FeedbackPacket],
    ) -> Result<StepDiagnostics>;

    fn audit(&self) -> &ProtocolAudit;
}

/// Tracks which packets a learner consumed and rejects anything the
/// protocol would not have delivered yet.
#[derive(Debug, Clone, Default)]
pub struct ProtocolAudit {
    consumed: BTreeSet<usize>,
    selected: usize,
    observed: usize,
}

impl ProtocolAudit {
    pub fn select(&mut self, k: usize) -> Result<()> {
        if k != self.observed + 1 || self.selected != self.observed {
            return Err(Error::Protocol(format!(
                "policy for episode {k} requested after observing {} episodes",
                self.observed
            )));
        }
        self.selected = k;
        Ok(())
    }

    pub fn observe(&mut self, k: usize, trajectory: &EpisodeTrajectory, arrivals: &[FeedbackPacket]) -> Result<()> {
        if k != self.selected || k != self.observed + 1 {
            return Err(Error::Protocol(format!("episode {k} observed out of order")));
        }
        if trajectory.episode != k {
            return Err(Error::Protocol(format!(
                "trajectory of episode {} passed at episode {k}",
                trajectory.episode
            )));
        }
        for packet in arrivals {
            if packet.origin == 0 || packet.origin > k {
                return Err(Error::Protocol(format!(
                    "packet of episode {} delivered at episode {k}",
                    packet.origin
                )));
            }
            if !self.consumed.insert(packet.origin) {
                return Err(Error::Protocol(format!("packet of episode {} delivered twice", packet.origin)));
            }
        }
        self.observed = k;
        Ok(())
    }

    /// Origins consumed so far, in increasing order.
    pub fn consumed(&self) -> impl Iterator<Item = usize> + '_ {
        self.consumed.iter().copied()
    }

    pub fn consumed_count(&self) -> usize {
        self.consumed.len()
    }
}

/// Per-episode tables kept until the episode's feedback arrives.
#[derive(Debug, Clone)]
pub(crate) struct Outstanding<T> {
    slots: std::collections::BTreeMap<usize, T>,
}

impl<T> Default for Outstanding<T> {
    fn default() -> Self {
        Self {
            slots: Default::default(),
        }
    }
}

impl<T> Outstanding<T> {
    pub fn store(&mut self, k: usize, value: T) {
        self.slots.insert(k, value);
    }

    pub fn take(&mut self, j: usize) -> Result<T> {
        self.slots
            .remove(&j)
            .ok_or_else(|| Error::Protocol(format!("no stored bound for episode {j}")))
    }
}

/// `⟨q^{π,p}, c⟩` for a single committed policy.
pub(crate) fn policy_cost(policy: &Policy, mdp: &MdpSpec, cost: &CostFunction) -> Result<f64> {
    Ok(crate::mdp::occupancy_from(policy, mdp.transition(), mdp.initial_state())?.dot(cost.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(k: usize) -> EpisodeTrajectory {
        EpisodeTrajectory {
            episode: k,
            states: vec![0, 0],
            actions: vec![0],
        }
    }

    fn packet(j: usize) -> FeedbackPacket {
        FeedbackPacket {
            origin: j,
            costs: vec![0.0],
            trajectory: traj(j),
        }
    }

    #[test]
    fn audit_accepts_protocol_order() {
        let mut a = ProtocolAudit::default();
        a.select(1).unwrap();
        a.observe(1, &traj(1), &[]).unwrap();
        a.select(2).unwrap();
        a.observe(2, &traj(2), &[packet(2), packet(1)]).unwrap();
        assert_eq!(a.consumed().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn audit_rejects_future_and_duplicate_packets() {
        let mut a = ProtocolAudit::default();
        a.select(1).unwrap();
        assert!(a.clone().observe(1, &traj(1), &[packet(2)]).is_err());
        a.observe(1, &traj(1), &[packet(1)]).unwrap();
        a.select(2).unwrap();
        assert!(a.observe(2, &traj(2), &[packet(1)]).is_err());
    }

    #[test]
    fn audit_rejects_skipped_selection() {
        let mut a = ProtocolAudit::default();
        assert!(a.select(2).is_err());
        a.select(1).unwrap();
        assert!(a.select(1).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("exp3".parse::<Algorithm>().is_err());
    }
}
