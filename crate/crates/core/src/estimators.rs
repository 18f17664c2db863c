//! Importance-weighted cost estimators with implicit exploration.

use serde::{Deserialize, Serialize};

use crate::adversary::FeedbackPacket;
use crate::error::{Error, Result};
use crate::mdp::{occupancy_from, Dims, Policy, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Standard,
    DelayAdapted,
}

/// `ĉ_h(s,a)` built from one feedback packet; nonzero only on its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCost {
    pub origin: usize,
    pub kind: EstimatorKind,
    pub values: Vec<f64>,
}

impl EstimatedCost {
    pub fn zero(dims: Dims, origin: usize, kind: EstimatorKind) -> Self {
        Self {
            origin,
            kind,
            values: vec![0.0; dims.sa_len()],
        }
    }

    /// Adds `self` into a running `(h, s, a)` total.
    pub fn accumulate_into(&self, total: &mut [f64]) {
        for (t, v) in total.iter_mut().zip(&self.values) {
            *t += v;
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("implicit exploration must be positive, got {gamma}")))
    }
}

fn estimate(
    dims: Dims,
    packet: &FeedbackPacket,
    kind: EstimatorKind,
    denominator: impl Fn(usize) -> f64,
) -> Result<EstimatedCost> {
    if packet.trajectory.horizon() != dims.horizon || packet.costs.len() != dims.horizon {
        return Err(Error::InvalidInput("packet horizon does not match the model".into()));
    }
    let mut out = EstimatedCost::zero(dims, packet.origin, kind);
    for ((h, s, a, _), &c) in packet.trajectory.steps().zip(&packet.costs) {
        let i = dims.sa(h, s, a);
        out.values[i] = c / denominator(i);
    }
    Ok(out)
}

/// `ĉ_h(s,a) = c_h(s,a) 1{s_h = s, a_h = a} / (u_h(s,a) + γ)`.
pub fn standard_estimator(dims: Dims, packet: &FeedbackPacket, u: &[f64], gamma: f64) -> Result<EstimatedCost> {
    check_gamma(gamma)?;
    if u.len() != dims.sa_len() {
        return Err(Error::InvalidInput("occupancy bound must be indexed (h, s, a)".into()));
    }
    estimate(dims, packet, EstimatorKind::Standard, |i| u[i] + gamma)
}

/// Same as [`standard_estimator`] with denominator `max(u_origin, u_arrival) + γ`.
pub fn delay_adapted_estimator(
    dims: Dims,
    packet: &FeedbackPacket,
    u_origin: &[f64],
    u_arrival: &[f64],
    gamma: f64,
) -> Result<EstimatedCost> {
    check_gamma(gamma)?;
    if u_origin.len() != dims.sa_len() || u_arrival.len() != dims.sa_len() {
        return Err(Error::InvalidInput("occupancy bound must be indexed (h, s, a)".into()));
    }
    estimate(dims, packet, EstimatorKind::DelayAdapted, |i| {
        u_origin[i].max(u_arrival[i]) + gamma
    })
}

/// `⟨q^{π, p̄}, ĉ⟩`.
pub fn estimated_policy_loss(
    policy: &Policy,
    empirical: &Transition,
    initial_state: usize,
    estimate: &EstimatedCost,
) -> Result<f64> {
    Ok(occupancy_from(policy, empirical, initial_state)?.dot(&estimate.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::EpisodeTrajectory;

    fn bandit_packet(arm: usize, cost: f64) -> FeedbackPacket {
        FeedbackPacket {
            origin: 1,
            costs: vec![cost],
            trajectory: EpisodeTrajectory {
                episode: 1,
                states: vec![0, 0],
                actions: vec![arm],
            },
        }
    }

    #[test]
    fn standard_arithmetic() {
        let d = Dims::new(1, 2, 1).unwrap();
        let e = standard_estimator(d, &bandit_packet(0, 1.0), &[0.5, 0.5], 0.1).unwrap();
        assert!((e.values[0] - 1.0 / 0.6).abs() < 1e-15);
        assert_eq!(e.values[1], 0.0);
    }

    #[test]
    fn delay_adapted_arithmetic() {
        let d = Dims::new(1, 2, 1).unwrap();
        let e = delay_adapted_estimator(d, &bandit_packet(1, 1.0), &[0.0, 0.25], &[0.0, 0.5], 0.05).unwrap();
        assert!((e.values[1] - 1.0 / 0.55).abs() < 1e-15);
    }

    #[test]
    fn equal_bounds_match_bitwise() {
        let d = Dims::new(1, 3, 1).unwrap();
        let u = [0.1, 0.37, 0.9];
        let a = standard_estimator(d, &bandit_packet(1, 0.7), &u, 0.03).unwrap();
        let b = delay_adapted_estimator(d, &bandit_packet(1, 0.7), &u, &u, 0.03).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn zero_gamma_rejected() {
        let d = Dims::new(1, 2, 1).unwrap();
        assert!(standard_estimator(d, &bandit_packet(0, 1.0), &[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn bandit_policy_loss() {
        let d = Dims::new(1, 2, 1).unwrap();
        let p = Transition::uniform(d);
        let pi = Policy::new(d, vec![0.25, 0.75]).unwrap();
        let e = standard_estimator(d, &bandit_packet(1, 1.0), &[0.5, 0.5], 0.5).unwrap();
        let loss = estimated_policy_loss(&pi, &p, 0, &e).unwrap();
        assert!((loss - 0.75).abs() < 1e-15);
    }
}
