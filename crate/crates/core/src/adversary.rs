//! Oblivious adversary: cost sequences, delay schedules, episode simulation
//! and the delayed release of bandit feedback.
//!
//! Episodes are numbered from 1. The packet of episode `j` is released at the
//! end of episode `j + d^j`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostFunction, Dims, MdpSpec, Policy};
use crate::rng::stream;

/// Delay `d^k` of every episode, fixed before the interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    delays: Vec<usize>,
}

impl DelaySchedule {
    pub fn new(delays: Vec<usize>) -> Self {
        Self { delays }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Delay of episode `k` (1-based).
    pub fn delay(&self, k: usize) -> usize {
        self.delays[k - 1]
    }

    /// `D = Σ_k d^k`.
    pub fn total(&self) -> usize {
        self.delays.iter().sum()
    }

    /// `d_max = max_k d^k`.
    pub fn max(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    /// The schedule breaks the `d_max ≤ √D` assumption of the regret bounds.
    pub fn exceeds_sqrt_total(&self) -> bool {
        (self.max() as f64) > (self.total() as f64).sqrt()
    }
}

/// Delay process declared in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    Constant { value: i64 },
    /// Uniform integers in `[0, max]`.
    UniformRandom { max: i64 },
    /// `height` on every `period`-th episode, `base` otherwise.
    Spike { base: i64, height: i64, period: i64 },
    Explicit { delays: Vec<i64> },
}

fn non_negative(x: i64, what: &str) -> Result<usize> {
    usize::try_from(x).map_err(|_| Error::InvalidInput(format!("{what} must be non-negative, got {x}")))
}

/// Builds a delay schedule of length `episodes`; deterministic in `(kind, seed)`.
pub fn generate_delays(kind: &DelayKind, episodes: usize, seed: u64) -> Result<DelaySchedule> {
    let delays = match kind {
        DelayKind::Constant { value } => vec![non_negative(*value, "constant delay")?; episodes],
        DelayKind::UniformRandom { max } => {
            let max = non_negative(*max, "maximum delay")?;
            let mut rng = stream(seed, "delays");
            (0..episodes).map(|_| rng.random_range(0..=max)).collect()
        }
        DelayKind::Spike { base, height, period } => {
            let base = non_negative(*base, "base delay")?;
            let height = non_negative(*height, "spike height")?;
            let period = non_negative(*period, "spike period")?;
            if period == 0 {
                return Err(Error::InvalidInput("spike period must be positive".into()));
            }
            (1..=episodes).map(|k| if k % period == 0 { height } else { base }).collect()
        }
        DelayKind::Explicit { delays } => {
            if delays.len() != episodes {
                return Err(Error::InvalidInput(format!(
                    "explicit schedule has {} delays for {episodes} episodes",
                    delays.len()
                )));
            }
            delays
                .iter()
                .map(|&d| non_negative(d, "explicit delay"))
                .collect::<Result<_>>()?
        }
    };
    Ok(DelaySchedule::new(delays))
}

/// `Σ_k Σ_i 1{k ≤ i + d^i < k + d^k}`, counted with a sorted release list.
pub fn delay_overlap_count(schedule: &DelaySchedule) -> u64 {
    let mut releases: Vec<usize> = schedule
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, d)| i + 1 + d)
        .collect();
    releases.sort_unstable();
    schedule
        .as_slice()
        .iter()
        .enumerate()
        .map(|(idx, &d)| {
            let k = idx + 1;
            let lo = releases.partition_point(|&r| r < k);
            let hi = releases.partition_point(|&r| r < k + d);
            (hi - lo) as u64
        })
        .sum()
}

/// Cost process declared in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostGenerator {
    /// Every entry equal to `value` in every episode.
    Constant { value: f64 },
    /// One table, given in `(h, s, a)` order, repeated every episode.
    FixedTable { table: Vec<f64> },
    /// One uniformly random table repeated every episode.
    FixedRandom,
    /// Bernoulli draws around a random mean table, independent across episodes.
    IidBernoulli,
    /// Two random tables alternating every `period` episodes.
    Switching { period: usize },
}

/// The adversary's costs `c^1, …, c^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSequence {
    costs: Vec<CostFunction>,
}

impl CostSequence {
    pub fn new(costs: Vec<CostFunction>) -> Self {
        Self { costs }
    }

    /// Draws the whole sequence up front from `(generator, seed)`.
    pub fn generate(generator: &CostGenerator, dims: Dims, episodes: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, "costs");
        let costs = match generator {
            CostGenerator::Constant { value } => {
                vec![CostFunction::constant(dims, *value)?; episodes]
            }
            CostGenerator::FixedTable { table } => {
                vec![CostFunction::new(dims, table.clone())?; episodes]
            }
            CostGenerator::FixedRandom => vec![CostFunction::random(dims, &mut rng); episodes],
            CostGenerator::IidBernoulli => {
                let mean = CostFunction::random(dims, &mut rng);
                (0..episodes)
                    .map(|_| {
                        let draw = mean
                            .as_slice()
                            .iter()
                            .map(|&m| if rng.random::<f64>() < m { 1.0 } else { 0.0 })
                            .collect();
                        CostFunction::new(dims, draw)
                    })
                    .collect::<Result<_>>()?
            }
            CostGenerator::Switching { period } => {
                if *period == 0 {
                    return Err(Error::InvalidInput("switching period must be positive".into()));
                }
                let first = CostFunction::random(dims, &mut rng);
                let second = CostFunction::random(dims, &mut rng);
                (0..episodes)
                    .map(|i| if (i / period) % 2 == 0 { first.clone() } else { second.clone() })
                    .collect()
            }
        };
        Ok(Self { costs })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Cost function of episode `k` (1-based).
    pub fn episode(&self, k: usize) -> &CostFunction {
        &self.costs[k - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CostFunction> {
        self.costs.iter()
    }

    /// `Σ_k c^k` as an `(h, s, a)` table.
    pub fn total(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.costs.first().map_or(0, |c| c.as_slice().len())];
        for c in &self.costs {
            sum.iter_mut().zip(c.as_slice()).for_each(|(t, x)| *t += x);
        }
        sum
    }
}

/// States `s_1..s_{H+1}` and actions `a_1..a_H` of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTrajectory {
    pub episode: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl EpisodeTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// `(s_h, a_h, s_{h+1})` for each layer.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(|(h, &a)| (h, self.states[h], a, self.states[h + 1]))
    }

    pub fn visits(&self, h: usize, s: usize, a: usize) -> bool {
        self.states[h] == s && self.actions[h] == a
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Runs `policy` for one episode of `mdp`.
pub fn play_episode<R: Rng + ?Sized>(
    episode: usize,
    policy: &Policy,
    mdp: &MdpSpec,
    rng: &mut R,
) -> EpisodeTrajectory {
    let dims = mdp.dims();
    let mut states = Vec::with_capacity(dims.horizon + 1);
    let mut actions = Vec::with_capacity(dims.horizon);
    let mut s = mdp.initial_state();
    states.push(s);
    for h in 0..dims.horizon {
        let a = sample_index(policy.row(h, s), rng);
        s = sample_index(mdp.transition().row(h, s, a), rng);
        actions.push(a);
        states.push(s);
    }
    EpisodeTrajectory {
        episode,
        states,
        actions,
    }
}

/// Bandit feedback of one episode: costs on the trajectory only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPacket {
    pub origin: usize,
    pub costs: Vec<f64>,
    pub trajectory: EpisodeTrajectory,
}

impl FeedbackPacket {
    pub fn observe(cost: &CostFunction, trajectory: &EpisodeTrajectory) -> Self {
        let costs = trajectory.steps().map(|(h, s, a, _)| cost.cost(h, s, a)).collect();
        Self {
            origin: trajectory.episode,
            costs,
            trajectory: trajectory.clone(),
        }
    }
}

/// Pending packets keyed by release episode.
#[derive(Debug, Default)]
pub struct FeedbackQueue {
    pending: BTreeMap<usize, Vec<FeedbackPacket>>,
    last_released: Option<usize>,
}

impl FeedbackQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `packet` for release at `packet.origin + delay`.
    pub fn enqueue(&mut self, packet: FeedbackPacket, delay: usize) -> Result<()> {
        let release = packet.origin + delay;
        if let Some(last) = self.last_released {
            if release <= last {
                return Err(Error::Protocol(format!(
                    "packet of episode {} would be released at {release}, already past {last}",
                    packet.origin
                )));
            }
        }
        self.pending.entry(release).or_default().push(packet);
        Ok(())
    }

    /// Removes and returns `{j : j + d^j = k}` in increasing `j`.
    pub fn arrivals_at(&mut self, k: usize) -> Result<Vec<FeedbackPacket>> {
        if let Some(last) = self.last_released {
            if k <= last {
                return Err(Error::Protocol(format!(
                    "arrivals for episode {k} requested after episode {last}"
                )));
            }
        }
        self.last_released = Some(k);
        let mut out = self.pending.remove(&k).unwrap_or_default();
        out.sort_by_key(|p| p.origin);
        Ok(out)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Transition;

    fn packet(j: usize) -> FeedbackPacket {
        FeedbackPacket {
            origin: j,
            costs: vec![0.0],
            trajectory: EpisodeTrajectory {
                episode: j,
                states: vec![0, 0],
                actions: vec![0],
            },
        }
    }

    #[test]
    fn constant_and_explicit_schedules() {
        let d = generate_delays(&DelayKind::Constant { value: 0 }, 5, 0).unwrap();
        assert_eq!(d.as_slice(), &[0, 0, 0, 0, 0]);
        let d = generate_delays(&DelayKind::Explicit { delays: vec![2, 0, 1] }, 3, 0).unwrap();
        assert_eq!((d.total(), d.max()), (3, 2));
    }

    #[test]
    fn negative_parameters_rejected() {
        assert!(generate_delays(&DelayKind::Constant { value: -1 }, 3, 0).is_err());
        assert!(generate_delays(&DelayKind::UniformRandom { max: -4 }, 3, 0).is_err());
        assert!(generate_delays(&DelayKind::Explicit { delays: vec![1, -1] }, 2, 0).is_err());
        assert!(generate_delays(&DelayKind::Spike { base: 0, height: 3, period: 0 }, 2, 0).is_err());
    }

    #[test]
    fn uniform_delays_have_expected_mean() {
        let d = generate_delays(&DelayKind::UniformRandom { max: 10 }, 10_000, 42).unwrap();
        let mean = d.total() as f64 / d.len() as f64;
        assert!((4.8..=5.2).contains(&mean), "mean {mean}");
        assert_eq!(d, generate_delays(&DelayKind::UniformRandom { max: 10 }, 10_000, 42).unwrap());
    }

    #[test]
    fn spike_schedule() {
        let d = generate_delays(&DelayKind::Spike { base: 1, height: 9, period: 3 }, 7, 0).unwrap();
        assert_eq!(d.as_slice(), &[1, 1, 9, 1, 1, 9, 1]);
    }

    #[test]
    fn arrivals_follow_release_indices() {
        let schedule = DelaySchedule::new(vec![2, 0, 1]);
        let mut q = FeedbackQueue::new();
        for j in 1..=3 {
            q.enqueue(packet(j), schedule.delay(j)).unwrap();
        }
        let origins = |v: Vec<FeedbackPacket>| v.into_iter().map(|p| p.origin).collect::<Vec<_>>();
        assert_eq!(origins(q.arrivals_at(1).unwrap()), Vec::<usize>::new());
        assert_eq!(origins(q.arrivals_at(2).unwrap()), vec![2]);
        assert_eq!(origins(q.arrivals_at(3).unwrap()), vec![1]);
        assert_eq!(origins(q.arrivals_at(4).unwrap()), vec![3]);
        assert!(matches!(q.arrivals_at(4), Err(Error::Protocol(_))));
        assert!(matches!(q.arrivals_at(2), Err(Error::Protocol(_))));
    }

    #[test]
    fn zero_delay_is_immediate() {
        let mut q = FeedbackQueue::new();
        for k in 1..=20 {
            q.enqueue(packet(k), 0).unwrap();
            let got = q.arrivals_at(k).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].origin, k);
        }
    }

    #[test]
    fn late_enqueue_is_a_protocol_error() {
        let mut q = FeedbackQueue::new();
        q.arrivals_at(5).unwrap();
        assert!(matches!(q.enqueue(packet(3), 1), Err(Error::Protocol(_))));
    }

    #[test]
    fn overlap_count_small_cases() {
        assert_eq!(delay_overlap_count(&DelaySchedule::new(vec![0; 7])), 0);
        assert_eq!(delay_overlap_count(&DelaySchedule::new(vec![1, 1, 1])), 2);
    }

    #[test]
    fn deterministic_play() {
        let d = Dims::new(2, 2, 3).unwrap();
        let mut data = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            data[d.sas(h, s, a, (s + a) % 2)] = 1.0;
        }
        let mdp = MdpSpec::new(Transition::new(d, data).unwrap(), 0).unwrap();
        let pi = Policy::deterministic(d, &[1; 6]).unwrap();
        let t1 = play_episode(1, &pi, &mdp, &mut stream(0, "x"));
        let t2 = play_episode(1, &pi, &mdp, &mut stream(99, "y"));
        assert_eq!(t1, t2);
        assert_eq!(t1.states, vec![0, 1, 0, 1]);
        assert_eq!(t1.actions, vec![1, 1, 1]);
    }

    #[test]
    fn cost_sequences_regenerate_identically() {
        let d = Dims::new(2, 2, 2).unwrap();
        for g in [
            CostGenerator::FixedRandom,
            CostGenerator::IidBernoulli,
            CostGenerator::Switching { period: 3 },
        ] {
            let a = CostSequence::generate(&g, d, 10, 5).unwrap();
            let b = CostSequence::generate(&g, d, 10, 5).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|c| c.as_slice().iter().all(|x| (0.0..=1.0).contains(x))));
        }
        let s = CostSequence::generate(&CostGenerator::Switching { period: 3 }, d, 7, 5).unwrap();
        assert_eq!(s.episode(1), s.episode(3));
        assert_ne!(s.episode(3), s.episode(4));
        assert_eq!(s.episode(4), s.episode(6));
        assert_eq!(s.episode(1), s.episode(7));
    }

    #[test]
    fn packet_carries_trajectory_costs() {
        let d = Dims::new(2, 2, 2).unwrap();
        let cost = CostFunction::new(d, (0..8).map(|i| i as f64 / 10.0).collect()).unwrap();
        let t = EpisodeTrajectory {
            episode: 4,
            states: vec![0, 1, 0],
            actions: vec![1, 0],
        };
        let p = FeedbackPacket::observe(&cost, &t);
        assert_eq!(p.origin, 4);
        assert_eq!(p.costs, vec![cost.cost(0, 0, 1), cost.cost(1, 1, 0)]);
    }
}
