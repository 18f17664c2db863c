//! Visit counters and Bernstein-style interval confidence sets over transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::EpisodeTrajectory;
use crate::error::{Error, Result};
use crate::mdp::{random_simplex, Dims, OccupancyMeasure, Transition, STRUCTURAL_TOL};

/// Which trajectories feed the confidence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterKind {
    /// `n`: every completed episode, observed at its end.
    Immediate,
    /// `m`: only episodes whose feedback has been released.
    Delayed,
}

#[derive(Debug, Clone, PartialEq)]
struct Counts {
    pair: Vec<u64>,
    triple: Vec<u64>,
}

impl Counts {
    fn new(dims: Dims) -> Self {
        Self {
            pair: vec![0; dims.sa_len()],
            triple: vec![0; dims.sas_len()],
        }
    }
}

/// Visit counters `n_h(s,a[,s'])` and `m_h(s,a[,s'])`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounters {
    dims: Dims,
    immediate: Counts,
    delayed: Counts,
}

impl VisitCounters {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            immediate: Counts::new(dims),
            delayed: Counts::new(dims),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn family(&self, kind: CounterKind) -> &Counts {
        match kind {
            CounterKind::Immediate => &self.immediate,
            CounterKind::Delayed => &self.delayed,
        }
    }

    /// Adds one visit per layer of `trajectory` to the `kind` counters.
    pub fn update(&mut self, trajectory: &EpisodeTrajectory, kind: CounterKind) {
        let dims = self.dims;
        let counts = match kind {
            CounterKind::Immediate => &mut self.immediate,
            CounterKind::Delayed => &mut self.delayed,
        };
        for (h, s, a, next) in trajectory.steps() {
            counts.pair[dims.sa(h, s, a)] += 1;
            counts.triple[dims.sas(h, s, a, next)] += 1;
        }
    }

    pub fn pair(&self, kind: CounterKind, h: usize, s: usize, a: usize) -> u64 {
        self.family(kind).pair[self.dims.sa(h, s, a)]
    }

    pub fn triple(&self, kind: CounterKind, h: usize, s: usize, a: usize, next: usize) -> u64 {
        self.family(kind).triple[self.dims.sas(h, s, a, next)]
    }

    /// `Σ_{s,a} count_h(s,a)`.
    pub fn layer_total(&self, kind: CounterKind, h: usize) -> u64 {
        let len = self.dims.states * self.dims.actions;
        self.family(kind).pair[h * len..(h + 1) * len].iter().sum()
    }
}

/// Interval box `|p'(s'|s,a) − center(s'|s,a)| ≤ radius(s'|s,a)` intersected
/// with row-stochasticity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    dims: Dims,
    center: Transition,
    radius: Vec<f64>,
    kind: CounterKind,
    delta: f64,
    episode: usize,
}

/// `ln(10 H S A K / δ)`.
pub fn log_term(dims: Dims, episodes: usize, delta: f64) -> f64 {
    (10.0 * (dims.horizon * dims.states * dims.actions * episodes.max(1)) as f64 / delta).ln()
}

/// `√(16 p̄ L / (n∨1)) + 10 L / (n∨1)`.
pub fn bernstein_radius(empirical: f64, count: u64, log_term: f64) -> f64 {
    let n = count.max(1) as f64;
    (16.0 * empirical * log_term / n).sqrt() + 10.0 * log_term / n
}

impl ConfidenceSet {
    /// Confidence set from the `kind` counters, for use at episode `episode`.
    pub fn build(
        counters: &VisitCounters,
        kind: CounterKind,
        delta: f64,
        episodes: usize,
        episode: usize,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!("confidence parameter must lie in (0,1), got {delta}")));
        }
        let dims = counters.dims();
        let l = log_term(dims, episodes, delta);
        let mut center = vec![0.0; dims.sas_len()];
        let mut radius = vec![0.0; dims.sas_len()];
        for (h, s, a) in dims.state_actions() {
            let n = counters.pair(kind, h, s, a);
            for next in 0..dims.states {
                let idx = dims.sas(h, s, a, next);
                let p_bar = counters.triple(kind, h, s, a, next) as f64 / n.max(1) as f64;
                center[idx] = p_bar;
                radius[idx] = bernstein_radius(p_bar, n, l);
            }
        }
        Ok(Self {
            dims,
            center: Transition::new_unchecked(dims, center)?,
            radius,
            kind,
            delta,
            episode,
        })
    }

    /// Every transition function: zero center, unit radius.
    pub fn trivial(dims: Dims) -> Self {
        Self {
            dims,
            center: Transition::new_unchecked(dims, vec![0.0; dims.sas_len()]).expect("sized"),
            radius: vec![1.0; dims.sas_len()],
            kind: CounterKind::Immediate,
            delta: 0.5,
            episode: 1,
        }
    }

    /// The single transition `p`.
    pub fn singleton(p: &Transition) -> Self {
        let dims = p.dims();
        Self {
            dims,
            center: p.clone(),
            radius: vec![0.0; dims.sas_len()],
            kind: CounterKind::Immediate,
            delta: 0.5,
            episode: 1,
        }
    }

    /// Explicit center and radius tables.
    pub fn from_parts(center: Transition, radius: Vec<f64>) -> Result<Self> {
        let dims = center.dims();
        if radius.len() != dims.sas_len() || radius.iter().any(|r| r.is_nan() || *r < 0.0) {
            return Err(Error::InvalidInput("radius table must be non-negative and sized (h,s,a,s')".into()));
        }
        Ok(Self {
            dims,
            center,
            radius,
            kind: CounterKind::Immediate,
            delta: 0.5,
            episode: 1,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Empirical transition (interval midpoint after intersections).
    pub fn center(&self) -> &Transition {
        &self.center
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn counter_kind(&self) -> CounterKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    #[inline]
    pub fn radius_at(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.radius[self.dims.sas(h, s, a, next)]
    }

    /// Box bounds of one row, clipped to `[0, 1]`.
    pub fn row_bounds(&self, h: usize, s: usize, a: usize) -> (Vec<f64>, Vec<f64>) {
        let c = self.center.row(h, s, a);
        let start = self.dims.sas(h, s, a, 0);
        let r = &self.radius[start..start + self.dims.states];
        let lo = c.iter().zip(r).map(|(c, r)| (c - r).max(0.0)).collect();
        let hi = c.iter().zip(r).map(|(c, r)| (c + r).min(1.0)).collect();
        (lo, hi)
    }

    /// Row admits a stochastic vector inside the box.
    pub fn row_is_feasible(&self, h: usize, s: usize, a: usize) -> bool {
        let (lo, hi) = self.row_bounds(h, s, a);
        lo.iter().zip(&hi).all(|(l, u)| l <= u)
            && lo.iter().sum::<f64>() <= 1.0 + STRUCTURAL_TOL
            && hi.iter().sum::<f64>() >= 1.0 - STRUCTURAL_TOL
    }

    pub fn is_nonempty(&self) -> bool {
        self.dims.state_actions().all(|(h, s, a)| self.row_is_feasible(h, s, a))
    }

    /// Range of `p'(s'|s,a)` over members, per entry of the row.
    pub fn entry_ranges(&self, h: usize, s: usize, a: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.row_bounds(h, s, a);
        let lo_sum: f64 = lo.iter().sum();
        let hi_sum: f64 = hi.iter().sum();
        lo.iter()
            .zip(&hi)
            .map(|(&l, &u)| {
                let lower = l.max(1.0 - (hi_sum - u));
                let upper = u.min(1.0 - (lo_sum - l));
                (lower, upper)
            })
            .collect()
    }

    /// `max_{p' ∈ P} |p'(s'|s,a) − center(s'|s,a)|` for each entry of the row.
    pub fn effective_radius(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        self.entry_ranges(h, s, a)
            .into_iter()
            .zip(self.center.row(h, s, a))
            .map(|((lo, hi), c)| (hi - c).max(c - lo).max(0.0))
            .collect()
    }

    /// Membership with `tol` slack on both the box and the row sums.
    pub fn contains_within(&self, p: &Transition, tol: f64) -> bool {
        if p.dims() != self.dims {
            return false;
        }
        self.dims.state_actions().all(|(h, s, a)| {
            let row = p.row(h, s, a);
            let sum: f64 = row.iter().sum();
            (sum - 1.0).abs() <= tol
                && row.iter().enumerate().all(|(next, &x)| {
                    x >= -tol && (x - self.center.prob(h, s, a, next)).abs() <= self.radius_at(h, s, a, next) + tol
                })
        })
    }

    pub fn contains(&self, p: &Transition) -> bool {
        self.contains_within(p, STRUCTURAL_TOL)
    }

    /// Largest violation of `|q(s,a,s') − center·q(s,a)| ≤ radius·q(s,a)` by `q`.
    ///
    /// Zero iff the transition induced by `q` lies in the set on every visited row.
    pub fn occupancy_violation(&self, q: &OccupancyMeasure) -> f64 {
        let dims = self.dims;
        let mut worst: f64 = 0.0;
        for (h, s, a) in dims.state_actions() {
            let mass = q.state_action(h, s, a);
            for next in 0..dims.states {
                let gap = (q.get(h, s, a, next) - self.center.prob(h, s, a, next) * mass).abs();
                worst = worst.max(gap - self.radius_at(h, s, a, next) * mass);
            }
        }
        worst
    }

    /// A member of the set: a Dirichlet-perturbed center projected into the box.
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Transition> {
        const ATTEMPTS: usize = 100;
        let dims = self.dims;
        for _ in 0..ATTEMPTS {
            let mut data = vec![0.0; dims.sas_len()];
            let mut ok = true;
            for (h, s, a) in dims.state_actions() {
                match self.sample_row(h, s, a, rng) {
                    Some(row) => {
                        let start = dims.sas(h, s, a, 0);
                        data[start..start + dims.states].copy_from_slice(&row);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let p = Transition::new_unchecked(dims, data)?;
                if self.contains(&p) {
                    return Ok(p);
                }
            }
        }
        Err(Error::SamplingFailed(ATTEMPTS))
    }

    fn sample_row<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> Option<Vec<f64>> {
        if !self.row_is_feasible(h, s, a) {
            return None;
        }
        let (lo, hi) = self.row_bounds(h, s, a);
        let noise = random_simplex(rng, self.dims.states, 0.5);
        let mix: f64 = rng.random();
        let center = self.center.row(h, s, a);
        let mut x: Vec<f64> = center
            .iter()
            .zip(&noise)
            .zip(lo.iter().zip(&hi))
            .map(|((c, n), (l, u))| ((1.0 - mix) * c + mix * n).clamp(*l, *u))
            .collect();
        // Move toward the upper (or lower) bounds in proportion to the slack
        // until the row sums to one; stays inside the box because the row is
        // feasible.
        for _ in 0..100 {
            let sum: f64 = x.iter().sum();
            let gap = 1.0 - sum;
            if gap.abs() <= 1e-14 {
                break;
            }
            if gap > 0.0 {
                let slack: f64 = x.iter().zip(&hi).map(|(x, u)| u - x).sum();
                let t = (gap / slack).min(1.0);
                x.iter_mut().zip(&hi).for_each(|(x, u)| *x += t * (u - *x));
            } else {
                let slack: f64 = x.iter().zip(&lo).map(|(x, l)| *x - l).sum();
                let t = (-gap / slack).min(1.0);
                x.iter_mut().zip(&lo).for_each(|(x, l)| *x -= t * (*x - l));
            }
        }
        Some(x)
    }

    /// Entrywise interval intersection; errors when some row becomes empty.
    pub fn intersect(&self, other: &ConfidenceSet) -> Result<ConfidenceSet> {
        if self.dims != other.dims {
            return Err(Error::InvalidInput("cannot intersect confidence sets of different shapes".into()));
        }
        let n = self.dims.sas_len();
        let mut center = vec![0.0; n];
        let mut radius = vec![0.0; n];
        let (ca, cb) = (self.center.as_slice(), other.center.as_slice());
        for i in 0..n {
            let lo = (ca[i] - self.radius[i]).max(cb[i] - other.radius[i]);
            let hi = (ca[i] + self.radius[i]).min(cb[i] + other.radius[i]);
            if lo > hi {
                return Err(Error::Structural(format!("confidence sets are disjoint at entry {i}")));
            }
            center[i] = 0.5 * (lo + hi);
            radius[i] = (0.5 * (hi - lo)).min(self.radius[i]).min(other.radius[i]);
        }
        let out = ConfidenceSet {
            dims: self.dims,
            center: Transition::new_unchecked(self.dims, center)?,
            radius,
            kind: self.kind,
            delta: self.delta,
            episode: self.episode.max(other.episode),
        };
        if !out.is_nonempty() {
            return Err(Error::Structural("intersection admits no row-stochastic transition".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::play_episode;
    use crate::mdp::{MdpSpec, Policy};
    use crate::rng::stream;

    fn trajectory(states: Vec<usize>, actions: Vec<usize>) -> EpisodeTrajectory {
        EpisodeTrajectory {
            episode: 1,
            states,
            actions,
        }
    }

    #[test]
    fn one_trajectory_gives_h_increments() {
        let d = Dims::new(3, 2, 4).unwrap();
        let mut c = VisitCounters::new(d);
        let t = trajectory(vec![0, 1, 2, 0, 1], vec![1, 0, 1, 1]);
        c.update(&t, CounterKind::Immediate);
        let total: u64 = (0..4).map(|h| c.layer_total(CounterKind::Immediate, h)).sum();
        assert_eq!(total, 4);
        assert_eq!(c.triple(CounterKind::Immediate, 1, 1, 0, 2), 1);
        assert_eq!(c.layer_total(CounterKind::Delayed, 0), 0);
        c.update(&t, CounterKind::Immediate);
        assert_eq!(c.pair(CounterKind::Immediate, 2, 2, 1), 2);
        assert_eq!(c.triple(CounterKind::Immediate, 3, 0, 1, 1), 2);
    }

    #[test]
    fn layer_totals_count_episodes() {
        let d = Dims::new(3, 2, 3).unwrap();
        let mut rng = stream(5, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let mut c = VisitCounters::new(d);
        for k in 1..=100 {
            let t = play_episode(k, &Policy::uniform(d), &mdp, &mut rng);
            c.update(&t, CounterKind::Immediate);
        }
        for h in 0..3 {
            assert_eq!(c.layer_total(CounterKind::Immediate, h), 100);
            for (hh, s, a) in d.state_actions().filter(|x| x.0 == h) {
                let sum: u64 = (0..3).map(|n| c.triple(CounterKind::Immediate, hh, s, a, n)).sum();
                assert_eq!(sum, c.pair(CounterKind::Immediate, hh, s, a));
            }
        }
    }

    #[test]
    fn unvisited_rows_admit_every_distribution() {
        let d = Dims::new(3, 2, 2).unwrap();
        let set = ConfidenceSet::build(&VisitCounters::new(d), CounterKind::Immediate, 0.1, 100, 1).unwrap();
        assert!(set.radius().iter().all(|&r| r >= 1.0));
        let mut rng = stream(0, "test");
        for _ in 0..20 {
            assert!(set.contains(&Transition::random(d, 0.3, &mut rng)));
        }
        let mut corner = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            corner[d.sas(h, s, a, 2)] = 1.0;
        }
        assert!(set.contains(&Transition::new(d, corner).unwrap()));
    }

    #[test]
    fn large_counts_give_tight_radius() {
        let d = Dims::new(2, 1, 1).unwrap();
        let mut c = VisitCounters::new(d);
        let n = 1_000_000u64;
        c.immediate.pair[0] = n;
        c.immediate.triple[0] = 3 * n / 10;
        c.immediate.triple[1] = 7 * n / 10;
        let set = ConfidenceSet::build(&c, CounterKind::Immediate, 0.1, 1000, 1).unwrap();
        let l = log_term(d, 1000, 0.1);
        let expected = (16.0 * 0.3 * l).sqrt() * 1e-3 + 10.0 * l * 1e-6;
        assert!((set.radius_at(0, 0, 0, 0) - expected).abs() < 1e-15);
        let truth = Transition::new(d, vec![0.3, 0.7, 0.5, 0.5]).unwrap();
        assert!(set.contains(&truth));
    }

    #[test]
    fn radius_shrinks_with_count() {
        let l = 12.0;
        let mut prev = f64::INFINITY;
        for n in 0..2000u64 {
            let r = bernstein_radius(0.4, n, l);
            assert!(r <= prev);
            prev = r;
        }
    }

    fn visited_set(seed: u64) -> (ConfidenceSet, MdpSpec) {
        let d = Dims::new(2, 2, 2).unwrap();
        let mut rng = stream(seed, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let mut center = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            let row = random_simplex(&mut rng, 2, 2.0);
            center[d.sas(h, s, a, 0)] = row[0];
            center[d.sas(h, s, a, 1)] = row[1];
        }
        let radius = (0..d.sas_len()).map(|_| rng.random_range(0.02..0.3)).collect();
        let set = ConfidenceSet::from_parts(Transition::new(d, center).unwrap(), radius).unwrap();
        (set, mdp)
    }

    #[test]
    fn center_is_member_and_far_point_is_not() {
        let (set, _) = visited_set(1);
        assert!(set.contains(set.center()));
        let d = set.dims();
        let mut shifted = set.center().clone();
        let r = set.radius_at(0, 0, 0, 0);
        let row = shifted.row_mut(0, 0, 0);
        row[0] += 2.0 * r;
        row[1] -= 2.0 * r;
        assert!(!set.contains(&shifted));
        assert_eq!(shifted.dims(), d);
    }

    #[test]
    fn sampled_members_are_members() {
        let (set, _) = visited_set(2);
        let mut rng = stream(3, "test");
        for _ in 0..1000 {
            let p = set.sample_member(&mut rng).unwrap();
            assert!(set.contains(&p));
        }
    }

    #[test]
    fn intersection_properties() {
        let (a, _) = visited_set(4);
        let aa = a.intersect(&a).unwrap();
        for (x, y) in aa.radius().iter().zip(a.radius()) {
            assert!((x - y).abs() < 1e-15);
        }
        let wide = ConfidenceSet::trivial(a.dims());
        let ab = a.intersect(&wide).unwrap();
        let ba = wide.intersect(&a).unwrap();
        assert_eq!(ab, ba);
        for (x, y) in ab.radius().iter().zip(a.radius()) {
            assert!(*x <= *y + 1e-15);
        }
    }

    #[test]
    fn disjoint_sets_are_structural_errors() {
        let d = Dims::new(2, 1, 1).unwrap();
        let p = Transition::new(d, vec![0.9, 0.1, 0.5, 0.5]).unwrap();
        let q = Transition::new(d, vec![0.1, 0.9, 0.5, 0.5]).unwrap();
        let a = ConfidenceSet::singleton(&p);
        let b = ConfidenceSet::singleton(&q);
        assert!(matches!(a.intersect(&b), Err(Error::Structural(_))));
    }

    #[test]
    fn effective_radius_of_single_state_is_zero_when_visited() {
        let d = Dims::new(1, 2, 1).unwrap();
        let mut c = VisitCounters::new(d);
        c.update(&trajectory(vec![0, 0], vec![1]), CounterKind::Immediate);
        let set = ConfidenceSet::build(&c, CounterKind::Immediate, 0.1, 10, 2).unwrap();
        assert_eq!(set.effective_radius(0, 0, 1), vec![0.0]);
        assert_eq!(set.effective_radius(0, 0, 0), vec![1.0]);
    }

    #[test]
    fn build_rejects_bad_delta() {
        let d = Dims::new(1, 1, 1).unwrap();
        let c = VisitCounters::new(d);
        assert!(ConfidenceSet::build(&c, CounterKind::Immediate, 0.0, 10, 1).is_err());
        assert!(ConfidenceSet::build(&c, CounterKind::Immediate, 1.0, 10, 1).is_err());
    }
}
