//! Tabular layered MDPs, policies, occupancy measures and the maps between them.
//!
//! Layers are 0-based internally: `h ∈ 0..H`. Every table is dense row-major,
//! indexed `(h, s, a)` or `(h, s, a, s')`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row-stochasticity of policies and transitions.
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for occupancy normalization and flow conservation.
pub const FLOW_TOL: f64 = 1e-9;

/// Sizes of a layered episodic MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::InvalidInput(format!(
                "dimensions must be positive, got S={states} A={actions} H={horizon}"
            )));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    /// Length of an `(h, s, a)` table.
    pub fn sa_len(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    /// Length of an `(h, s, a, s')` table.
    pub fn sas_len(&self) -> usize {
        self.sa_len() * self.states
    }

    #[inline]
    pub fn sa(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn sas(&self, h: usize, s: usize, a: usize, next: usize) -> usize {
        self.sa(h, s, a) * self.states + next
    }

    /// Iterates `(h, s, a)` in storage order.
    pub fn state_actions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (s_n, a_n) = (self.states, self.actions);
        (0..self.horizon)
            .flat_map(move |h| (0..s_n).flat_map(move |s| (0..a_n).map(move |a| (h, s, a))))
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidInput(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STRUCTURAL_TOL {
        return Err(Error::InvalidInput(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Draws a point of the probability simplex from a symmetric Dirichlet.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..len).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Layered transition kernel `p_h(s' | s, a)`.
///
/// Tables built with [`Transition::new`] are row-stochastic. Empirical tables
/// with unvisited rows are sub-stochastic and come from [`Transition::new_unchecked`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    dims: Dims,
    data: Vec<f64>,
}

impl Transition {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let t = Self::new_unchecked(dims, data)?;
        t.validate()?;
        Ok(t)
    }

    /// Only the length is checked.
    pub fn new_unchecked(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.sas_len() {
            return Err(Error::InvalidInput(format!(
                "transition table has {} entries, expected {}",
                data.len(),
                dims.sas_len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn uniform(dims: Dims) -> Self {
        let w = 1.0 / dims.states as f64;
        Self {
            dims,
            data: vec![w; dims.sas_len()],
        }
    }

    /// Every row drawn from a symmetric Dirichlet with the given concentration.
    pub fn random<R: Rng + ?Sized>(dims: Dims, concentration: f64, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(dims.sas_len());
        for _ in 0..dims.sa_len() {
            data.extend(random_simplex(rng, dims.states, concentration));
        }
        Self { dims, data }
    }

    pub fn validate(&self) -> Result<()> {
        for (h, s, a) in self.dims.state_actions() {
            check_row(self.row(h, s, a), &format!("transition row (h={h}, s={s}, a={a})"))?;
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.dims.sas(h, s, a, 0);
        &self.data[start..start + self.dims.states]
    }

    #[inline]
    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let start = self.dims.sas(h, s, a, 0);
        let n = self.dims.states;
        &mut self.data[start..start + n]
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.data[self.dims.sas(h, s, a, next)]
    }

    /// Nested `[h][s][a][s']` form used by the JSON schema.
    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let d = self.dims;
        (0..d.horizon)
            .map(|h| {
                (0..d.states)
                    .map(|s| (0..d.actions).map(|a| self.row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    pub fn from_nested(dims: Dims, nested: &[Vec<Vec<Vec<f64>>>]) -> Result<Self> {
        let shape_err = || Error::InvalidInput("transition table shape does not match S, A, H".into());
        if nested.len() != dims.horizon {
            return Err(shape_err());
        }
        let mut data = Vec::with_capacity(dims.sas_len());
        for layer in nested {
            if layer.len() != dims.states {
                return Err(shape_err());
            }
            for state in layer {
                if state.len() != dims.actions {
                    return Err(shape_err());
                }
                for row in state {
                    if row.len() != dims.states {
                        return Err(shape_err());
                    }
                    data.extend_from_slice(row);
                }
            }
        }
        Self::new(dims, data)
    }
}

/// Episodic MDP without its cost sequence: `(S, A, H, p, s_init)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    dims: Dims,
    transition: Transition,
    initial_state: usize,
}

impl MdpSpec {
    pub fn new(transition: Transition, initial_state: usize) -> Result<Self> {
        let dims = transition.dims();
        if initial_state >= dims.states {
            return Err(Error::InvalidInput(format!(
                "initial state {initial_state} out of range for S={}",
                dims.states
            )));
        }
        transition.validate()?;
        Ok(Self {
            dims,
            transition,
            initial_state,
        })
    }

    /// Layered MDP whose rows are drawn from a flat Dirichlet; starts in state 0.
    pub fn layered_random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        Self {
            dims,
            transition: Transition::random(dims, 1.0, rng),
            initial_state: 0,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn transition(&self) -> &Transition {
        &self.transition
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MdpJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MdpJson::from(self)).expect("MDP serializes")
    }
}

/// Wire form: `{"S":..,"A":..,"H":..,"s_init":..,"p":[h][s][a][s']}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpJson {
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub s_init: usize,
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<MdpJson> for MdpSpec {
    type Error = Error;

    fn try_from(raw: MdpJson) -> Result<Self> {
        let dims = Dims::new(raw.states, raw.actions, raw.horizon)?;
        let transition = Transition::from_nested(dims, &raw.p)?;
        MdpSpec::new(transition, raw.s_init)
    }
}

impl From<&MdpSpec> for MdpJson {
    fn from(mdp: &MdpSpec) -> Self {
        Self {
            states: mdp.dims.states,
            actions: mdp.dims.actions,
            horizon: mdp.dims.horizon,
            s_init: mdp.initial_state,
            p: mdp.transition.to_nested(),
        }
    }
}

/// Markov policy `π_h(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    dims: Dims,
    data: Vec<f64>,
}

impl Policy {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.sa_len() {
            return Err(Error::InvalidInput(format!(
                "policy table has {} entries, expected {}",
                data.len(),
                dims.sa_len()
            )));
        }
        let p = Self { dims, data };
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                check_row(p.row(h, s), &format!("policy row (h={h}, s={s})"))?;
            }
        }
        Ok(p)
    }

    pub fn uniform(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![1.0 / dims.actions as f64; dims.sa_len()],
        }
    }

    /// `choice[h * S + s]` is the action taken in `(h, s)`.
    pub fn deterministic(dims: Dims, choice: &[usize]) -> Result<Self> {
        if choice.len() != dims.horizon * dims.states || choice.iter().any(|&a| a >= dims.actions) {
            return Err(Error::InvalidInput("deterministic policy choice table is malformed".into()));
        }
        let mut data = vec![0.0; dims.sa_len()];
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                data[dims.sa(h, s, choice[h * dims.states + s])] = 1.0;
            }
        }
        Ok(Self { dims, data })
    }

    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(dims.sa_len());
        for _ in 0..dims.horizon * dims.states {
            data.extend(random_simplex(rng, dims.actions, 1.0));
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.dims.sa(h, s, 0);
        &self.data[start..start + self.dims.actions]
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.data[self.dims.sa(h, s, a)]
    }
}

/// Cost function `c_h(s, a) ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    dims: Dims,
    data: Vec<f64>,
}

impl CostFunction {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.sa_len() {
            return Err(Error::InvalidInput(format!(
                "cost table has {} entries, expected {}",
                data.len(),
                dims.sa_len()
            )));
        }
        if data.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidInput("costs must lie in [0, 1]".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn constant(dims: Dims, value: f64) -> Result<Self> {
        Self::new(dims, vec![value; dims.sa_len()])
    }

    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        Self {
            dims,
            data: (0..dims.sa_len()).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn cost(&self, h: usize, s: usize, a: usize) -> f64 {
        self.data[self.dims.sa(h, s, a)]
    }
}

/// Occupancy measure `q_h(s, a, s')` of a policy under some transition.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    dims: Dims,
    initial_state: usize,
    data: Vec<f64>,
}

impl OccupancyMeasure {
    /// Wraps a raw table without checking membership; see [`validate_occupancy`].
    pub fn from_raw(dims: Dims, initial_state: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.sas_len() {
            return Err(Error::InvalidInput(format!(
                "occupancy table has {} entries, expected {}",
                data.len(),
                dims.sas_len()
            )));
        }
        if initial_state >= dims.states {
            return Err(Error::InvalidInput("initial state out of range".into()));
        }
        Ok(Self {
            dims,
            initial_state,
            data,
        })
    }

    /// `q_h(s,a,s') = q_h(s,a) · p_h(s'|s,a)`.
    pub fn from_state_action(
        sa: &[f64],
        transition: &Transition,
        initial_state: usize,
    ) -> Result<Self> {
        let dims = transition.dims();
        if sa.len() != dims.sa_len() {
            return Err(Error::InvalidInput("state-action table has the wrong length".into()));
        }
        let mut data = vec![0.0; dims.sas_len()];
        for (h, s, a) in dims.state_actions() {
            let mass = sa[dims.sa(h, s, a)];
            for (next, &p) in transition.row(h, s, a).iter().enumerate() {
                data[dims.sas(h, s, a, next)] = mass * p;
            }
        }
        Self::from_raw(dims, initial_state, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.data[self.dims.sas(h, s, a, next)]
    }

    #[inline]
    pub fn state_action(&self, h: usize, s: usize, a: usize) -> f64 {
        let start = self.dims.sas(h, s, a, 0);
        self.data[start..start + self.dims.states].iter().sum()
    }

    pub fn state(&self, h: usize, s: usize) -> f64 {
        (0..self.dims.actions).map(|a| self.state_action(h, s, a)).sum()
    }

    /// `q_h(s, a)` for every `(h, s, a)`.
    pub fn state_action_table(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.dims.states)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// `⟨q, c⟩` for an `(h, s, a)` table.
    pub fn dot(&self, sa_table: &[f64]) -> f64 {
        self.data
            .chunks_exact(self.dims.states)
            .zip(sa_table)
            .map(|(row, c)| row.iter().sum::<f64>() * c)
            .sum()
    }
}

/// `q_h(s, a)` of `policy` under `transition` by forward induction.
///
/// Sub-stochastic transitions are accepted; they leak mass.
pub fn state_action_occupancy(
    policy: &Policy,
    transition: &Transition,
    initial_state: usize,
) -> Result<Vec<f64>> {
    let dims = policy.dims();
    if dims != transition.dims() {
        return Err(Error::InvalidInput(format!(
            "policy dimensions {:?} do not match transition dimensions {:?}",
            dims,
            transition.dims()
        )));
    }
    if initial_state >= dims.states {
        return Err(Error::InvalidInput("initial state out of range".into()));
    }
    let mut out = vec![0.0; dims.sa_len()];
    let mut reach = vec![0.0; dims.states];
    reach[initial_state] = 1.0;
    for h in 0..dims.horizon {
        let mut next_reach = vec![0.0; dims.states];
        for s in 0..dims.states {
            if reach[s] == 0.0 {
                continue;
            }
            for a in 0..dims.actions {
                let mass = reach[s] * policy.prob(h, s, a);
                out[dims.sa(h, s, a)] = mass;
                if mass == 0.0 {
                    continue;
                }
                for (next, p) in transition.row(h, s, a).iter().enumerate() {
                    next_reach[next] += mass * p;
                }
            }
        }
        reach = next_reach;
    }
    Ok(out)
}

/// Occupancy measure `q^{π,p}` by forward induction.
pub fn occupancy_from(
    policy: &Policy,
    transition: &Transition,
    initial_state: usize,
) -> Result<OccupancyMeasure> {
    let sa = state_action_occupancy(policy, transition, initial_state)?;
    OccupancyMeasure::from_state_action(&sa, transition, initial_state)
}

/// `π_h(a|s) = q_h(s,a) / q_h(s)`; unreachable rows are uniform.
pub fn policy_from_occupancy(q: &OccupancyMeasure) -> Policy {
    let dims = q.dims();
    let sa = q.state_action_table();
    let mut data = vec![0.0; dims.sa_len()];
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            let start = dims.sa(h, s, 0);
            let row = &sa[start..start + dims.actions];
            let total: f64 = row.iter().sum();
            for a in 0..dims.actions {
                data[start + a] = if total > 0.0 {
                    row[a] / total
                } else {
                    1.0 / dims.actions as f64
                };
            }
        }
    }
    Policy { dims, data }
}

/// `p_h(s'|s,a) = q_h(s,a,s') / q_h(s,a)`; zero-mass rows are uniform.
pub fn transition_from_occupancy(q: &OccupancyMeasure) -> Transition {
    let dims = q.dims();
    let mut data = vec![0.0; dims.sas_len()];
    for (row_in, row_out) in q.as_slice().chunks_exact(dims.states).zip(data.chunks_exact_mut(dims.states)) {
        let total: f64 = row_in.iter().sum();
        for (o, &x) in row_out.iter_mut().zip(row_in) {
            *o = if total > 0.0 { x / total } else { 1.0 / dims.states as f64 };
        }
    }
    Transition { dims, data }
}

/// State values `V_h(s)` for `h ∈ 0..=H`, with `V_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    dims: Dims,
    data: Vec<f64>,
}

impl ValueTable {
    #[inline]
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.data[h * self.dims.states + s]
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
}

/// Expected cost-to-go of `policy` under `transition` by backward induction.
pub fn value_of(policy: &Policy, transition: &Transition, cost: &CostFunction) -> Result<ValueTable> {
    let dims = policy.dims();
    if dims != transition.dims() || dims != cost.dims() {
        return Err(Error::InvalidInput("policy, transition and cost dimensions differ".into()));
    }
    let n = dims.states;
    let mut data = vec![0.0; (dims.horizon + 1) * n];
    for h in (0..dims.horizon).rev() {
        let (head, tail) = data.split_at_mut((h + 1) * n);
        let next = &tail[..n];
        for s in 0..n {
            head[h * n + s] = (0..dims.actions)
                .map(|a| {
                    let future: f64 = transition
                        .row(h, s, a)
                        .iter()
                        .zip(next)
                        .map(|(p, v)| p * v)
                        .sum();
                    policy.prob(h, s, a) * (cost.cost(h, s, a) + future)
                })
                .sum();
        }
    }
    Ok(ValueTable { dims, data })
}

/// One way an occupancy table fails to be a member of the occupancy polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum OccupancyViolation {
    Negative { layer: usize, state: usize, action: usize, next: usize, value: f64 },
    NonFinite { layer: usize, state: usize, action: usize, next: usize },
    Normalization { layer: usize, deviation: f64 },
    Flow { layer: usize, state: usize, residual: f64 },
    InitialSupport { state: usize, mass: f64 },
}

impl OccupancyViolation {
    pub fn magnitude(&self) -> f64 {
        match *self {
            Self::Negative { value, .. } => -value,
            Self::NonFinite { .. } => f64::INFINITY,
            Self::Normalization { deviation, .. } => deviation.abs(),
            Self::Flow { residual, .. } => residual.abs(),
            Self::InitialSupport { mass, .. } => mass,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyReport {
    pub violations: Vec<OccupancyViolation>,
}

impl OccupancyReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.violations.iter().map(OccupancyViolation::magnitude).fold(0.0, f64::max)
    }
}

/// Lists every invariant of the occupancy polytope that `q` breaks by more than `tol`.
pub fn validate_occupancy(q: &OccupancyMeasure, tol: f64) -> OccupancyReport {
    let dims = q.dims();
    let mut violations = Vec::new();
    for (h, s, a) in dims.state_actions() {
        for next in 0..dims.states {
            let x = q.get(h, s, a, next);
            if !x.is_finite() {
                violations.push(OccupancyViolation::NonFinite { layer: h, state: s, action: a, next });
            } else if x < -tol {
                violations.push(OccupancyViolation::Negative { layer: h, state: s, action: a, next, value: x });
            }
        }
    }
    let layer_len = dims.states * dims.actions * dims.states;
    for h in 0..dims.horizon {
        let total: f64 = q.as_slice()[h * layer_len..(h + 1) * layer_len].iter().sum();
        if (total - 1.0).abs() > tol {
            violations.push(OccupancyViolation::Normalization { layer: h, deviation: total - 1.0 });
        }
    }
    for s in 0..dims.states {
        if s != q.initial_state() {
            let mass = q.state(0, s);
            if mass.abs() > tol {
                violations.push(OccupancyViolation::InitialSupport { state: s, mass });
            }
        }
    }
    for h in 0..dims.horizon.saturating_sub(1) {
        for next in 0..dims.states {
            let inflow: f64 = (0..dims.states)
                .flat_map(|s| (0..dims.actions).map(move |a| (s, a)))
                .map(|(s, a)| q.get(h, s, a, next))
                .sum();
            let outflow = q.state(h + 1, next);
            if (inflow - outflow).abs() > tol {
                violations.push(OccupancyViolation::Flow { layer: h, state: next, residual: inflow - outflow });
            }
        }
    }
    OccupancyReport { violations }
}

/// `Σ q ln(q/q') + q' − q` over all `(h, s, a, s')`.
pub fn unnormalized_kl(q: &OccupancyMeasure, reference: &OccupancyMeasure) -> Result<f64> {
    let dims = q.dims();
    if dims != reference.dims() {
        return Err(Error::InvalidInput("occupancy dimensions differ".into()));
    }
    let mut total = 0.0;
    for (h, s, a) in dims.state_actions() {
        for next in 0..dims.states {
            let x = q.get(h, s, a, next);
            let y = reference.get(h, s, a, next);
            if x > 0.0 {
                if y <= 0.0 {
                    return Err(Error::InfiniteDivergence { layer: h, state: s, action: a, next: Some(next) });
                }
                total += x * (x / y).ln();
            }
            total += y - x;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn dims(s: usize, a: usize, h: usize) -> Dims {
        Dims::new(s, a, h).unwrap()
    }

    #[test]
    fn uniform_bandit_occupancy() {
        let d = dims(1, 2, 1);
        let q = occupancy_from(&Policy::uniform(d), &Transition::uniform(d), 0).unwrap();
        assert_eq!(q.state_action(0, 0, 0), 0.5);
        assert_eq!(q.state_action(0, 0, 1), 0.5);
    }

    #[test]
    fn deterministic_trajectory_is_indicator() {
        let d = dims(3, 2, 3);
        // p: always move to state (s + a + 1) mod 3.
        let mut data = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            data[d.sas(h, s, a, (s + a + 1) % 3)] = 1.0;
        }
        let p = Transition::new(d, data).unwrap();
        let pi = Policy::deterministic(d, &[0; 9]).unwrap();
        let q = occupancy_from(&pi, &p, 0).unwrap();
        assert_eq!(q.get(0, 0, 0, 1), 1.0);
        assert_eq!(q.get(1, 1, 0, 2), 1.0);
        assert_eq!(q.get(2, 2, 0, 0), 1.0);
        assert_eq!(q.as_slice().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let pi = Policy::uniform(dims(2, 2, 2));
        let p = Transition::uniform(dims(2, 3, 2));
        assert!(matches!(occupancy_from(&pi, &p, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_mass_rows_become_uniform() {
        let d = dims(3, 2, 2);
        let mut data = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            data[d.sas(h, s, a, 1)] = 1.0;
        }
        let p = Transition::new(d, data).unwrap();
        let q = occupancy_from(&Policy::uniform(d), &p, 0).unwrap();
        let pi = policy_from_occupancy(&q);
        // state 2 is never reached at layer 1
        assert_eq!(pi.row(1, 2), &[0.5, 0.5]);
        let back = transition_from_occupancy(&q);
        assert_eq!(back.row(1, 2, 0), &[1.0 / 3.0; 3]);
        assert_eq!(back.row(0, 0, 1), p.row(0, 0, 1));
    }

    #[test]
    fn uniform_policy_round_trip() {
        let d = dims(2, 3, 2);
        let mut rng = stream(1, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let q = occupancy_from(&Policy::uniform(d), mdp.transition(), 0).unwrap();
        let pi = policy_from_occupancy(&q);
        for (x, y) in pi.as_slice().iter().zip(Policy::uniform(d).as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn value_zero_and_constant_costs() {
        let d = dims(3, 2, 4);
        let mut rng = stream(2, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let pi = Policy::random(d, &mut rng);
        let v0 = value_of(&pi, mdp.transition(), &CostFunction::constant(d, 0.0).unwrap()).unwrap();
        let v1 = value_of(&pi, mdp.transition(), &CostFunction::constant(d, 1.0).unwrap()).unwrap();
        for h in 0..=d.horizon {
            for s in 0..d.states {
                assert_eq!(v0.get(h, s), 0.0);
                assert!((v1.get(h, s) - (d.horizon - h) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validation_reports_scaled_layer() {
        let d = dims(2, 2, 3);
        let mut rng = stream(3, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let q = occupancy_from(&Policy::uniform(d), mdp.transition(), 0).unwrap();
        assert!(validate_occupancy(&q, 1e-9).is_valid());

        let mut raw = q.clone().into_raw();
        let layer = d.states * d.actions * d.states;
        raw[layer..2 * layer].iter_mut().for_each(|x| *x *= 1.1);
        let scaled = OccupancyMeasure::from_raw(d, 0, raw).unwrap();
        let report = validate_occupancy(&scaled, 1e-9);
        let norm: Vec<_> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                OccupancyViolation::Normalization { layer, deviation } => Some((*layer, *deviation)),
                _ => None,
            })
            .collect();
        assert_eq!(norm.len(), 1);
        assert_eq!(norm[0].0, 1);
        assert!((norm[0].1 - 0.1).abs() < 1e-12);

        let noisy: Vec<f64> = q
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, x)| x + if i % 2 == 0 { 1e-12 } else { -1e-12 })
            .collect();
        let noisy = OccupancyMeasure::from_raw(d, 0, noisy).unwrap();
        assert!(validate_occupancy(&noisy, 1e-9).is_valid());
    }

    #[test]
    fn initial_support_violation() {
        let d = dims(2, 1, 1);
        let q = OccupancyMeasure::from_raw(d, 0, vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        let report = validate_occupancy(&q, 1e-9);
        assert!(matches!(
            report.violations.as_slice(),
            [OccupancyViolation::InitialSupport { state: 1, .. }]
        ));
    }

    #[test]
    fn kl_single_cell() {
        let d = dims(1, 1, 1);
        let q = OccupancyMeasure::from_raw(d, 0, vec![0.5]).unwrap();
        let r = OccupancyMeasure::from_raw(d, 0, vec![0.25]).unwrap();
        let kl = unnormalized_kl(&q, &r).unwrap();
        assert!((kl - (0.5 * 2f64.ln() + 0.25 - 0.5)).abs() < 1e-15);
        assert!((kl - 0.096574).abs() < 1e-6);
        assert_eq!(unnormalized_kl(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn kl_infinite_divergence() {
        let d = dims(1, 2, 1);
        let q = OccupancyMeasure::from_raw(d, 0, vec![0.5, 0.5]).unwrap();
        let r = OccupancyMeasure::from_raw(d, 0, vec![1.0, 0.0]).unwrap();
        assert!(matches!(unnormalized_kl(&q, &r), Err(Error::InfiniteDivergence { action: 1, .. })));
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let d = dims(2, 2, 2);
        let mut rng = stream(4, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let text = mdp.to_json();
        assert!(text.contains("\"S\":2") && text.contains("\"s_init\":0"));
        assert_eq!(MdpSpec::from_json(&text).unwrap(), mdp);

        let bad = r#"{"S":1,"A":1,"H":1,"s_init":0,"p":[[[[0.9]]]]}"#;
        assert!(MdpSpec::from_json(bad).is_err());
        let bad_init = r#"{"S":1,"A":1,"H":1,"s_init":3,"p":[[[[1.0]]]]}"#;
        assert!(MdpSpec::from_json(bad_init).is_err());
        let bad_shape = r#"{"S":2,"A":1,"H":1,"s_init":0,"p":[[[[1.0]]]]}"#;
        assert!(MdpSpec::from_json(bad_shape).is_err());
    }
}
