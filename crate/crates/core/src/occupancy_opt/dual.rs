//! Entropic mirror-descent updates over occupancy polytopes, solved through
//! their log-partition duals.
//!
//! Every update has the exponential-family form
//! `q_h = q_prev_h · exp(B_h) / Z_h`, where `B` is affine in the dual
//! variables and the duals minimize `Σ_h log Z_h`. The dual gradient is the
//! primal constraint residual, so a converged dual certifies feasibility.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceSet;
use crate::error::{Error, Result};
use crate::mdp::{Dims, OccupancyMeasure, Transition};

/// Stopping rules and line-search constants for the dual solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub backtrack: f64,
    pub feasibility_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 5000,
            armijo: 1e-4,
            backtrack: 0.5,
            feasibility_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.max_iter > 0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.feasibility_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("solver settings out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    /// `Σ_h log Z_h` at the returned duals.
    pub dual_objective: f64,
}

/// `v_h(s)` of the known-transition update; `v_0 ≡ v_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVarsKnown {
    dims: Dims,
    values: Vec<f64>,
}

impl DualVarsKnown {
    pub fn get(&self, h: usize, s: usize) -> f64 {
        if h == 0 || h >= self.dims.horizon {
            0.0
        } else {
            self.values[(h - 1) * self.dims.states + s]
        }
    }
}

/// `μ⁺, μ⁻ ≥ 0` on the interval constraints and `β_h(s)` on flow; `β_0 ≡ β_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVarsUnknown {
    dims: Dims,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    beta: Vec<f64>,
}

impl DualVarsUnknown {
    pub fn beta(&self, h: usize, s: usize) -> f64 {
        if h == 0 || h >= self.dims.horizon {
            0.0
        } else {
            self.beta[(h - 1) * self.dims.states + s]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mu_plus.iter().chain(&self.mu_minus).chain(&self.beta).all(|&x| x == 0.0)
    }
}

/// `log Σ_i w_i exp(b_i)` over entries with `w_i > 0`.
fn log_partition(weights: &[f64], exponents: &[f64]) -> f64 {
    let max = weights
        .iter()
        .zip(exponents)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, b)| *b)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = weights
        .iter()
        .zip(exponents)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, b)| w * (b - max).exp())
        .sum();
    max + sum.ln()
}

fn check_update_inputs(dims: Dims, q_prev: &[f64], loss: &[f64], eta: f64) -> Result<()> {
    if loss.len() != dims.sa_len() {
        return Err(Error::InvalidInput("loss table must be indexed (h, s, a)".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("learning rate must be positive, got {eta}")));
    }
    if loss.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidInput("losses must be finite and non-negative".into()));
    }
    if q_prev.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput("reference occupancy must be finite and non-negative".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Known transition
// ---------------------------------------------------------------------------

struct KnownProblem<'a> {
    dims: Dims,
    prev: Vec<f64>,
    scaled_loss: Vec<f64>,
    transition: &'a Transition,
}

impl KnownProblem<'_> {
    fn vars(&self) -> usize {
        (self.dims.horizon - 1) * self.dims.states
    }

    fn var(&self, v: &[f64], h: usize, s: usize) -> f64 {
        if h == 0 || h >= self.dims.horizon {
            0.0
        } else {
            v[(h - 1) * self.dims.states + s]
        }
    }

    fn exponents(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dims;
        d.state_actions()
            .map(|(h, s, a)| {
                let future: f64 = if h + 1 < d.horizon {
                    self.transition
                        .row(h, s, a)
                        .iter()
                        .enumerate()
                        .map(|(n, p)| p * self.var(v, h + 1, n))
                        .sum()
                } else {
                    0.0
                };
                self.var(v, h, s) - self.scaled_loss[d.sa(h, s, a)] - future
            })
            .collect()
    }

    /// Objective and the normalized candidate `q̃_h(s,a)`.
    fn evaluate(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dims;
        let b = self.exponents(v);
        let layer = d.states * d.actions;
        let mut total = 0.0;
        let mut q = vec![0.0; d.sa_len()];
        for h in 0..d.horizon {
            let range = h * layer..(h + 1) * layer;
            let log_z = log_partition(&self.prev[range.clone()], &b[range.clone()]);
            total += log_z;
            for i in range {
                if self.prev[i] > 0.0 {
                    q[i] = self.prev[i] * (b[i] - log_z).exp();
                }
            }
        }
        (total, q)
    }

    /// Flow residual `Σ_a q̃_h(s,a) − Σ q̃_{h-1}(s0,a0) p(s|s0,a0)` for `h ≥ 1`.
    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let mut g = vec![0.0; self.vars()];
        for (h, s, a) in d.state_actions() {
            let mass = q[d.sa(h, s, a)];
            if h >= 1 {
                g[(h - 1) * d.states + s] += mass;
            }
            if h + 1 < d.horizon {
                for (n, p) in self.transition.row(h, s, a).iter().enumerate() {
                    g[h * d.states + n] -= mass * p;
                }
            }
        }
        g
    }

    fn hessian(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let n = self.vars();
        let mut hess = vec![0.0; n * n];
        let mut jac = vec![0.0; n];
        for h in 0..d.horizon {
            let mut mean = vec![0.0; n];
            for s in 0..d.states {
                for a in 0..d.actions {
                    let w = q[d.sa(h, s, a)];
                    if w == 0.0 {
                        continue;
                    }
                    jac.iter_mut().for_each(|x| *x = 0.0);
                    if h >= 1 {
                        jac[(h - 1) * d.states + s] += 1.0;
                    }
                    if h + 1 < d.horizon {
                        for (next, p) in self.transition.row(h, s, a).iter().enumerate() {
                            jac[h * d.states + next] -= p;
                        }
                    }
                    for i in 0..n {
                        if jac[i] == 0.0 {
                            continue;
                        }
                        mean[i] += w * jac[i];
                        for j in 0..n {
                            hess[i * n + j] += w * jac[i] * jac[j];
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    hess[i * n + j] -= mean[i] * mean[j];
                }
            }
        }
        hess
    }
}

/// Removes the per-layer mean of a direction on layer-indexed duals.
///
/// Shifting every dual of one layer by a constant changes no partition
/// function, so such components are pure rounding noise amplified by the
/// damping and are dropped.
fn center_layers(dir: &mut [f64], states: usize) {
    for layer in dir.chunks_mut(states) {
        let mean = layer.iter().sum::<f64>() / states as f64;
        layer.iter_mut().for_each(|d| *d -= mean);
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major).
fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Known-transition update `argmin_{q ∈ Δ(M)} η⟨q, ĉ⟩ + KL(q ‖ q_prev)`.
///
/// The dual over `v` is unconstrained and low dimensional, so the search
/// direction is a damped Newton step; steps are accepted by Armijo
/// backtracking, falling back to the gradient when the Newton system is
/// singular.
pub fn solve_oreps_known(
    q_prev: &OccupancyMeasure,
    transition: &Transition,
    loss: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<(OccupancyMeasure, DualVarsKnown, SolverDiagnostics)> {
    let dims = q_prev.dims();
    if dims != transition.dims() {
        return Err(Error::InvalidInput("occupancy and transition dimensions differ".into()));
    }
    let prev = q_prev.state_action_table();
    check_update_inputs(dims, &prev, loss, eta)?;
    let problem = KnownProblem {
        dims,
        prev,
        scaled_loss: loss.iter().map(|c| eta * c).collect(),
        transition,
    };
    let n = problem.vars();
    let mut v = vec![0.0; n];
    let (mut obj, mut q) = problem.evaluate(&v);
    let mut grad = problem.gradient(&q);
    let mut iterations = 0;
    while inf_norm(&grad) > cfg.grad_tol {
        if iterations >= cfg.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: inf_norm(&grad),
            });
        }
        iterations += 1;
        let mut hess = problem.hessian(&q);
        let damping = 1e-12 * (1.0 + (0..n).map(|i| hess[i * n + i]).fold(0.0, f64::max));
        for i in 0..n {
            hess[i * n + i] += damping;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut dir = cholesky_solve(&hess, &neg).unwrap_or_else(|| neg.clone());
        center_layers(&mut dir, dims.states);
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope.is_nan() || slope >= 0.0 {
            dir = neg;
            slope = -grad.iter().map(|g| g * g).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = false;
        let norm = inf_norm(&grad);
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let (t_obj, t_q) = problem.evaluate(&trial);
            let t_grad = problem.gradient(&t_q);
            // Close to the optimum the decrease falls below the rounding of
            // the objective; a full step that halves the residual is kept.
            let sufficient = t_obj < obj && t_obj <= obj + cfg.armijo * step * slope;
            let contracting = step == 1.0 && inf_norm(&t_grad) <= 0.5 * norm;
            if t_obj.is_finite() && (sufficient || contracting) {
                v = trial;
                obj = t_obj;
                q = t_q;
                grad = t_grad;
                accepted = true;
                break;
            }
            step *= cfg.backtrack;
        }
        if !accepted {
            // no representable progress left; feasibility decides below
            break;
        }
    }
    let grad_norm = inf_norm(&grad);
    if grad_norm > cfg.feasibility_tol {
        return Err(Error::NonConvergence { iterations, grad_norm });
    }
    let occupancy = OccupancyMeasure::from_state_action(&q, transition, q_prev.initial_state())?;
    Ok((
        occupancy,
        DualVarsKnown { dims, values: v },
        SolverDiagnostics {
            iterations,
            grad_norm,
            dual_objective: obj,
        },
    ))
}

// ---------------------------------------------------------------------------
// Unknown transition: interval confidence set
// ---------------------------------------------------------------------------

struct UnknownProblem<'a> {
    dims: Dims,
    prev: &'a [f64],
    scaled_loss: Vec<f64>,
    set: &'a ConfidenceSet,
}

impl UnknownProblem<'_> {
    fn n_mu(&self) -> usize {
        self.dims.sas_len()
    }

    fn vars(&self) -> usize {
        2 * self.n_mu() + (self.dims.horizon - 1) * self.dims.states
    }

    fn beta(&self, x: &[f64], h: usize, s: usize) -> f64 {
        if h == 0 || h >= self.dims.horizon {
            0.0
        } else {
            x[2 * self.n_mu() + (h - 1) * self.dims.states + s]
        }
    }

    fn exponents(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let n = d.states;
        let nm = self.n_mu();
        let (mu_plus, rest) = x.split_at(nm);
        let mu_minus = &rest[..nm];
        let center = self.set.center().as_slice();
        let radius = self.set.radius();
        let mut b = vec![0.0; d.sas_len()];
        for (h, s, a) in d.state_actions() {
            let start = d.sas(h, s, a, 0);
            let row = start..start + n;
            // e-part from the radii and the p̄-weighted v of the row
            let mut shared = -self.scaled_loss[d.sa(h, s, a)] - self.beta(x, h, s);
            for i in row.clone() {
                let v = mu_minus[i] - mu_plus[i];
                shared += (mu_minus[i] + mu_plus[i]) * radius[i] - center[i] * v;
            }
            for (next, i) in row.enumerate() {
                b[i] = shared + (mu_minus[i] - mu_plus[i]) + self.beta(x, h + 1, next);
            }
        }
        b
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dims;
        let b = self.exponents(x);
        let layer = d.states * d.actions * d.states;
        let mut total = 0.0;
        let mut q = vec![0.0; d.sas_len()];
        for h in 0..d.horizon {
            let range = h * layer..(h + 1) * layer;
            let log_z = log_partition(&self.prev[range.clone()], &b[range.clone()]);
            total += log_z;
            for i in range {
                if self.prev[i] > 0.0 {
                    q[i] = self.prev[i] * (b[i] - log_z).exp();
                }
            }
        }
        (total, q)
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let n = d.states;
        let nm = self.n_mu();
        let center = self.set.center().as_slice();
        let radius = self.set.radius();
        let mut g = vec![0.0; self.vars()];
        for (h, s, a) in d.state_actions() {
            let start = d.sas(h, s, a, 0);
            let mass: f64 = q[start..start + n].iter().sum();
            for next in 0..n {
                let i = start + next;
                g[i] = mass * (radius[i] + center[i]) - q[i];
                g[nm + i] = mass * (radius[i] - center[i]) + q[i];
                if h + 1 < d.horizon {
                    g[2 * nm + h * n + next] += q[i];
                }
            }
            if h >= 1 {
                g[2 * nm + (h - 1) * n + s] -= mass;
            }
        }
        g
    }

    /// Nonzeros of `∂B_i/∂x` for the entry `i = (h, s, a, s')`.
    fn jacobian_row(&self, h: usize, s: usize, a: usize, next: usize, out: &mut Vec<(usize, f64)>) {
        let d = self.dims;
        let nm = self.n_mu();
        let center = self.set.center().as_slice();
        let radius = self.set.radius();
        out.clear();
        let start = d.sas(h, s, a, 0);
        for y in 0..d.states {
            let i = start + y;
            let hit = if y == next { 1.0 } else { 0.0 };
            out.push((i, radius[i] + center[i] - hit));
            out.push((nm + i, radius[i] - center[i] + hit));
        }
        if h >= 1 {
            out.push((2 * nm + (h - 1) * d.states + s, -1.0));
        }
        if h + 1 < d.horizon {
            out.push((2 * nm + h * d.states + next, 1.0));
        }
    }

    /// `Σ_h Cov_{q̃_h}(∂B/∂x)`, dense row-major.
    fn hessian(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let n = self.vars();
        let mut hess = vec![0.0; n * n];
        let mut row = Vec::with_capacity(2 * d.states + 2);
        let mut mean = vec![0.0; n];
        let mut touched = Vec::new();
        for h in 0..d.horizon {
            mean.iter_mut().for_each(|m| *m = 0.0);
            touched.clear();
            for s in 0..d.states {
                for a in 0..d.actions {
                    for next in 0..d.states {
                        let w = q[d.sas(h, s, a, next)];
                        if w == 0.0 {
                            continue;
                        }
                        self.jacobian_row(h, s, a, next, &mut row);
                        for &(i, ci) in &row {
                            if mean[i] == 0.0 {
                                touched.push(i);
                            }
                            mean[i] += w * ci;
                            for &(j, cj) in &row {
                                hess[i * n + j] += w * ci * cj;
                            }
                        }
                    }
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &i in &touched {
                for &j in &touched {
                    hess[i * n + j] -= mean[i] * mean[j];
                }
            }
        }
        hess
    }

    /// `x − P(x − g)` in sup norm.
    fn projected_grad_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let nm2 = 2 * self.n_mu();
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (xi, gi))| if i < nm2 { (xi - (xi - gi).max(0.0)).abs() } else { gi.abs() })
            .fold(0.0, f64::max)
    }
}

/// Unknown-transition update `argmin_{q ∈ Δ(M, P)} η⟨q, ĉ⟩ + KL(q ‖ q_prev)`.
///
/// Projected Newton on `(μ⁺, μ⁻, β)` from zero: multipliers pinned at zero
/// with a positive gradient form the active set, the rest take a damped
/// Newton step, and the step length is found along the projection arc. A
/// projected gradient step is used whenever the Newton arc fails.
pub fn solve_omd_unknown(
    q_prev: &OccupancyMeasure,
    set: &ConfidenceSet,
    loss: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<(OccupancyMeasure, DualVarsUnknown, SolverDiagnostics)> {
    let dims = q_prev.dims();
    if dims != set.dims() {
        return Err(Error::InvalidInput("occupancy and confidence set dimensions differ".into()));
    }
    check_update_inputs(dims, q_prev.as_slice(), loss, eta)?;
    if !set.is_nonempty() {
        return Err(Error::Structural("confidence set admits no transition function".into()));
    }
    let problem = UnknownProblem {
        dims,
        prev: q_prev.as_slice(),
        scaled_loss: loss.iter().map(|c| eta * c).collect(),
        set,
    };
    let n = problem.vars();
    let nm2 = 2 * problem.n_mu();
    let project = |x: &mut [f64]| x[..nm2].iter_mut().for_each(|m| *m = m.max(0.0));

    let mut x = vec![0.0; n];
    let (mut obj, mut q) = problem.evaluate(&x);
    let mut grad = problem.gradient(&q);
    let mut pg = problem.projected_grad_norm(&x, &grad);
    let mut iterations = 0;
    while pg > cfg.grad_tol {
        if iterations >= cfg.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: pg,
            });
        }
        iterations += 1;

        let eps = pg.min(1e-3);
        let active: Vec<bool> = (0..n).map(|i| i < nm2 && x[i] <= eps && grad[i] > 0.0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let hess = problem.hessian(&q);
        let m = free.len();
        let mut reduced = vec![0.0; m * m];
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                reduced[a * m + b] = hess[i * n + j];
            }
        }
        let scale = 1.0 + (0..m).map(|a| reduced[a * m + a]).fold(0.0, f64::max);
        let rhs: Vec<f64> = free.iter().map(|&i| -grad[i]).collect();
        let mut damping = 1e-10 * scale;
        let mut newton = None;
        for _ in 0..12 {
            let mut h = reduced.clone();
            for a in 0..m {
                h[a * m + a] += damping;
            }
            if let Some(d) = cholesky_solve(&h, &rhs) {
                newton = Some(d);
                break;
            }
            damping *= 100.0;
        }
        let mut dir = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                dir[i] = -grad[i];
            }
        }
        if let Some(d) = &newton {
            for (a, &i) in free.iter().enumerate() {
                dir[i] = d[a];
            }
            center_layers(&mut dir[nm2..], dims.states);
        }

        // Arc search on the Newton direction, then on the plain gradient.
        let mut accepted = None;
        'search: for use_newton in [true, false] {
            if use_newton && newton.is_none() {
                continue;
            }
            let dir: Vec<f64> = if use_newton { dir.clone() } else { grad.iter().map(|g| -g).collect() };
            let mut t = if use_newton { 1.0 } else { 1.0 / scale };
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                project(&mut trial);
                let predicted: f64 = (0..n)
                    .map(|i| {
                        if use_newton && !active[i] {
                            t * grad[i] * dir[i]
                        } else {
                            grad[i] * (trial[i] - x[i])
                        }
                    })
                    .sum();
                let (t_obj, t_q) = problem.evaluate(&trial);
                let t_grad = problem.gradient(&t_q);
                let t_pg = problem.projected_grad_norm(&trial, &t_grad);
                // Near the optimum the decrease drops below rounding in the
                // objective; a full step that halves the residual is kept.
                let sufficient = t_obj < obj && t_obj <= obj + cfg.armijo * predicted.min(0.0);
                let contracting = use_newton && t == 1.0 && t_pg <= 0.5 * pg;
                if t_obj.is_finite() && (sufficient || contracting) {
                    accepted = Some((trial, t_obj, t_q, t_grad, t_pg));
                    break 'search;
                }
                t *= cfg.backtrack;
            }
        }
        let Some((trial, t_obj, t_q, t_grad, t_pg)) = accepted else {
            break;
        };
        x = trial;
        obj = t_obj;
        q = t_q;
        grad = t_grad;
        pg = t_pg;
    }
    if pg > cfg.feasibility_tol {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm: pg,
        });
    }
    let nm = problem.n_mu();
    let duals = DualVarsUnknown {
        dims,
        mu_plus: x[..nm].to_vec(),
        mu_minus: x[nm..2 * nm].to_vec(),
        beta: x[2 * nm..].to_vec(),
    };
    let occupancy = OccupancyMeasure::from_raw(dims, q_prev.initial_state(), q)?;
    Ok((
        occupancy,
        duals,
        SolverDiagnostics {
            iterations,
            grad_norm: pg,
            dual_objective: obj,
        },
    ))
}

/// Reference measure of the FTRL regularizer: uniform over `(s, a, s')` in
/// each layer, with the first layer restricted to the initial state.
pub fn uniform_reference(dims: Dims, initial_state: usize) -> OccupancyMeasure {
    let mut data = vec![0.0; dims.sas_len()];
    let first = 1.0 / (dims.actions * dims.states) as f64;
    let rest = 1.0 / (dims.states * dims.actions * dims.states) as f64;
    for (h, s, a) in dims.state_actions() {
        for next in 0..dims.states {
            data[dims.sas(h, s, a, next)] = match h {
                0 if s == initial_state => first,
                0 => 0.0,
                _ => rest,
            };
        }
    }
    OccupancyMeasure::from_raw(dims, initial_state, data).expect("sized")
}

/// FTRL step `argmin_q ⟨q, L⟩ + (1/η) Σ q ln q` over the decision set.
///
/// Against the uniform reference the entropy and the KL differ by a constant
/// per layer, so this is one mirror step from the reference with loss `L`.
pub fn solve_ftrl(
    cumulative_loss: &[f64],
    decision_set: &ConfidenceSet,
    eta: f64,
    initial_state: usize,
    cfg: &SolverConfig,
) -> Result<(OccupancyMeasure, DualVarsUnknown, SolverDiagnostics)> {
    let reference = uniform_reference(decision_set.dims(), initial_state);
    solve_omd_unknown(&reference, decision_set, cumulative_loss, eta, cfg)
}

/// `η⟨q, ĉ⟩ + KL(q ‖ q_prev)`.
pub fn omd_objective(q: &OccupancyMeasure, q_prev: &OccupancyMeasure, loss: &[f64], eta: f64) -> Result<f64> {
    Ok(eta * q.dot(loss) + crate::mdp::unnormalized_kl(q, q_prev)?)
}

/// `⟨q, L⟩ + (1/η) Σ q ln q`.
pub fn ftrl_objective(q: &OccupancyMeasure, cumulative_loss: &[f64], eta: f64) -> f64 {
    let entropy: f64 = q.as_slice().iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum();
    q.dot(cumulative_loss) + entropy / eta
}

/// Both sides of `Σ_h KL(q^k_h ‖ q^{k+1}_h) ≤ (η²/2) Σ q^k_h(s,a) ĉ_h(s,a)²`
/// on state-action marginals, for a known-transition step with batch loss `ĉ`.
pub fn kl_stability_check(
    q_k: &OccupancyMeasure,
    q_next: &OccupancyMeasure,
    batch_loss: &[f64],
    eta: f64,
) -> Result<(f64, f64)> {
    let dims = q_k.dims();
    if q_next.dims() != dims || batch_loss.len() != dims.sa_len() {
        return Err(Error::InvalidInput("dimension mismatch in stability check".into()));
    }
    let before = q_k.state_action_table();
    let after = q_next.state_action_table();
    let mut lhs = 0.0;
    for (i, (&x, &y)) in before.iter().zip(&after).enumerate() {
        if x > 0.0 {
            if y <= 0.0 {
                let (h, rest) = (i / (dims.states * dims.actions), i % (dims.states * dims.actions));
                return Err(Error::InfiniteDivergence {
                    layer: h,
                    state: rest / dims.actions,
                    action: rest % dims.actions,
                    next: None,
                });
            }
            lhs += x * (x / y).ln();
        }
        lhs += y - x;
    }
    let rhs = 0.5 * eta * eta * before.iter().zip(batch_loss).map(|(q, c)| q * c * c).sum::<f64>();
    Ok((lhs, rhs))
}

/// Residuals of the optimality conditions of an unknown-transition update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub flow: f64,
    pub normalization: f64,
    /// Largest violation of an interval constraint.
    pub primal: f64,
    /// Largest `μ · |slack|` over active multipliers.
    pub complementary: f64,
    pub dual_sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.flow, self.normalization, self.primal, self.complementary, self.dual_sign]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(q: &OccupancyMeasure, duals: &DualVarsUnknown, set: &ConfidenceSet) -> KktResiduals {
    let d = q.dims();
    let report = crate::mdp::validate_occupancy(q, 0.0);
    let mut out = KktResiduals::default();
    for v in &report.violations {
        match v {
            crate::mdp::OccupancyViolation::Flow { residual, .. } => out.flow = out.flow.max(residual.abs()),
            crate::mdp::OccupancyViolation::Normalization { deviation, .. } => {
                out.normalization = out.normalization.max(deviation.abs())
            }
            _ => {}
        }
    }
    out.primal = set.occupancy_violation(q).max(0.0);
    for (h, s, a) in d.state_actions() {
        let mass = q.state_action(h, s, a);
        for next in 0..d.states {
            let i = d.sas(h, s, a, next);
            let c = set.center().as_slice()[i];
            let r = set.radius()[i];
            let x = q.as_slice()[i];
            let upper_slack = (c + r) * mass - x;
            let lower_slack = x - (c - r) * mass;
            out.complementary = out
                .complementary
                .max(duals.mu_plus[i] * upper_slack.abs())
                .max(duals.mu_minus[i] * lower_slack.abs());
            out.dual_sign = out.dual_sign.max(-duals.mu_plus[i]).max(-duals.mu_minus[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{occupancy_from, validate_occupancy, MdpSpec, Policy};
    use crate::rng::stream;

    #[test]
    fn zero_loss_is_identity_known() {
        let d = Dims::new(3, 2, 3).unwrap();
        let mut rng = stream(1, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let q = occupancy_from(&Policy::random(d, &mut rng), mdp.transition(), 0).unwrap();
        let (next, v, diag) =
            solve_oreps_known(&q, mdp.transition(), &vec![0.0; d.sa_len()], 0.3, &SolverConfig::default()).unwrap();
        assert_eq!(diag.iterations, 0);
        for (a, b) in next.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((0..3).all(|h| (0..3).all(|s| v.get(h, s) == 0.0)));
    }

    #[test]
    fn bandit_known_update_is_exponential_weights() {
        let d = Dims::new(1, 4, 1).unwrap();
        let p = crate::mdp::Transition::uniform(d);
        let prev = OccupancyMeasure::from_raw(d, 0, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let loss = vec![1.0, 0.0, 2.5, 0.3];
        let eta = 0.7;
        let (next, _, _) = solve_oreps_known(&prev, &p, &loss, eta, &SolverConfig::default()).unwrap();
        let w: Vec<f64> = prev.as_slice().iter().zip(&loss).map(|(q, c)| q * (-eta * c).exp()).collect();
        let z: f64 = w.iter().sum();
        for (x, y) in next.as_slice().iter().zip(&w) {
            assert!((x - y / z).abs() < 1e-15);
        }
    }

    #[test]
    fn known_update_is_feasible() {
        let d = Dims::new(3, 2, 4).unwrap();
        let mut rng = stream(2, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let q = occupancy_from(&Policy::uniform(d), mdp.transition(), 0).unwrap();
        let loss: Vec<f64> = (0..d.sa_len()).map(|i| if i % 5 == 0 { 3.0 } else { 0.0 }).collect();
        let (next, _, diag) = solve_oreps_known(&q, mdp.transition(), &loss, 0.5, &SolverConfig::default()).unwrap();
        assert!(diag.iterations > 0);
        assert!(validate_occupancy(&next, 1e-8).is_valid());
    }

    #[test]
    fn zero_loss_is_identity_unknown() {
        let d = Dims::new(2, 2, 3).unwrap();
        let mut rng = stream(3, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let q = occupancy_from(&Policy::random(d, &mut rng), mdp.transition(), 0).unwrap();
        let set = ConfidenceSet::trivial(d);
        let (next, duals, diag) =
            solve_omd_unknown(&q, &set, &vec![0.0; d.sa_len()], 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(diag.iterations, 0);
        assert!(duals.is_zero());
        assert_eq!(next.as_slice(), q.as_slice());
    }

    #[test]
    fn unknown_update_respects_tight_set() {
        let d = Dims::new(2, 2, 2).unwrap();
        let mut rng = stream(4, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let radius = vec![0.05; d.sas_len()];
        let set = ConfidenceSet::from_parts(mdp.transition().clone(), radius).unwrap();
        let prev = uniform_reference(d, 0);
        let loss: Vec<f64> = (0..d.sa_len()).map(|i| (i % 3) as f64).collect();
        let (q, duals, _) = solve_omd_unknown(&prev, &set, &loss, 1.0, &SolverConfig::default()).unwrap();
        assert!(validate_occupancy(&q, 1e-7).is_valid());
        assert!(set.occupancy_violation(&q) <= 1e-7);
        assert!(kkt_residuals(&q, &duals, &set).max() <= 1e-6);
    }

    #[test]
    fn ftrl_zero_loss_bandit_is_uniform() {
        let d = Dims::new(1, 3, 1).unwrap();
        let (q, _, _) =
            solve_ftrl(&[0.0; 3], &ConfidenceSet::trivial(d), 0.5, 0, &SolverConfig::default()).unwrap();
        for x in q.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cholesky_small_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        assert!(cholesky_solve(&[0.0], &[1.0]).is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = Dims::new(1, 2, 1).unwrap();
        let q = OccupancyMeasure::from_raw(d, 0, vec![0.5, 0.5]).unwrap();
        let p = crate::mdp::Transition::uniform(d);
        let cfg = SolverConfig::default();
        assert!(solve_oreps_known(&q, &p, &[1.0], 1.0, &cfg).is_err());
        assert!(solve_oreps_known(&q, &p, &[1.0, -1.0], 1.0, &cfg).is_err());
        assert!(solve_oreps_known(&q, &p, &[1.0, 1.0], 0.0, &cfg).is_err());
    }
}
