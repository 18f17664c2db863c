//! Upper occupancy bounds over an interval confidence set.

use crate::confidence::ConfidenceSet;
use crate::error::{Error, Result};
use crate::mdp::Policy;

/// `max_{p ∈ box ∩ simplex} Σ p(s') value(s')`: start every entry at its lower
/// bound, then pour the remaining mass into the most valuable successors.
fn greedy_row_max(lo: &[f64], hi: &[f64], value: &[f64], order: &mut Vec<usize>) -> f64 {
    order.clear();
    order.extend(0..value.len());
    order.sort_by(|&i, &j| value[j].total_cmp(&value[i]));
    let mut budget = 1.0 - lo.iter().sum::<f64>();
    let mut total: f64 = lo.iter().zip(value).map(|(l, v)| l * v).sum();
    for &i in order.iter() {
        if budget <= 0.0 {
            break;
        }
        let add = (hi[i] - lo[i]).min(budget);
        total += add * value[i];
        budget -= add;
    }
    total
}

/// `u_h(s,a) = max_{p' ∈ P} q^{π,p'}_h(s,a)`.
///
/// For each target `(h, s)` a backward dynamic program computes the largest
/// probability of reaching it, letting every row pick its transition from the
/// box independently; that is exact because the set is a product of rows.
pub fn comp_uob(policy: &Policy, set: &ConfidenceSet, initial_state: usize) -> Result<Vec<f64>> {
    let dims = policy.dims();
    if dims != set.dims() {
        return Err(Error::InvalidInput("policy and confidence set dimensions differ".into()));
    }
    if initial_state >= dims.states {
        return Err(Error::InvalidInput("initial state out of range".into()));
    }
    let n = dims.states;
    let bounds: Vec<(Vec<f64>, Vec<f64>)> = dims
        .state_actions()
        .map(|(h, s, a)| set.row_bounds(h, s, a))
        .collect();
    let mut u = vec![0.0; dims.sa_len()];
    let mut order = Vec::with_capacity(n);
    let mut value = vec![0.0; n];
    let mut prev = vec![0.0; n];
    for target_h in 0..dims.horizon {
        for target_s in 0..n {
            let reach = if target_h == 0 {
                if target_s == initial_state { 1.0 } else { 0.0 }
            } else {
                value.iter_mut().enumerate().for_each(|(s, v)| *v = f64::from(u8::from(s == target_s)));
                for h in (0..target_h).rev() {
                    for s in 0..n {
                        prev[s] = (0..dims.actions)
                            .map(|a| {
                                let pi = policy.prob(h, s, a);
                                if pi == 0.0 {
                                    return 0.0;
                                }
                                let (lo, hi) = &bounds[dims.sa(h, s, a)];
                                pi * greedy_row_max(lo, hi, &value, &mut order)
                            })
                            .sum();
                    }
                    std::mem::swap(&mut value, &mut prev);
                }
                value[initial_state]
            };
            for a in 0..dims.actions {
                u[dims.sa(target_h, target_s, a)] = (policy.prob(target_h, target_s, a) * reach).min(1.0);
            }
        }
    }
    Ok(u)
}

/// `Σ_π ω(π) u^π`: an entrywise upper bound on the coupled mixture maximum.
pub fn mixture_uob(weights: &[f64], per_policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != per_policy.len() || per_policy.is_empty() {
        return Err(Error::InvalidInput("one bound table per weighted policy is required".into()));
    }
    let mut out = vec![0.0; per_policy[0].len()];
    for (w, table) in weights.iter().zip(per_policy) {
        if *w == 0.0 {
            continue;
        }
        out.iter_mut().zip(table).for_each(|(o, u)| *o += w * u);
    }
    out.iter_mut().for_each(|x| *x = x.min(1.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{state_action_occupancy, Dims, MdpSpec};
    use crate::rng::stream;

    #[test]
    fn greedy_pushes_mass_to_best_successor() {
        let mut order = Vec::new();
        let v = greedy_row_max(&[0.1, 0.2, 0.0], &[0.5, 0.6, 0.9], &[1.0, 0.0, 2.0], &mut order);
        // 0.1*1 + 0.2*0 + remaining 0.7 into successor 2
        assert!((v - (0.1 + 0.7 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn singleton_set_gives_true_occupancy() {
        let d = Dims::new(3, 2, 4).unwrap();
        let mut rng = stream(8, "test");
        let mdp = MdpSpec::layered_random(d, &mut rng);
        let pi = Policy::random(d, &mut rng);
        let set = ConfidenceSet::singleton(mdp.transition());
        let u = comp_uob(&pi, &set, 0).unwrap();
        let q = state_action_occupancy(&pi, mdp.transition(), 0).unwrap();
        for (x, y) in u.iter().zip(&q) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_set_reaches_everything() {
        let d = Dims::new(2, 2, 3).unwrap();
        let pi = Policy::uniform(d);
        let u = comp_uob(&pi, &ConfidenceSet::trivial(d), 0).unwrap();
        assert_eq!(u[d.sa(0, 0, 0)], 0.5);
        assert_eq!(u[d.sa(0, 1, 0)], 0.0);
        assert_eq!(u[d.sa(2, 1, 1)], 0.5);
    }

    #[test]
    fn point_mass_mixture_is_policy_bound() {
        let d = Dims::new(2, 2, 2).unwrap();
        let set = ConfidenceSet::trivial(d);
        let a = comp_uob(&Policy::deterministic(d, &[0, 1, 1, 0]).unwrap(), &set, 0).unwrap();
        let b = comp_uob(&Policy::deterministic(d, &[1, 1, 0, 0]).unwrap(), &set, 0).unwrap();
        assert_eq!(mixture_uob(&[1.0, 0.0], &[a.clone(), b]).unwrap(), a);
    }
}
