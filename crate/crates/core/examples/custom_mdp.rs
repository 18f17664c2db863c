//! A hand-written MDP driven episode by episode, without the config layer.
//!
//! Shows the learner protocol directly: the environment releases each
//! packet `d^k` episodes late and the learner only ever sees arrivals.

use delayed_mdp::adversary::{generate_delays, CostGenerator, CostSequence, DelayKind};
use delayed_mdp::bench::{best_in_hindsight, Environment};
use delayed_mdp::estimators::EstimatorKind;
use delayed_mdp::learners::{DelayedOreps, Tuning};
use delayed_mdp::mdp::{Dims, MdpSpec, Transition};
use delayed_mdp::occupancy_opt::SolverConfig;

fn main() -> delayed_mdp::Result<()> {
    let dims = Dims::new(3, 2, 3)?;
    // action 0 drifts right, action 1 stays put
    let mut p = Transition::uniform(dims);
    for (h, s, a) in dims.state_actions() {
        let row = p.row_mut(h, s, a);
        row.fill(0.05);
        let target = if a == 0 { (s + 1).min(2) } else { s };
        row[target] = 0.9;
    }
    let mdp = MdpSpec::new(p, 0)?;

    let episodes = 4000;
    let costs = CostSequence::generate(&CostGenerator::Switching { period: 500 }, dims, episodes, 3)?;
    let delays = generate_delays(&DelayKind::Spike { base: 2, height: 80, period: 400 }, episodes, 3)?;
    let tuning = Tuning {
        eta: 0.02,
        gamma: 0.01,
        delta: 0.1,
        episodes,
    };
    let mut learner = DelayedOreps::new(mdp.clone(), tuning, SolverConfig::default(), EstimatorKind::DelayAdapted)?;

    let mut env = Environment::new(&mdp, &costs, &delays, 3, true)?;
    let mut cumulative = 0.0;
    let mut waiting = 0usize;
    while !env.is_done() {
        let out = env.step(&mut learner)?;
        cumulative += out.expected_cost;
        waiting += 1;
        waiting -= out.arrivals.len();
        if out.k % 800 == 0 {
            println!(
                "k={:>5} cumulative cost {:>8.2} packets in flight {:>3} solver iterations {:?}",
                out.k, cumulative, waiting, out.diagnostics.solver_iterations
            );
        }
    }
    let (_, best) = best_in_hindsight(&costs, &mdp)?;
    println!("regret {:.2} against the best fixed policy ({best:.2})", cumulative - best);
    println!("final policy at layer 0: {:?}", learner.policy().row(0, 0));
    Ok(())
}
