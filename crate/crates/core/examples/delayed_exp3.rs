//! The degenerate case S = H = 1: every learner collapses to delayed EXP3.
//! Prints the arm weights of the known-transition learner under bursty delays.

use delayed_mdp::adversary::{generate_delays, CostGenerator, CostSequence, DelayKind};
use delayed_mdp::bench::Environment;
use delayed_mdp::estimators::EstimatorKind;
use delayed_mdp::learners::{DelayedOreps, Tuning};
use delayed_mdp::mdp::{Dims, MdpSpec, Transition};
use delayed_mdp::occupancy_opt::SolverConfig;

fn main() -> delayed_mdp::Result<()> {
    let dims = Dims::new(1, 3, 1)?;
    let mdp = MdpSpec::new(Transition::uniform(dims), 0)?;
    let episodes = 1000;
    // arm 0 is cheap in expectation; delays spike every 100 episodes
    let table = vec![0.2, 0.5, 0.8];
    let costs = CostSequence::generate(&CostGenerator::FixedTable { table }, dims, episodes, 1)?;
    let delays = generate_delays(&DelayKind::Spike { base: 0, height: 50, period: 100 }, episodes, 1)?;
    let tuning = Tuning {
        eta: 0.05,
        gamma: 0.01,
        delta: 0.1,
        episodes,
    };
    let mut learner = DelayedOreps::new(mdp.clone(), tuning, SolverConfig::default(), EstimatorKind::DelayAdapted)?;
    let mut env = Environment::new(&mdp, &costs, &delays, 1, true)?;
    while !env.is_done() {
        let out = env.step(&mut learner)?;
        if out.k % 100 == 0 {
            let w = learner.policy().row(0, 0);
            println!("k={:>4} d_k={:>2} weights [{:.3}, {:.3}, {:.3}]", out.k, delays.delay(out.k), w[0], w[1], w[2]);
        }
    }
    Ok(())
}
