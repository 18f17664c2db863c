//! How the Bernstein confidence set tightens with data, and what the
//! upper occupancy bound of a fixed policy looks like inside it.

use delayed_mdp::adversary::play_episode;
use delayed_mdp::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use delayed_mdp::mdp::{state_action_occupancy, Dims, MdpSpec, Policy};
use delayed_mdp::occupancy_opt::comp_uob;
use delayed_mdp::rng::stream;

fn main() -> delayed_mdp::Result<()> {
    let dims = Dims::new(3, 2, 3)?;
    let mut rng = stream(5, "confidence-example");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let policy = Policy::uniform(dims);
    let truth = state_action_occupancy(&policy, mdp.transition(), 0)?;
    let episodes = 20_000;

    let mut counters = VisitCounters::new(dims);
    let mut k = 0;
    println!("{:>7} {:>12} {:>10} {:>14}", "k", "mean radius", "p in set", "sum(u - q)");
    for checkpoint in [10, 100, 1000, 10_000, episodes] {
        while k < checkpoint {
            k += 1;
            counters.update(&play_episode(k, &policy, &mdp, &mut rng), CounterKind::Immediate);
        }
        let set = ConfidenceSet::build(&counters, CounterKind::Immediate, 0.1, episodes, k + 1)?;
        // unvisited rows carry a vacuous radius; average over the rest
        let visited: Vec<f64> = dims
            .state_actions()
            .filter(|&(h, s, a)| counters.pair(CounterKind::Immediate, h, s, a) > 0)
            .flat_map(|(h, s, a)| set.effective_radius(h, s, a))
            .collect();
        let mean_radius = visited.iter().sum::<f64>() / visited.len().max(1) as f64;
        let u = comp_uob(&policy, &set, 0)?;
        let slack: f64 = u.iter().zip(&truth).map(|(u, q)| u - q).sum();
        println!("{k:>7} {mean_radius:>12.4} {:>10} {slack:>14.4}", set.contains(mdp.transition()));
    }
    Ok(())
}
