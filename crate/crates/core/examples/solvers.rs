//! One mirror-descent step with each dual solver, plus its optimality
//! certificate.

use delayed_mdp::adversary::play_episode;
use delayed_mdp::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use delayed_mdp::mdp::{occupancy_from, unnormalized_kl, validate_occupancy, Dims, MdpSpec, Policy};
use delayed_mdp::occupancy_opt::{kkt_residuals, solve_omd_unknown, solve_oreps_known, SolverConfig};
use delayed_mdp::rng::stream;

fn main() -> delayed_mdp::Result<()> {
    let dims = Dims::new(4, 3, 4)?;
    let mut rng = stream(2, "solver-example");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let q_prev = occupancy_from(&Policy::uniform(dims), mdp.transition(), 0)?;
    // a single delayed packet's worth of loss on one trajectory
    let trajectory = play_episode(1, &Policy::uniform(dims), &mdp, &mut rng);
    let mut loss = vec![0.0; dims.sa_len()];
    for (h, s, a, _) in trajectory.steps() {
        loss[dims.sa(h, s, a)] = 4.0;
    }
    let cfg = SolverConfig::default();

    let (q, _, diag) = solve_oreps_known(&q_prev, mdp.transition(), &loss, 0.5, &cfg)?;
    println!(
        "known transition: {} Newton iterations, gradient {:.1e}, KL moved {:.4}, valid {}",
        diag.iterations,
        diag.grad_norm,
        unnormalized_kl(&q, &q_prev)?,
        validate_occupancy(&q, 1e-6).is_valid()
    );

    let mut counters = VisitCounters::new(dims);
    for k in 1..=200 {
        counters.update(&play_episode(k, &Policy::uniform(dims), &mdp, &mut rng), CounterKind::Immediate);
    }
    let set = ConfidenceSet::build(&counters, CounterKind::Immediate, 0.1, 1000, 201)?;
    let (q, duals, diag) = solve_omd_unknown(&q_prev, &set, &loss, 0.5, &cfg)?;
    let kkt = kkt_residuals(&q, &duals, &set);
    println!(
        "confidence set:   {} projected Newton iterations, gradient {:.1e}, KKT {:.1e}, membership {:.1e}",
        diag.iterations,
        diag.grad_norm,
        kkt.max(),
        set.occupancy_violation(&q)
    );
    Ok(())
}
