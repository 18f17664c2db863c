//! Library outputs against brute force and simulation.

use delayed_mdp::adversary::{play_episode, CostGenerator, CostSequence, FeedbackPacket};
use delayed_mdp::bench::{best_in_hindsight, run_experiment, write_csv};
use delayed_mdp::confidence::{ConfidenceSet, CounterKind, VisitCounters};
use delayed_mdp::config::ExperimentConfig;
use delayed_mdp::estimators::standard_estimator;
use delayed_mdp::mdp::{state_action_occupancy, value_of, CostFunction, Dims, MdpSpec, Policy};
use delayed_mdp::occupancy_opt::comp_uob;
use delayed_mdp::rng::stream;

fn deterministic_policies(dims: Dims) -> Vec<Policy> {
    let slots = dims.states * dims.horizon;
    let total = dims.actions.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let choice: Vec<usize> = (0..slots)
                .map(|_| {
                    let a = code % dims.actions;
                    code /= dims.actions;
                    a
                })
                .collect();
            Policy::deterministic(dims, &choice).unwrap()
        })
        .collect()
}

#[test]
fn occupancy_matches_visit_frequencies() {
    let dims = Dims::new(3, 2, 3).unwrap();
    let mut rng = stream(1, "mc");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let pi = Policy::random(dims, &mut rng);
    let q = state_action_occupancy(&pi, mdp.transition(), 0).unwrap();
    let n = 200_000;
    let mut freq = vec![0.0; dims.sa_len()];
    for k in 1..=n {
        for (h, s, a, _) in play_episode(k, &pi, &mdp, &mut rng).steps() {
            freq[dims.sa(h, s, a)] += 1.0 / n as f64;
        }
    }
    for (f, q) in freq.iter().zip(&q) {
        // five standard errors of a Bernoulli mean
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((f - q).abs() <= 5.0 * se + 1e-12, "frequency {f} vs occupancy {q}");
    }
}

#[test]
fn estimator_mean_matches_its_bias_formula() {
    let dims = Dims::new(2, 2, 2).unwrap();
    let mut rng = stream(2, "mc");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let pi = Policy::random(dims, &mut rng);
    let cost = CostFunction::random(dims, &mut rng);
    let q = state_action_occupancy(&pi, mdp.transition(), 0).unwrap();
    let gamma = 0.05;
    let n = 200_000;
    let mut mean = vec![0.0; dims.sa_len()];
    for k in 1..=n {
        let packet = FeedbackPacket::observe(&cost, &play_episode(k, &pi, &mdp, &mut rng));
        let est = standard_estimator(dims, &packet, &q, gamma).unwrap();
        for (m, v) in mean.iter_mut().zip(&est.values) {
            *m += v / n as f64;
        }
    }
    for (i, m) in mean.iter().enumerate() {
        let c = cost.as_slice()[i];
        let expect = q[i] * c / (q[i] + gamma);
        let se = c / (q[i] + gamma) * (q[i] * (1.0 - q[i]) / n as f64).sqrt();
        assert!((m - expect).abs() <= 5.0 * se + 1e-12, "entry {i}: {m} vs {expect}");
    }
}

#[test]
fn hindsight_comparator_matches_enumeration() {
    let dims = Dims::new(2, 3, 3).unwrap();
    let mut rng = stream(3, "oracle");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let costs = CostSequence::generate(&CostGenerator::Switching { period: 7 }, dims, 40, 3).unwrap();
    let brute = deterministic_policies(dims)
        .iter()
        .map(|pi| costs.iter().map(|c| value_of(pi, mdp.transition(), c).unwrap().get(0, 0)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let (_, best) = best_in_hindsight(&costs, &mdp).unwrap();
    assert!((best - brute).abs() < 1e-9, "{best} vs {brute}");
}

#[test]
fn upper_bound_covers_every_deterministic_policy_under_truth() {
    let dims = Dims::new(2, 2, 3).unwrap();
    let mut rng = stream(4, "oracle");
    let mdp = MdpSpec::layered_random(dims, &mut rng);
    let mut counters = VisitCounters::new(dims);
    for k in 1..=300 {
        counters.update(&play_episode(k, &Policy::uniform(dims), &mdp, &mut rng), CounterKind::Immediate);
    }
    let set = ConfidenceSet::build(&counters, CounterKind::Immediate, 0.1, 1000, 301).unwrap();
    assert!(set.contains(mdp.transition()));
    for pi in deterministic_policies(dims) {
        let u = comp_uob(&pi, &set, 0).unwrap();
        let q = state_action_occupancy(&pi, mdp.transition(), 0).unwrap();
        assert!(u.iter().zip(&q).all(|(u, q)| u + 1e-12 >= *q));
    }
}

#[test]
fn identical_configs_give_identical_csv_bytes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quickstart.json");
    let cfg = ExperimentConfig::load(path.as_ref()).unwrap();
    let bytes = |seed| {
        let mut out = Vec::new();
        write_csv(&run_experiment(&cfg, seed).unwrap(), &mut out).unwrap();
        out
    };
    let first = bytes(5);
    assert_eq!(first, bytes(5));
    assert_ne!(first, bytes(6));
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), cfg.episodes + 1);
}
