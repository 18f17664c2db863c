//! All four learners on the same environment, built in code instead of JSON.

use delayed_mdp::adversary::{CostGenerator, DelayKind};
use delayed_mdp::bench::{aggregate, run_all};
use delayed_mdp::config::{CostConfig, DelayConfig, ExperimentConfig, LearnerConfig, MdpSource};
use delayed_mdp::learners::Algorithm;

fn main() -> delayed_mdp::Result<()> {
    let episodes = 3000;
    println!("{:<12} {:>8} {:>8} {:>10} {:>9}", "algorithm", "eta", "gamma", "mean R_K", "IQR");
    for algorithm in Algorithm::ALL {
        let cfg = ExperimentConfig {
            name: format!("compare-{algorithm}"),
            mdp: MdpSource::LayeredRandom {
                states: 2,
                actions: 2,
                horizon: 3,
                seed: Some(7),
            },
            costs: CostConfig {
                generator: CostGenerator::Switching { period: 150 },
                seed: None,
            },
            delays: DelayConfig {
                kind: DelayKind::UniformRandom { max: 40 },
                seed: None,
            },
            learner: LearnerConfig::new(algorithm),
            episodes,
            seeds: (1..=4).collect(),
            exact_expected_cost: true,
            output_dir: None,
        };
        let records = run_all(&cfg)?;
        let agg = aggregate(&records)?;
        let s = &records[0].summary;
        println!(
            "{:<12} {:>8.4} {:>8.4} {:>10.2} {:>9.2}",
            algorithm.name(),
            s.eta,
            s.gamma,
            agg.final_mean,
            agg.final_iqr
        );
    }
    Ok(())
}
