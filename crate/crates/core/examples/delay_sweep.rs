//! Regret against total delay for the known-transition learner, driven by a
//! sweep config. Prints the growth exponent of the delay penalty.

use delayed_mdp::bench::{aggregate, run_sweep};
use delayed_mdp::config::SweepConfig;

fn main() -> delayed_mdp::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/delay_sweep.json");
    let sweep = SweepConfig::load(path.as_ref())?;
    let mut points = Vec::new();
    for (cfg, records) in run_sweep(&sweep)? {
        let agg = aggregate(&records)?;
        let total_delay = records[0].summary.total_delay as f64;
        println!("{:<24} D = {:>8} mean R_K = {:>8.2}", cfg.name, total_delay, agg.final_mean);
        points.push((total_delay, agg.final_mean));
    }

    // log-log slope of R(D) - R(0) between the two delayed points
    if let [(_, r0), (d1, r1), (d2, r2)] = points[..] {
        if r1 > r0 && r2 > r0 {
            let slope = ((r2 - r0) / (r1 - r0)).ln() / (d2 / d1).ln();
            println!("delay penalty grows like D^{slope:.2}");
        }
    }
    Ok(())
}
