//! Run a bundled config and print the regret curve at a few checkpoints.
//!
//! ```text
//! cargo run --release --example quickstart [path/to/config.json]
//! ```

use std::path::PathBuf;

use delayed_mdp::bench::{aggregate, run_all};
use delayed_mdp::config::ExperimentConfig;

fn main() -> delayed_mdp::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quickstart.json")));
    let cfg = ExperimentConfig::load(&path)?;
    let records = run_all(&cfg)?;
    for r in &records {
        let s = &r.summary;
        println!("{}: regret {:.2}, total delay {}, {:.2}s", s.run_id, s.regret, s.total_delay, s.wall_time_secs);
    }

    let agg = aggregate(&records)?;
    println!("\n{:>8} {:>10} {:>10}", "k", "mean R_k", "R_k / k");
    for k in [10, 100, 500, 1000, agg.episodes] {
        if k <= agg.episodes {
            let m = agg.mean[k - 1];
            println!("{k:>8} {m:>10.3} {:>10.4}", m / k as f64);
        }
    }
    Ok(())
}
