//! Runs acceptance suites by name: `cargo run --release --example run_checks -- comp-uob`.

use delayed_mdp::checks::run_suite;

fn main() -> delayed_mdp::Result<()> {
    let names: Vec<String> = std::env::args().skip(1).collect();
    let names = if names.is_empty() { vec!["all".to_string()] } else { names };
    for name in names {
        for result in run_suite(&name)? {
            println!("{result}");
        }
    }
    Ok(())
}
