//! Runs the invariant checks on part of the built-in battery with the quick settings.

use asip::battery;
use asip::verify::{self, VerifyConfig};

fn main() -> asip::Result<()> {
    let chains: Vec<_> = battery::battery_chains()?.into_iter().take(6).collect();
    let report = verify::run_all(&chains, &VerifyConfig::quick())?;
    for check in &report.checks {
        println!("{}", check.line());
    }
    println!("hard failures: {}", report.hard_failures);
    Ok(())
}
