//! One line per acceptance criterion. Informational lines do not count
//! toward the exit status.

use std::time::Instant;

use ionize_core::acceptance::{all_passed, run_all};
use ionize_core::AcceptanceOptions;

fn main() {
    let start = Instant::now();
    let outcomes = run_all(&AcceptanceOptions::default());
    for o in &outcomes {
        println!("{o}");
    }
    let counted: Vec<_> = outcomes.iter().filter(|o| o.counted).collect();
    let passed = counted.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} counted checks passed in {:.1} s",
        counted.len(),
        start.elapsed().as_secs_f64()
    );
    if !all_passed(&outcomes) {
        std::process::exit(1);
    }
}
