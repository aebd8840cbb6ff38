//! Runs the acceptance suite twice with seed 42 and prints one line per criterion.

use qoracle::suite::{criterion_12, run_acceptance};

const SEED: u64 = 42;

fn main() {
    let first = run_acceptance(SEED).expect("suite runs");
    let second = run_acceptance(SEED).expect("suite runs again");
    let determinism = criterion_12(&first.payload().unwrap(), &second.payload().unwrap());

    let mut lines = first.lines();
    lines.push(format!(
        "criterion 12 {} {}: {}",
        if determinism.passed { "PASS" } else { "FAIL" },
        determinism.name,
        determinism.detail
    ));
    for (line, secs) in lines.iter().zip(first.seconds.iter().map(Some).chain(std::iter::repeat(None))) {
        match secs {
            Some(s) => println!("{line} [{s:.1}s]"),
            None => println!("{line}"),
        }
    }
    for row in &first.ordering {
        println!("ordering: {row:?}");
    }

    let failed: Vec<u32> = first.criteria.iter().chain([&determinism]).filter(|c| !c.passed).map(|c| c.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
