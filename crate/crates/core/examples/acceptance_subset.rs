//! Run selected acceptance criteria and print every check.
//! Usage: cargo run --release --example acceptance_subset -- 1 4 6

use anyhow::{Context, Result};
use massflow::acceptance::{run_criterion, AcceptanceOptions};

fn main() -> Result<()> {
    let ids = std::env::args()
        .skip(1)
        .map(|a| {
            a.parse::<usize>()
                .with_context(|| format!("bad criterion number {a:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = if ids.is_empty() { vec![1, 4] } else { ids };
    let opts = AcceptanceOptions::new(std::env::temp_dir().join("massflow-acceptance"));
    for id in ids {
        let r = run_criterion(id, &opts);
        println!("{}", r.line());
        for c in &r.checks {
            println!("    [{}] {}", if c.passed { "ok" } else { "FAIL" }, c.what);
        }
    }
    Ok(())
}
