//! Correlate the shipped 17-model accuracy table.

use std::path::Path;

use abduct_rank::stats::{ranked_table, read_runs_csv};
use abduct_rank::{correlate_runs, Result};

pub fn run_example() -> Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/table1.csv");
    let runs = read_runs_csv(&path)?;
    print!("{}", ranked_table(&runs));

    let report = correlate_runs(&runs)?;
    println!();
    println!("pearson  r   = {:.4}  p = {:.4}", report.pearson_r, report.pearson_p);
    println!(
        "spearman rho = {:.4}  p = {:.4}",
        report.spearman_rho, report.spearman_p
    );
    if let Some(speedup) = report.mean_speedup {
        println!("classification takes {speedup:.0}x longer on average");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
