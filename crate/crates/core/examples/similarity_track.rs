//! Score a pooled embedding store on the similarity track.
//!
//! Each instance picks the hypothesis whose embedding has the larger cosine
//! with the observation pair. No training is involved.

use abduct_rank::synth::SyntheticEncoder;
use abduct_rank::{evaluate_sim, predict_sim, Result};

pub fn run_example() -> Result<()> {
    let encoder = SyntheticEncoder::new("synthetic/base", 64, 0.4, 11);
    let (store, labels) = encoder.generate(500, 1)?;

    let single = predict_sim(&[1.0, 0.0, 0.0], &[0.9, 0.1, 0.0], &[0.0, 1.0, 0.0])?;
    println!(
        "toy instance: chose H{} (scores {:.3} vs {:.3})",
        single.choice, single.score_h1, single.score_h2
    );

    let result = evaluate_sim(&store, &labels, true)?;
    println!(
        "{}: similarity accuracy {:.2}% over {} instances in {:.4}s",
        result.model_id,
        100.0 * result.accuracy,
        result.n,
        result.wall_seconds
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
