//! Rank a family of synthetic encoders by similarity accuracy and check how
//! well that ranking predicts their trained-head accuracy.

use abduct_rank::stats::ranked_table;
use abduct_rank::synth::SyntheticEncoder;
use abduct_rank::{correlate_runs, evaluate_clf, evaluate_sim, train_head, ModelRun, Result, TrainConfig};

pub fn run_example() -> Result<()> {
    let mut runs = Vec::new();
    for k in 0..10 {
        let noise = 0.1 + 0.15 * k as f64;
        let encoder = SyntheticEncoder::new(format!("synthetic/noise-{noise:.2}"), 32, noise, 100 + k);
        let (train, train_labels) = encoder.generate(800, 1)?;
        let (dev, dev_labels) = encoder.generate(300, 2)?;

        let sim = evaluate_sim(&dev, &dev_labels, false)?;
        let (head, history) = train_head(&train, &train_labels, &TrainConfig::new(0.5, 16, 7))?;
        let clf = evaluate_clf(&head, &dev, &dev_labels, false)?;
        runs.push(ModelRun {
            model_id: encoder.model_id,
            sim_accuracy: 100.0 * sim.accuracy,
            clf_accuracy: 100.0 * clf.accuracy,
            sim_seconds: sim.wall_seconds,
            clf_seconds: history.wall_seconds + clf.wall_seconds,
        });
    }
    print!("{}", ranked_table(&runs));
    let report = correlate_runs(&runs)?;
    println!(
        "\npearson r = {:.3}, spearman rho = {:.3}",
        report.pearson_r, report.spearman_rho
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
