//! Pick the best learning rate and batch size per model from a manifest.

use std::fs;

use abduct_rank::cli::{cmd_grid, GridArgs};
use abduct_rank::stats::read_runs_csv;
use abduct_rank::synth::SyntheticEncoder;
use abduct_rank::write_embedding_store;
use serde_json::json;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let encoder = SyntheticEncoder::new("synthetic/grid", 32, 0.3, 5);
    let mut paths = Vec::new();
    for (split, n, seed) in [("train", 1000, 1), ("dev", 300, 2)] {
        let (store, labels) = encoder.generate(n, seed)?;
        write_embedding_store(&store, root.join(format!("{split}.emb")))?;
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(root.join(format!("{split}.labels")), text)?;
        paths.push((format!("{split}.emb"), format!("{split}.labels")));
    }

    let manifest = json!({ "models": [{
        "model_id": "synthetic/grid",
        "train_embeddings": paths[0].0, "train_labels": paths[0].1,
        "dev_embeddings": paths[1].0, "dev_labels": paths[1].1,
        "grid": [
            {"learning_rate": 1e-5, "batch_size": 8},
            {"learning_rate": 5e-5, "batch_size": 8},
            {"learning_rate": 9e-5, "batch_size": 16},
        ],
    }]});
    fs::write(root.join("manifest.json"), manifest.to_string())?;

    let out = root.join("out");
    cmd_grid(
        &GridArgs {
            manifest: root.join("manifest.json"),
            out: out.clone(),
            seed: 0,
        },
        true,
    )?;
    let listing = fs::read_to_string(out.join("synthetic_grid/grid.json"))?;
    println!("{listing}");
    for run in read_runs_csv(out.join("runs.csv"))? {
        println!(
            "{}: sim {:.2}%  clf {:.2}%",
            run.model_id, run.sim_accuracy, run.clf_accuracy
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
