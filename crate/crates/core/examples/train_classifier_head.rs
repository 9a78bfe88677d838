//! Train a two-class head on frozen embeddings and evaluate it pairwise.

use abduct_rank::classifier::HeadFile;
use abduct_rank::synth::SyntheticEncoder;
use abduct_rank::{evaluate_clf, train_head, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let encoder = SyntheticEncoder::new("synthetic/base", 64, 0.4, 11);
    let (train, train_labels) = encoder.generate(2000, 1)?;
    let (dev, dev_labels) = encoder.generate(500, 2)?;

    let cfg = TrainConfig::new(0.5, 32, 42);
    let (head, history) = train_head(&train, &train_labels, &cfg)?;
    for (epoch, loss) in history.epoch_losses.iter().enumerate() {
        println!("epoch {}: mean loss {loss:.4}", epoch + 1);
    }

    let result = evaluate_clf(&head, &dev, &dev_labels, false)?;
    println!("dev classification accuracy {:.2}%", 100.0 * result.accuracy);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("head.json");
    HeadFile::new(&train.model_id, &head, &cfg, &history).write(&path)?;
    let reloaded = HeadFile::read(&path)?.head()?;
    assert_eq!(reloaded, head);
    println!("head written and reloaded from {}", path.display());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
