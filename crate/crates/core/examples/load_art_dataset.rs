//! Load instances and gold labels, and show the text each embedding role covers.

use std::path::Path;

use abduct_rank::dataset::DEFAULT_SEPARATOR;
use abduct_rank::{load_instances, load_labels, EmbeddingRole, FieldMap, Result};

pub fn run_example() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let instances = load_instances(fixtures.join("sample_dev.jsonl"), &FieldMap::default())?;
    let labels = load_labels(fixtures.join("sample_dev_labels.txt"), instances.len())?;

    for (inst, gold) in instances.iter().zip(&labels) {
        println!("{} (gold H{gold})", inst.instance_id);
        for role in EmbeddingRole::ALL {
            println!("  {role:<8} {}", inst.role_text(role, DEFAULT_SEPARATOR));
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
