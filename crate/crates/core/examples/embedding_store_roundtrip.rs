//! Write and read the binary embedding store, and pool a token-level store.

use abduct_rank::synth::token_store;
use abduct_rank::{pool_store, read_embedding_store, write_embedding_store, EmbeddingRole};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;

    let tokens = token_store("synthetic/tokens", 20, 16, 12, 3)?;
    let token_path = dir.path().join("tokens.emb");
    write_embedding_store(&tokens, &token_path)?;
    let back = read_embedding_store(&token_path)?;
    assert_eq!(back, tokens);
    println!(
        "token store: {} records, {} instances, {} bytes",
        back.len(),
        back.instance_count(),
        std::fs::metadata(&token_path)?.len()
    );

    let pooled = pool_store(&back)?;
    let v = pooled.pooled(0, EmbeddingRole::ObsPair)?;
    println!("instance 0 OBS_PAIR pooled to {} dims, first {:.4}", v.dim(), v[0]);

    let mut bytes = std::fs::read(&token_path)?;
    bytes.truncate(bytes.len() - 3);
    let err = abduct_rank::EmbeddingStore::read_from(bytes.as_slice()).unwrap_err();
    println!("truncated file rejected: {err}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
