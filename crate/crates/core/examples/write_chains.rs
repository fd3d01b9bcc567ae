//! Writes every battery chain as a JSON chain document, ready for `asip --chain`.
//!
//! `cargo run --example write_chains -- <dir>` (default `./battery`).

use std::path::PathBuf;

use asip::battery;

fn main() -> asip::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "battery".into()));
    std::fs::create_dir_all(&dir).map_err(|source| asip::Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for doc in battery::battery() {
        let name = doc.name.clone().unwrap_or_default();
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, doc.to_json() + "\n").map_err(|source| asip::Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        println!("{}", path.display());
    }
    Ok(())
}
