//! Writes the bundled synthetic datasets and training corpus under a data
//! directory (default `data`).

use std::fs;
use std::path::PathBuf;

use featcraft::{synth, write_csv};

fn main() -> featcraft::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let corpus_dir = root.join("corpus");
    fs::create_dir_all(&corpus_dir).expect("create data directories");
    for d in synth::bundled()? {
        write_csv(&d, root.join(format!("{}.csv", d.name())))?;
    }
    let mut targets = String::new();
    for d in synth::training_corpus(synth::CORPUS_SEED)? {
        let file = format!("{}.csv", d.name());
        write_csv(&d, corpus_dir.join(&file))?;
        targets.push_str(&format!("{file}={}\n", d.target_name()));
    }
    fs::write(corpus_dir.join("targets.txt"), targets).expect("write target map");
    Ok(())
}
