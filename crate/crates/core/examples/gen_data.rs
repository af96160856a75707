//! Generates a small procedural corpus, writes it as JSON lines and reads it
//! back.

use std::collections::BTreeMap;

use tlcontrol::dataset::{generate_corpus, read_corpus, write_corpus, GeneratorConfig};

fn main() -> tlcontrol::Result<()> {
    let config = GeneratorConfig { max_len: 64, ..Default::default() };
    let corpus = generate_corpus(&config, 40, 0)?;
    println!(
        "{} clips: {} train, {} val, {} test",
        corpus.samples.len(),
        corpus.split.train.len(),
        corpus.split.val.len(),
        corpus.split.test.len()
    );
    let mut families = BTreeMap::new();
    for s in &corpus.samples {
        let name = format!("{:?}", s.family.unwrap());
        *families.entry(name.split([' ', '{']).next().unwrap().to_string()).or_insert(0) += 1;
    }
    println!("families: {families:?}");
    for s in corpus.samples.iter().take(3) {
        println!("  {:2} frames: {}", s.true_length, s.text);
    }

    let dir = std::env::temp_dir().join("tlc-gen-data");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("corpus.jsonl");
    write_corpus(&path, &corpus.samples)?;
    let back = read_corpus(&path)?;
    assert_eq!(back.len(), corpus.samples.len());
    println!("wrote and re-read {}", path.display());
    Ok(())
}
