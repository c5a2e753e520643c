//! Stratified 8:1:1 split of a synthetic catalog, with per-composer counts.
//! Usage: cargo run --example split_corpus [seed]

use composer_id::dataset::{stratified_split, Catalog, CatalogEntry, Subset};

fn main() -> composer_id::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let sizes = [("Chopin, Frédéric", 40), ("Liszt, Franz", 23), ("Satie, Erik", 10), ("Schumann, Clara", 4)];
    let mut pieces = Vec::new();
    for (composer, n) in sizes {
        for i in 0..n {
            pieces.push(CatalogEntry {
                source_id: format!("{composer} #{i}"),
                composer: composer.to_string(),
                duration: 120.0,
            });
        }
    }
    let catalog = Catalog::new(pieces)?;
    let split = stratified_split(&catalog, seed);
    println!("label\tcomposer\ttrain\tvalidation\ttest");
    for (label, composer) in catalog.composers().iter().enumerate() {
        let count = |s: Subset| {
            catalog
                .pieces()
                .iter()
                .filter(|p| &p.composer == composer && split.get(&p.source_id) == Some(s))
                .count()
        };
        println!(
            "{label}\t{composer}\t{}\t{}\t{}",
            count(Subset::Train),
            count(Subset::Validation),
            count(Subset::Test)
        );
    }
    Ok(())
}
