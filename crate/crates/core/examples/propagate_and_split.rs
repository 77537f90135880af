//! Window-based annotation propagation and the asset-level train/val split.

use std::collections::BTreeSet;

use tlsfd::corpus::{propagate_annotations, split_by_asset};
use tlsfd::synthgen::{gen_corpus, GeneratorConfig};

fn main() -> tlsfd::Result<()> {
    let db = gen_corpus(&GeneratorConfig::default())?;

    for window in [1, 5, 10, 15] {
        let pairs = propagate_annotations(&db, window)?;
        println!("window ±{window:>2} days: {:>5} pairs", pairs.len());
    }

    let pairs = propagate_annotations(&db, 10)?;
    let (train, val) = split_by_asset(&pairs, &db, 0.2, 1)?;
    let index = db.index();
    let assets = |pairs: &tlsfd::corpus::PairDataset| -> BTreeSet<String> {
        pairs
            .pairs
            .iter()
            .map(|p| index.recording(&p.recording_id).expect("known").asset_id.clone())
            .collect()
    };
    let (ta, va) = (assets(&train), assets(&val));
    println!(
        "train {} pairs over {} assets, val {} pairs over {} assets ({:.1}% of pairs)",
        train.len(),
        ta.len(),
        val.len(),
        va.len(),
        100.0 * val.len() as f64 / pairs.len() as f64
    );
    assert!(ta.is_disjoint(&va));

    let unique: BTreeSet<&str> = db.annotations.iter().map(|a| a.text.as_str()).collect();
    println!("{} annotations, {} distinct texts", db.annotations.len(), unique.len());
    Ok(())
}
