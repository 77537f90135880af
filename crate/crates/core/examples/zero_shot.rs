//! Zero-shot classification of held-out spectra with analyst-style queries.

use tlsfd::inference::{zero_shot, NormalizationMode, TABLE_QUERIES};
use tlsfd::synthgen::{gen_corpus, FaultClass, GeneratorConfig};
use tlsfd::text_embed::EmbeddingTable;
use tlsfd::trainer::{prepare_pairs, train, TrainConfig};

fn main() -> tlsfd::Result<()> {
    let db = gen_corpus(&GeneratorConfig::default())?;
    let table = EmbeddingTable::fallback();
    let config = TrainConfig::default();
    let (model, _) = train(&db, &table, &config)?;
    let (_, val) = prepare_pairs(&db, &config)?;

    // One held-out recording per class.
    let mut picked = Vec::new();
    for class in FaultClass::ALL {
        let hit = val.pairs.iter().find_map(|p| {
            let r = db.index().recording(&p.recording_id)?;
            (r.truth_class == Some(class)).then_some(r)
        });
        if let Some(r) = hit {
            picked.push(r);
        }
    }
    let spectra: Vec<(&str, &[f64])> = picked
        .iter()
        .map(|r| (r.recording_id.as_str(), r.spectrum.as_slice()))
        .collect();
    let queries: Vec<String> = TABLE_QUERIES.iter().map(|q| q.to_string()).collect();

    for mode in [NormalizationMode::Paper, NormalizationMode::Train] {
        let result = zero_shot(&model, &table, &spectra, &queries, mode)?;
        println!("mode {mode}");
        print!("  {:<16}", "");
        for q in &queries {
            print!("{q:>22}");
        }
        println!();
        for (j, r) in picked.iter().enumerate() {
            print!("  {:<16}", r.truth_class.map(|c| c.name()).unwrap_or("?"));
            for row in &result.matrix.scores {
                print!("{:>22.3}", row[j]);
            }
            println!("   -> {}", queries[result.argmax[j]]);
        }
    }
    Ok(())
}
