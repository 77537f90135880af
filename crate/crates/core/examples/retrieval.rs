//! Top-3 spectrum retrieval for free-form queries, including one that no
//! annotation template produces.

use tlsfd::inference::{NormalizationMode, ProjectedCorpus};
use tlsfd::synthgen::{gen_corpus, GeneratorConfig};
use tlsfd::text_embed::EmbeddingTable;
use tlsfd::trainer::{prepare_pairs, train, TrainConfig};

fn main() -> tlsfd::Result<()> {
    let db = gen_corpus(&GeneratorConfig::default())?;
    let table = EmbeddingTable::fallback();
    let config = TrainConfig::default();
    let (model, _) = train(&db, &table, &config)?;
    let (_, val) = prepare_pairs(&db, &config)?;
    let held_out: std::collections::HashSet<&str> = val.pairs.iter().map(|p| p.recording_id.as_str()).collect();
    let projected = ProjectedCorpus::build_filtered(&model, &db, |id| held_out.contains(id))?;

    for query in ["BPFO low levels", "WO cable replacement", "Replace sensor", "Breakdown"] {
        println!("{query:?}");
        for hit in projected.retrieve(&model, &table, query, 3, NormalizationMode::Paper)? {
            println!(
                "  {:>7.3}  {:<16} {:<12} {}",
                hit.score,
                hit.recording_id,
                hit.truth_class.map(|c| c.name()).unwrap_or("?"),
                hit.annotation.as_deref().unwrap_or("-")
            );
        }
    }
    Ok(())
}
