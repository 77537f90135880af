//! Trains on the default synthetic corpus and evaluates on the held-out
//! assets.
//!
//! ```text
//! cargo run --release --example train_model [EPOCHS] [MODEL_PATH]
//! ```

use tlsfd::inference::{canonical_queries, NormalizationMode};
use tlsfd::synthgen::{gen_corpus, GeneratorConfig};
use tlsfd::text_embed::EmbeddingTable;
use tlsfd::trainer::{evaluate, prepare_pairs, train, TrainConfig};

fn main() -> tlsfd::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let out = args
        .next()
        .unwrap_or_else(|| std::env::temp_dir().join("tlsfd-example-model.json").display().to_string());

    let db = gen_corpus(&GeneratorConfig::default())?;
    let table = EmbeddingTable::fallback();
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let (model, history) = train(&db, &table, &config)?;
    for e in &history.epochs {
        println!("epoch {}: train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss);
    }
    model.save(&out)?;
    println!("checkpoint written to {out}");

    let (_, val) = prepare_pairs(&db, &config)?;
    let metrics = evaluate(&model, &db, &table, &val, &canonical_queries(), 3, NormalizationMode::Paper)?;
    println!("zero-shot accuracy {:.3} on {} recordings", metrics.zero_shot_accuracy, metrics.n_recordings);
    for (class, acc) in &metrics.per_class_accuracy {
        println!("  {class:<12} {acc:.3}");
    }
    for p in &metrics.precision_at_k {
        println!("precision@3 {:.3}  {:?}", p.precision, p.query);
    }
    Ok(())
}
