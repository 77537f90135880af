//! Generates a small synthetic corpus, writes it to disk and reads it back.
//!
//! ```text
//! cargo run --example generate_corpus [OUT_PATH]
//! ```

use std::collections::BTreeMap;

use tlsfd::corpus::{bin_hz, load_corpus, save_corpus};
use tlsfd::synthgen::{bearing_frequencies, gen_corpus, median, FaultClass, GeneratorConfig};

fn main() -> tlsfd::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("tlsfd-example-corpus.jsonl").display().to_string());

    let mut config = GeneratorConfig {
        n_assets: 20,
        recordings_per_annotation: 10,
        ..GeneratorConfig::default()
    };
    config.corruption.inexact_rate = 0.2;
    let db = gen_corpus(&config)?;
    save_corpus(&db, &out)?;
    assert_eq!(load_corpus(&out)?, db);

    let mut per_class: BTreeMap<FaultClass, usize> = BTreeMap::new();
    for r in &db.recordings {
        *per_class.entry(r.truth_class.expect("generated")).or_default() += 1;
    }
    println!("wrote {out}: {} assets, {} recordings, {} annotations", db.assets.len(), db.recordings.len(), db.annotations.len());
    for (class, n) in per_class {
        println!("  {class:<12} {n:>4} recordings");
    }

    let (bpfo, bpfi) = bearing_frequencies(&config.bearing, 600.0 / 60.0)?;
    println!("default bearing at 600 rpm: BPFO {bpfo:.1} Hz, BPFI {bpfi:.1} Hz");

    // Strongest bin of the first BPFO recording.
    if let Some(r) = db.recordings.iter().find(|r| r.truth_class == Some(FaultClass::Bpfo)) {
        let (bin, peak) = r
            .spectrum
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        println!(
            "{}: peak {peak:.3} at {:.2} Hz, median {:.4}",
            r.recording_id,
            bin_hz(bin),
            median(&r.spectrum)
        );
    }
    for a in db.annotations.iter().take(5) {
        println!("  {} {}: {:?}", a.annotation_id, a.asset_id, a.text);
    }
    Ok(())
}
