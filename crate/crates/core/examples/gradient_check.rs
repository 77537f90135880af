//! Finite-difference check of the end-to-end contrastive gradient, through
//! both projection heads, on one batch of four pairs.

use tlsfd::nn::grad_check;
use tlsfd::synthgen::{gen_corpus, GeneratorConfig};
use tlsfd::text_embed::{embed_annotation, EmbeddingTable};
use tlsfd::trainer::{batch_objective, TlsModel, TrainConfig};

fn main() -> tlsfd::Result<()> {
    let db = gen_corpus(&GeneratorConfig {
        n_assets: 4,
        recordings_per_annotation: 2,
        extra_recordings: 0,
        ..GeneratorConfig::default()
    })?;
    let table = EmbeddingTable::fallback();
    let model = TlsModel::init(&TrainConfig::default())?;

    let texts = db
        .annotations
        .iter()
        .map(|a| embed_annotation(&table, &a.text).map(|e| e.into_vec()))
        .collect::<tlsfd::Result<Vec<_>>>()?;
    let spectra: Vec<Vec<f64>> = db
        .annotations
        .iter()
        .map(|a| {
            db.recordings
                .iter()
                .find(|r| r.asset_id == a.asset_id)
                .expect("every asset has recordings")
                .spectrum
                .clone()
        })
        .collect();

    for h in [1e-2, 1e-4, 1e-6] {
        let (loss, grad, f) = batch_objective(&model, &texts, &spectra, Some((0, 0)))?;
        let report = grad_check(f, &model.flatten(), &grad, h, 1);
        println!(
            "h = {h:e}: loss {loss:.6}, max relative error {:.2e} over {} of {} coordinates (worst #{})",
            report.max_rel_error,
            report.coords_checked,
            grad.len(),
            report.worst_index
        );
    }
    Ok(())
}
