use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::corpus::{self, CorpusDatabase};
use crate::error::{Error, Result};
use crate::inference::{self, NormalizationMode};
use crate::synthgen::{self, GeneratorConfig};
use crate::text_embed::{self, EmbeddingTable};
use crate::trainer::{self, TlsModel, TrainConfig};

use super::http::{serve, ServiceState};
use super::DEFAULT_PORT;

#[derive(Debug, Parser)]
#[command(
    name = "tlsfd",
    version,
    about = "Joint text/spectrum embeddings for vibration fault diagnosis",
    long_about = "Generates synthetic corpora, trains the contrastive text/spectrum model, \
                  and answers zero-shot and retrieval queries. Results are printed as one \
                  JSON record per line on stdout; diagnostics go to stderr."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen {
        /// Generator config file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a corpus and write a checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "val-fraction")]
        val_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Zero-shot accuracy, precision@k and validation loss on the held-out assets.
    Eval {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "paper")]
        mode: NormalizationMode,
    },
    /// Top-k recordings for a free-form query.
    Retrieve {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        query: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "paper")]
        mode: NormalizationMode,
    },
    /// Score recordings against the queries in a queries file.
    Zeroshot {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated recording ids.
        #[arg(long, value_delimiter = ',', required = true)]
        recordings: Vec<String>,
        #[arg(long, default_value = "paper")]
        mode: NormalizationMode,
    },
    /// Run the HTTP JSON service.
    Serve {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, env = "TLSFD_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl ModelInputs {
    fn load(&self) -> Result<(TlsModel, CorpusDatabase, EmbeddingTable)> {
        Ok((
            TlsModel::load(&self.model)?,
            corpus::load_corpus(&self.corpus)?,
            load_table(self.embeddings.as_deref())?,
        ))
    }
}

fn load_table(path: Option<&Path>) -> Result<EmbeddingTable> {
    match path {
        Some(p) => text_embed::load_embedding_table(p),
        None => Ok(EmbeddingTable::fallback()),
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, record).map_err(|e| Error::io("<stdout>", e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io("<stdout>", e))
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 runtime error, 2 usage error.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "tlsfd: {e}");
            1
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Gen { config, out: path, seed } => {
            let mut cfg = match config {
                Some(p) => synthgen::load_config(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let db = synthgen::gen_corpus(&cfg)?;
            corpus::save_corpus(&db, &path)?;
            emit(
                out,
                &json!({
                    "corpus": path,
                    "assets": db.assets.len(),
                    "recordings": db.recordings.len(),
                    "annotations": db.annotations.len(),
                    "seed": cfg.seed,
                }),
            )
        }
        Command::Train {
            corpus: corpus_path,
            embeddings,
            out: model_path,
            epochs,
            batch,
            lr,
            tau,
            val_fraction,
            seed,
        } => {
            let db = corpus::load_corpus(&corpus_path)?;
            let table = load_table(embeddings.as_deref())?;
            let mut cfg = TrainConfig::default();
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = tau {
                cfg.temperature = v;
            }
            if let Some(v) = val_fraction {
                cfg.val_fraction = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            let _ = writeln!(
                err,
                "tlsfd: training on {} recordings, {} annotations",
                db.recordings.len(),
                db.annotations.len()
            );
            let (model, history) = trainer::train(&db, &table, &cfg)?;
            model.save(&model_path)?;
            for rec in &history.epochs {
                emit(out, rec)?;
            }
            if table.misses() > 0 && table.source() == text_embed::EmbeddingSource::Loaded {
                let _ = writeln!(err, "tlsfd: {} texts fell back to hashed embeddings", table.misses());
            }
            emit(out, &json!({ "model": model_path }))
        }
        Command::Eval { inputs, queries, k, mode } => {
            let (model, db, table) = inputs.load()?;
            let queries = inference::load_queries(&queries)?;
            let (_, val) = trainer::prepare_pairs(&db, &model.config)?;
            let metrics = trainer::evaluate(&model, &db, &table, &val, &queries, k, mode)?;
            emit(out, &metrics)
        }
        Command::Retrieve { inputs, query, k, mode } => {
            let (model, db, table) = inputs.load()?;
            for (rank, hit) in inference::retrieve(&model, &table, &db, &query, k, mode)?
                .into_iter()
                .enumerate()
            {
                emit(
                    out,
                    &json!({
                        "rank": rank + 1,
                        "recording_id": hit.recording_id,
                        "score": hit.score,
                        "annotation": hit.annotation,
                        "truth_class": hit.truth_class,
                    }),
                )?;
            }
            Ok(())
        }
        Command::Zeroshot {
            inputs,
            queries,
            recordings,
            mode,
        } => {
            let (model, db, table) = inputs.load()?;
            let queries: Vec<String> = inference::load_queries(&queries)?
                .into_iter()
                .map(|q| q.query)
                .collect();
            let index = db.index();
            let spectra = recordings
                .iter()
                .map(|id| {
                    index
                        .recording(id)
                        .map(|r| (id.as_str(), r.spectrum.as_slice()))
                        .ok_or_else(|| Error::NotFound(format!("recording {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let zs = inference::zero_shot(&model, &table, &spectra, &queries, mode)?;
            for (j, id) in zs.matrix.item_ids.iter().enumerate() {
                let scores: Vec<f64> = zs.matrix.scores.iter().map(|row| row[j]).collect();
                emit(
                    out,
                    &json!({
                        "recording_id": id,
                        "scores": scores,
                        "argmax": zs.argmax[j],
                        "query": zs.matrix.queries[zs.argmax[j]],
                    }),
                )?;
            }
            Ok(())
        }
        Command::Serve { inputs, port, host } => {
            let (model, db, table) = inputs.load()?;
            let state = Arc::new(ServiceState::new(model, db, table)?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<tokio runtime>", e))?;
            runtime.block_on(serve(state, SocketAddr::new(host, port)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("tlsfd").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("Usage"));
        for sub in ["gen", "train", "eval", "retrieve", "zeroshot", "serve"] {
            assert!(out.contains(sub), "{sub}");
        }
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["gen", "--bogus"]).0, 2);
        assert_eq!(run_capture(&[]).0, 2);
        assert_eq!(run_capture(&["retrieve", "--model", "m", "--corpus", "c", "--query", "q", "--k", "x"]).0, 2);
        assert_eq!(
            run_capture(&["retrieve", "--model", "m", "--corpus", "c", "--query", "q", "--k", "1", "--mode", "loud"]).0,
            2
        );
    }

    #[test]
    fn missing_file_is_runtime_error() {
        let (code, _, err) = run_capture(&["retrieve", "--model", "/nonexistent/m", "--corpus", "c", "--query", "q", "--k", "1"]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/m"));
    }

    #[test]
    fn port_env_is_overridden_by_flag() {
        let cli = Cli::try_parse_from(["tlsfd", "serve", "--model", "m", "--corpus", "c", "--port", "9001"]).unwrap();
        match cli.command {
            Command::Serve { port, .. } => assert_eq!(port, 9001),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gen_writes_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.jsonl");
        let cfg = GeneratorConfig {
            n_assets: 5,
            recordings_per_annotation: 3,
            ..GeneratorConfig::default()
        };
        synthgen::save_config(&cfg, &cfg_path).unwrap();
        let out_path = dir.path().join("corpus.jsonl");
        let (code, out, err) = run_capture(&[
            "gen",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        assert_eq!(code, 0, "{err}");
        let record: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
        assert_eq!(record["seed"], 9);
        assert_eq!(record["assets"], 5);
        assert!(corpus::load_corpus(&out_path).is_ok());
    }
}
