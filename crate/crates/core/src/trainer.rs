//! Contrastive training of the two projection heads, validation, evaluation
//! and checkpoints.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::contrastive::{self, LossBreakdown};
use crate::corpus::{self, CorpusDatabase, PairDataset, SPECTRUM_LEN};
use crate::error::{Error, Result};
use crate::inference::{self, ClassQuery, NormalizationMode, ProjectedCorpus};
use crate::nn::{self, Adam, AdamConfig, HeadGrads, Mode, ParamBlock, ProjectionHead, OUT_DIM};
use crate::seed::{self, stream};
use crate::synthgen::FaultClass;
use crate::text_embed::{embed_annotation, EmbeddingTable, EMBED_DIM};

pub const MODEL_FORMAT: &str = "tlsfd-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub temperature: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub window_days: u32,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 3,
            batch_size: 64,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            temperature: 1.0,
            val_fraction: 0.2,
            seed: 1,
            shuffle: true,
            window_days: corpus::DEFAULT_WINDOW_DAYS,
            dropout_rate: nn::DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} outside (0, 1)", self.val_fraction)));
        }
        if self.window_days == 0 {
            return Err(Error::Config("window_days must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// One `{"epoch","train_loss","val_loss"}` record per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.epochs {
            corpus::write_json_line(&mut out, rec).map_err(|e| Error::io("<history writer>", e))?;
        }
        out.flush().map_err(|e| Error::io("<history writer>", e))
    }
}

/// Both projection heads plus everything needed to reproduce them.
#[derive(Clone, Debug, PartialEq)]
pub struct TlsModel {
    pub text_head: ProjectionHead,
    pub spectrum_head: ProjectionHead,
    pub temperature: f64,
    pub config: TrainConfig,
    pub seed: u64,
}

impl TlsModel {
    /// Freshly initialized heads (768→64 and 3200→64).
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let text_head = ProjectionHead::new(
            EMBED_DIM,
            OUT_DIM,
            config.dropout_rate,
            &mut seed::rng(config.seed, &[stream::INIT_TEXT]),
        )?;
        let spectrum_head = ProjectionHead::new(
            SPECTRUM_LEN,
            OUT_DIM,
            config.dropout_rate,
            &mut seed::rng(config.seed, &[stream::INIT_SPECTRUM]),
        )?;
        Ok(Self {
            text_head,
            spectrum_head,
            temperature: config.temperature,
            config: config.clone(),
            seed: config.seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, head, in_dim) in [
            ("text", &self.text_head, EMBED_DIM),
            ("spectrum", &self.spectrum_head, SPECTRUM_LEN),
        ] {
            head.validate()?;
            if head.in_dim() != in_dim || head.out_dim() != OUT_DIM {
                return Err(Error::Validation(format!(
                    "{name} head is {}→{}, expected {in_dim}→{OUT_DIM}",
                    head.in_dim(),
                    head.out_dim()
                )));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Validation(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }

    /// All twelve parameter blocks with their gradients, named `text.w1`,
    /// `spectrum.ln_bias`, ...
    fn param_blocks<'a>(&'a mut self, text: &'a HeadGrads, spectrum: &'a HeadGrads) -> Vec<ParamBlock<'a>> {
        let mut blocks = Vec::with_capacity(12);
        for (prefix, head, grads) in [
            ("text", &mut self.text_head, text),
            ("spectrum", &mut self.spectrum_head, spectrum),
        ] {
            for ((name, values), (_, grad)) in head.blocks_mut().into_iter().zip(grads.blocks()) {
                blocks.push(ParamBlock {
                    name: format!("{prefix}.{name}"),
                    values,
                    grad,
                });
            }
        }
        blocks
    }

    /// Flat parameter vector: text head then spectrum head.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = self.text_head.flatten();
        flat.extend(self.spectrum_head.flatten());
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.text_head.param_count();
        if flat.len() != n + self.spectrum_head.param_count() {
            return Err(Error::Shape {
                expected: n + self.spectrum_head.param_count(),
                actual: flat.len(),
                context: "flat model parameters",
            });
        }
        self.text_head.set_flat(&flat[..n])?;
        self.spectrum_head.set_flat(&flat[n..])
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let doc = CheckpointRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            seed: self.seed,
            temperature: self.temperature,
            dropout_rate: self.text_head.dropout_rate(),
            train_config: &self.config,
            text_head: &self.text_head,
            spectrum_head: &self.spectrum_head,
        };
        let mut bytes = serde_json::to_vec(&doc).map_err(|e| Error::Validation(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_checkpoint_reader<R: Read>(input: R) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_reader(input).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                    doc.format, doc.version
                ),
            });
        }
        let model = Self {
            text_head: doc.text_head,
            spectrum_head: doc.spectrum_head,
            temperature: doc.temperature,
            config: doc.train_config,
            seed: doc.seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_checkpoint_bytes()?;
        let mut file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        file.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_reader(BufReader::new(file))
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    seed: u64,
    temperature: f64,
    dropout_rate: f64,
    train_config: &'a TrainConfig,
    text_head: &'a ProjectionHead,
    spectrum_head: &'a ProjectionHead,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    seed: u64,
    temperature: f64,
    #[allow(dead_code)]
    dropout_rate: f64,
    train_config: TrainConfig,
    text_head: ProjectionHead,
    spectrum_head: ProjectionHead,
}

/// Propagated pairs split by asset, as used for training.
pub fn prepare_pairs(db: &CorpusDatabase, config: &TrainConfig) -> Result<(PairDataset, PairDataset)> {
    let pairs = corpus::propagate_annotations(db, config.window_days)?;
    if pairs.is_empty() {
        return Err(Error::Training("corpus yields no annotation pairs".into()));
    }
    corpus::split_by_asset(&pairs, db, config.val_fraction, config.seed)
}

/// Resolved inputs of one pair.
struct Sample<'a> {
    text: &'a [f64],
    spectrum: &'a [f64],
}

/// Annotation embeddings keyed by annotation id.
fn embed_annotations(db: &CorpusDatabase, table: &EmbeddingTable) -> Result<HashMap<String, Vec<f64>>> {
    db.annotations
        .iter()
        .map(|a| Ok((a.annotation_id.clone(), embed_annotation(table, &a.text)?.into_vec())))
        .collect()
}

fn resolve<'a>(
    pairs: &PairDataset,
    db: &'a CorpusDatabase,
    texts: &'a HashMap<String, Vec<f64>>,
) -> Result<Vec<Sample<'a>>> {
    let index = db.index();
    pairs
        .pairs
        .iter()
        .map(|p| {
            let (rec, _) = index.pair(p)?;
            let text = texts
                .get(&p.annotation_id)
                .ok_or_else(|| Error::NotFound(format!("annotation {}", p.annotation_id)))?;
            Ok(Sample {
                text,
                spectrum: &rec.spectrum,
            })
        })
        .collect()
}

struct Projected {
    text_raw: Vec<f64>,
    spec_raw: Vec<f64>,
    text_cache: nn::ForwardCache,
    spec_cache: nn::ForwardCache,
}

fn project_batch(model: &TlsModel, batch: &[Sample<'_>], dropout: Option<(usize, usize)>) -> Result<Vec<Projected>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ((text_raw, text_cache), (spec_raw, spec_cache)) = match dropout {
                Some((epoch, b)) => {
                    let path = [stream::DROPOUT, epoch as u64, b as u64, i as u64];
                    let mut text_rng = seed::rng(model.seed, &[path[0], path[1], path[2], path[3], 0]);
                    let mut spec_rng = seed::rng(model.seed, &[path[0], path[1], path[2], path[3], 1]);
                    (
                        model.text_head.forward(s.text, Mode::Train(&mut text_rng))?,
                        model.spectrum_head.forward(s.spectrum, Mode::Train(&mut spec_rng))?,
                    )
                }
                None => (
                    model.text_head.forward(s.text, Mode::Infer)?,
                    model.spectrum_head.forward(s.spectrum, Mode::Infer)?,
                ),
            };
            Ok(Projected {
                text_raw,
                spec_raw,
                text_cache,
                spec_cache,
            })
        })
        .collect()
}

fn normalized_rows(projected: &[Projected]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    projected
        .iter()
        .map(|p| (nn::l2_normalize(&p.text_raw), nn::l2_normalize(&p.spec_raw)))
        .unzip()
}

/// Loss of one batch under training normalization, with gradients of the
/// loss with respect to both heads' parameters.
fn batch_loss_and_grads(
    model: &TlsModel,
    batch: &[Sample<'_>],
    dropout: Option<(usize, usize)>,
) -> Result<(LossBreakdown, HeadGrads, HeadGrads)> {
    let projected = project_batch(model, batch, dropout)?;
    let (zt, zs) = normalized_rows(&projected);
    let (loss, dzt, dzs) = contrastive::loss_and_grad(&zt, &zs, model.temperature)?;
    let mut text_grads = HeadGrads::zeros_like(&model.text_head);
    let mut spec_grads = HeadGrads::zeros_like(&model.spectrum_head);
    for (i, p) in projected.iter().enumerate() {
        let up_t = nn::l2_normalize_backward(&p.text_raw, &dzt[i]);
        let up_s = nn::l2_normalize_backward(&p.spec_raw, &dzs[i]);
        model
            .text_head
            .accumulate_backward(&p.text_cache, &up_t, &mut text_grads, false)?;
        model
            .spectrum_head
            .accumulate_backward(&p.spec_cache, &up_s, &mut spec_grads, false)?;
    }
    Ok((loss, text_grads, spec_grads))
}

fn batch_loss(model: &TlsModel, batch: &[Sample<'_>]) -> Result<LossBreakdown> {
    let projected = project_batch(model, batch, None)?;
    let (zt, zs) = normalized_rows(&projected);
    contrastive::contrastive_loss(&zt, &zs, model.temperature)
}

/// End-to-end loss of a batch as a function of the flat parameter vector,
/// with dropout streams replayed from `(epoch, batch)` and targets frozen at
/// `frozen_at` parameters. Returns the loss and its analytic gradient at
/// `frozen_at`. Used by the gradient checker.
pub fn batch_objective<'a>(
    model: &TlsModel,
    texts: &'a [Vec<f64>],
    spectra: &'a [Vec<f64>],
    dropout: Option<(usize, usize)>,
) -> Result<(f64, Vec<f64>, impl FnMut(&[f64]) -> f64 + 'a)> {
    let batch: Vec<Sample<'_>> = texts
        .iter()
        .zip(spectra)
        .map(|(t, s)| Sample { text: t, spectrum: s })
        .collect();
    let projected = project_batch(model, &batch, dropout)?;
    let (zt, zs) = normalized_rows(&projected);
    let targets = contrastive::soft_targets(&zt, &zs, model.temperature)?;
    let (loss, tg, sg) = batch_loss_and_grads(model, &batch, dropout)?;
    let mut grad = tg.flatten();
    grad.extend(sg.flatten());

    let mut probe = model.clone();
    let f = move |flat: &[f64]| -> f64 {
        probe.set_flat(flat).expect("flat length");
        let batch: Vec<Sample<'_>> = texts
            .iter()
            .zip(spectra)
            .map(|(t, s)| Sample { text: t, spectrum: s })
            .collect();
        let projected = project_batch(&probe, &batch, dropout).expect("forward");
        let (zt, zs) = normalized_rows(&projected);
        contrastive::loss_with_targets(&zt, &zs, probe.temperature, &targets)
            .expect("loss")
            .total
    };
    Ok((loss.total, grad, f))
}

/// Pair-weighted mean loss over batches of `batch_size` in the given order;
/// single-pair batches carry no signal and are skipped.
fn mean_loss(model: &TlsModel, samples: &[Sample<'_>], batch_size: usize) -> Result<f64> {
    let (mut weighted, mut count) = (0.0, 0usize);
    for batch in samples.chunks(batch_size).filter(|b| b.len() >= 2) {
        let loss = batch_loss(model, batch)?;
        weighted += loss.total * batch.len() as f64;
        count += batch.len();
    }
    if count == 0 {
        return Err(Error::Evaluation("fewer than 2 pairs to score".into()));
    }
    Ok(weighted / count as f64)
}

/// Validation order: one fixed shuffle so batches mix assets.
fn val_order<T>(samples: &mut [T], seed_value: u64) {
    samples.shuffle(&mut seed::rng(seed_value, &[stream::VAL_ORDER]));
}

/// Validation loss of `model` over `val` pairs in infer mode.
pub fn validation_loss(
    model: &TlsModel,
    db: &CorpusDatabase,
    table: &EmbeddingTable,
    val: &PairDataset,
) -> Result<f64> {
    let texts = embed_annotations(db, table)?;
    let mut samples = resolve(val, db, &texts)?;
    val_order(&mut samples, model.seed);
    mean_loss(model, &samples, model.config.batch_size)
}

/// Trains both heads for `config.epochs` epochs and reports per-epoch
/// train/validation loss.
pub fn train(db: &CorpusDatabase, table: &EmbeddingTable, config: &TrainConfig) -> Result<(TlsModel, TrainHistory)> {
    let mut model = TlsModel::init(config)?;
    let (train_pairs, val_pairs) = prepare_pairs(db, config)?;
    let texts = embed_annotations(db, table)?;
    let mut train_samples = resolve(&train_pairs, db, &texts)?;
    let mut val_samples = resolve(&val_pairs, db, &texts)?;
    if val_samples.len() < 2 {
        return Err(Error::Training("validation split has fewer than 2 pairs".into()));
    }
    val_order(&mut val_samples, config.seed);
    let mut optimizer = Adam::new(config.adam());
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        if config.shuffle {
            train_samples.shuffle(&mut seed::rng(config.seed, &[stream::SHUFFLE, epoch as u64]));
        }
        let (mut weighted, mut count) = (0.0, 0usize);
        for (b, batch) in train_samples.chunks(config.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let (loss, text_grads, spec_grads) =
                batch_loss_and_grads(&model, batch, Some((epoch, b)))
                    .map_err(|e| Error::Training(format!("epoch {epoch} batch {b}: {e}")))?;
            if !loss.total.is_finite() {
                return Err(Error::Training(format!(
                    "epoch {epoch} batch {b}: non-finite loss {}",
                    loss.total
                )));
            }
            weighted += loss.total * batch.len() as f64;
            count += batch.len();
            optimizer
                .step(&mut model.param_blocks(&text_grads, &spec_grads))
                .map_err(|e| Error::Training(format!("epoch {epoch} batch {b}: {e}")))?;
        }
        if count == 0 {
            return Err(Error::Training("no training batch with at least 2 pairs".into()));
        }
        let val_loss = mean_loss(&model, &val_samples, config.batch_size)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / count as f64,
            val_loss,
        });
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryPrecision {
    pub query: String,
    pub class: FaultClass,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub val_loss: f64,
    pub n_recordings: usize,
    pub zero_shot_accuracy: f64,
    /// Accuracy restricted to recordings of each truth class.
    pub per_class_accuracy: BTreeMap<FaultClass, f64>,
    pub k: usize,
    /// Precision@k for each query whose class occurs among the recordings.
    pub precision_at_k: Vec<QueryPrecision>,
    pub mean_precision_at_k: f64,
}

/// Zero-shot accuracy and retrieval precision over the recordings in
/// `val_pairs`, plus their validation loss.
///
/// A recording's predicted class is the class of its best-scoring query;
/// with several queries per class the class score is their maximum.
pub fn evaluate(
    model: &TlsModel,
    db: &CorpusDatabase,
    table: &EmbeddingTable,
    val_pairs: &PairDataset,
    queries: &[ClassQuery],
    k: usize,
    mode: NormalizationMode,
) -> Result<EvalMetrics> {
    if val_pairs.is_empty() {
        return Err(Error::Evaluation("empty validation set".into()));
    }
    if queries.is_empty() {
        return Err(Error::Config("no evaluation queries".into()));
    }
    let val_ids: BTreeSet<&str> = val_pairs.pairs.iter().map(|p| p.recording_id.as_str()).collect();
    let projected = ProjectedCorpus::build_filtered(model, db, |id| val_ids.contains(id))?;
    let labelled: Vec<(usize, FaultClass)> = projected
        .truth
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|c| (i, c)))
        .collect();
    if labelled.is_empty() {
        return Err(Error::Evaluation("no validation recording carries a truth class".into()));
    }
    let present: BTreeSet<FaultClass> = labelled.iter().map(|(_, c)| *c).collect();
    let covered: BTreeSet<FaultClass> = queries.iter().map(|q| q.class).collect();
    if let Some(missing) = present.difference(&covered).next() {
        return Err(Error::Config(format!("no query covers class {missing}")));
    }

    let query_vecs: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| inference::project_text(model, table, &q.query, mode))
        .collect::<Result<_>>()?;
    let classes: Vec<FaultClass> = covered.into_iter().collect();

    let mut correct = 0usize;
    let mut per_class: BTreeMap<FaultClass, (usize, usize)> = BTreeMap::new();
    for &(i, truth) in &labelled {
        let s = projected.projection(i, mode);
        let class_scores = classes.iter().map(|c| {
            queries
                .iter()
                .zip(&query_vecs)
                .filter(|(q, _)| q.class == *c)
                .map(|(_, v)| nn::dot(v, s))
                .fold(f64::NEG_INFINITY, f64::max)
        });
        let predicted = classes[inference::argmax(class_scores).expect("classes non-empty")];
        let entry = per_class.entry(truth).or_default();
        entry.1 += 1;
        if predicted == truth {
            correct += 1;
            entry.0 += 1;
        }
    }

    let mut precision_at_k = Vec::new();
    for q in queries.iter().filter(|q| present.contains(&q.class)) {
        let hits = projected.retrieve(model, table, &q.query, k, mode)?;
        let relevant = hits.iter().filter(|h| h.truth_class == Some(q.class)).count();
        precision_at_k.push(QueryPrecision {
            query: q.query.clone(),
            class: q.class,
            precision: relevant as f64 / hits.len() as f64,
        });
    }
    let mean_precision_at_k =
        precision_at_k.iter().map(|p| p.precision).sum::<f64>() / precision_at_k.len() as f64;

    Ok(EvalMetrics {
        val_loss: validation_loss(model, db, table, val_pairs)?,
        n_recordings: labelled.len(),
        zero_shot_accuracy: correct as f64 / labelled.len() as f64,
        per_class_accuracy: per_class
            .into_iter()
            .map(|(c, (ok, n))| (c, ok as f64 / n as f64))
            .collect(),
        k,
        precision_at_k,
        mean_precision_at_k,
    })
}
