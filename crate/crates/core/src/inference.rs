//! Zero-shot classification and spectrum retrieval in the joint space.
//!
//! Scores are raw inner products between a projected query and a projected
//! spectrum. Which side is unit-normalized first is a [`NormalizationMode`];
//! the default normalizes the text projection only.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusDatabase, SPECTRUM_LEN};
use crate::error::{Error, Result};
use crate::nn::{self, Mode};
use crate::synthgen::FaultClass;
use crate::text_embed::{embed_annotation, EmbeddingTable};
use crate::trainer::TlsModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Both projections unit-normalized, as during training.
    Train,
    /// Text projection normalized, spectrum projection left as is.
    #[default]
    Paper,
    None,
}

impl NormalizationMode {
    pub fn normalizes_text(self) -> bool {
        matches!(self, Self::Train | Self::Paper)
    }

    pub fn normalizes_spectrum(self) -> bool {
        matches!(self, Self::Train)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Paper => "paper",
            Self::None => "none",
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "paper" => Ok(Self::Paper),
            "none" => Ok(Self::None),
            other => Err(Error::Parameter(format!(
                "unknown normalization mode {other:?} (expected train, paper or none)"
            ))),
        }
    }
}

/// A free-form query standing for one fault class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassQuery {
    pub class: FaultClass,
    pub query: String,
}

impl ClassQuery {
    pub fn new(class: FaultClass, query: impl Into<String>) -> Self {
        Self {
            class,
            query: query.into(),
        }
    }
}

/// The five analyst queries used in the case study, in order Q1..Q5.
pub const TABLE_QUERIES: [&str; 5] = [
    "BPFO low levels",
    "WO cable replacement",
    "Replace sensor",
    "DC FS",
    "Breakdown",
];

/// One query per class of the default synthetic corpus, phrased like the
/// analyst queries above.
pub fn canonical_queries() -> Vec<ClassQuery> {
    vec![
        ClassQuery::new(FaultClass::Healthy, "levels normal"),
        ClassQuery::new(FaultClass::Bpfo, "BPFO low levels"),
        ClassQuery::new(FaultClass::CableFault, "WO cable replacement"),
        ClassQuery::new(FaultClass::SensorFault, "Replace sensor"),
        ClassQuery::new(FaultClass::Looseness, "mechanical looseness"),
    ]
}

pub const QUERIES_FORMAT: &str = "tlsfd-queries";
pub const QUERIES_VERSION: u32 = 1;

/// Header line then one `{"class","query"}` record per line.
pub fn read_queries<R: BufRead>(input: R) -> Result<Vec<ClassQuery>> {
    let mut header_seen = false;
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<queries reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let header: corpus::Header = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad header: {e}"),
            })?;
            corpus::check_header(&header, QUERIES_FORMAT, QUERIES_VERSION, lineno)?;
            header_seen = true;
            continue;
        }
        let q: ClassQuery = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if q.query.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty query".into(),
            });
        }
        out.push(q);
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    if out.is_empty() {
        return Err(Error::Config("queries file holds no queries".into()));
    }
    Ok(out)
}

pub fn write_queries<W: Write>(queries: &[ClassQuery], mut out: W) -> Result<()> {
    let io = |e| Error::io("<queries writer>", e);
    corpus::write_json_line(
        &mut out,
        &corpus::Header {
            format: QUERIES_FORMAT.into(),
            version: QUERIES_VERSION,
        },
    )
    .map_err(io)?;
    for q in queries {
        corpus::write_json_line(&mut out, q).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<ClassQuery>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_queries(BufReader::new(file))
}

pub fn save_queries(queries: &[ClassQuery], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_queries(queries, BufWriter::new(file))
}

fn finish(mut z: Vec<f64>, normalize: bool) -> Vec<f64> {
    if normalize {
        z = nn::l2_normalize(&z);
    }
    z
}

pub fn project_text(
    model: &TlsModel,
    table: &EmbeddingTable,
    text: &str,
    mode: NormalizationMode,
) -> Result<Vec<f64>> {
    let embedding = embed_annotation(table, text)?;
    let (z, _) = model.text_head.forward(embedding.as_slice(), Mode::Infer)?;
    Ok(finish(z, mode.normalizes_text()))
}

pub fn project_spectrum(model: &TlsModel, spectrum: &[f64], mode: NormalizationMode) -> Result<Vec<f64>> {
    let z = raw_spectrum_projection(model, spectrum)?;
    Ok(finish(z, mode.normalizes_spectrum()))
}

fn raw_spectrum_projection(model: &TlsModel, spectrum: &[f64]) -> Result<Vec<f64>> {
    if spectrum.len() != SPECTRUM_LEN {
        return Err(Error::Shape {
            expected: SPECTRUM_LEN,
            actual: spectrum.len(),
            context: "spectrum",
        });
    }
    Ok(model.spectrum_head.forward(spectrum, Mode::Infer)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreMatrix {
    pub queries: Vec<String>,
    pub item_ids: Vec<String>,
    /// `scores[q][s]`
    pub scores: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroShot {
    pub matrix: ScoreMatrix,
    /// Winning query index per spectrum; ties go to the lowest index.
    pub argmax: Vec<usize>,
}

/// Index of the maximum, first one on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Scores every (query, spectrum) pair.
pub fn zero_shot(
    model: &TlsModel,
    table: &EmbeddingTable,
    spectra: &[(&str, &[f64])],
    queries: &[String],
    mode: NormalizationMode,
) -> Result<ZeroShot> {
    if queries.is_empty() {
        return Err(Error::Parameter("zero-shot needs at least one query".into()));
    }
    if spectra.is_empty() {
        return Err(Error::Parameter("zero-shot needs at least one spectrum".into()));
    }
    let q: Vec<Vec<f64>> = queries
        .iter()
        .map(|t| project_text(model, table, t, mode))
        .collect::<Result<_>>()?;
    let s: Vec<Vec<f64>> = spectra
        .iter()
        .map(|(_, values)| project_spectrum(model, values, mode))
        .collect::<Result<_>>()?;
    let scores: Vec<Vec<f64>> = q
        .iter()
        .map(|qv| s.iter().map(|sv| nn::dot(qv, sv)).collect())
        .collect();
    let argmaxes = (0..s.len())
        .map(|j| argmax(scores.iter().map(|row| row[j])).expect("queries non-empty"))
        .collect();
    Ok(ZeroShot {
        matrix: ScoreMatrix {
            queries: queries.to_vec(),
            item_ids: spectra.iter().map(|(id, _)| id.to_string()).collect(),
            scores,
        },
        argmax: argmaxes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetrievalHit {
    pub recording_id: String,
    pub score: f64,
    pub annotation: Option<String>,
    pub truth_class: Option<FaultClass>,
}

/// For each recording, the text of the nearest-dated annotation whose window
/// covers it (ties by annotation id).
pub fn recording_annotations(db: &CorpusDatabase, window_days: u32) -> Result<HashMap<String, String>> {
    let pairs = corpus::propagate_annotations(db, window_days)?;
    let index = db.index();
    let mut best: HashMap<String, (i64, String, String)> = HashMap::new();
    for pair in &pairs.pairs {
        let (rec, ann) = index.pair(pair)?;
        let gap = (rec.timestamp - ann.date).abs();
        let candidate = (gap, ann.annotation_id.clone(), ann.text.clone());
        match best.get(&rec.recording_id) {
            Some(current) if (current.0, &current.1) <= (candidate.0, &candidate.1) => {}
            _ => {
                best.insert(rec.recording_id.clone(), candidate);
            }
        }
    }
    Ok(best.into_iter().map(|(k, (_, _, text))| (k, text)).collect())
}

/// Spectrum projections of a set of recordings, computed once and reused
/// across queries and normalization modes.
#[derive(Clone, Debug)]
pub struct ProjectedCorpus {
    pub ids: Vec<String>,
    raw: Vec<Vec<f64>>,
    unit: Vec<Vec<f64>>,
    pub annotations: Vec<Option<String>>,
    pub truth: Vec<Option<FaultClass>>,
}

impl ProjectedCorpus {
    /// Projects every recording of `db`.
    pub fn build(model: &TlsModel, db: &CorpusDatabase) -> Result<Self> {
        Self::build_filtered(model, db, |_| true)
    }

    /// Projects the recordings whose id passes `keep`.
    pub fn build_filtered(
        model: &TlsModel,
        db: &CorpusDatabase,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Self> {
        let notes = recording_annotations(db, model.config.window_days)?;
        let mut out = Self {
            ids: Vec::new(),
            raw: Vec::new(),
            unit: Vec::new(),
            annotations: Vec::new(),
            truth: Vec::new(),
        };
        for rec in db.recordings.iter().filter(|r| keep(&r.recording_id)) {
            let z = raw_spectrum_projection(model, &rec.spectrum)?;
            out.unit.push(nn::l2_normalize(&z));
            out.raw.push(z);
            out.ids.push(rec.recording_id.clone());
            out.annotations.push(notes.get(&rec.recording_id).cloned());
            out.truth.push(rec.truth_class);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn projection(&self, i: usize, mode: NormalizationMode) -> &[f64] {
        if mode.normalizes_spectrum() {
            &self.unit[i]
        } else {
            &self.raw[i]
        }
    }

    /// Top-`k` recordings for `query`, scores descending, ties by id.
    pub fn retrieve(
        &self,
        model: &TlsModel,
        table: &EmbeddingTable,
        query: &str,
        k: usize,
        mode: NormalizationMode,
    ) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if self.is_empty() {
            return Err(Error::Parameter("cannot retrieve from an empty corpus".into()));
        }
        let q = project_text(model, table, query, mode)?;
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (nn::dot(&q, self.projection(i, mode)), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1])));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, i)| RetrievalHit {
                recording_id: self.ids[i].clone(),
                score,
                annotation: self.annotations[i].clone(),
                truth_class: self.truth[i],
            })
            .collect())
    }
}

/// Scores all recordings of `db` against `query` and returns the top `k`.
pub fn retrieve(
    model: &TlsModel,
    table: &EmbeddingTable,
    db: &CorpusDatabase,
    query: &str,
    k: usize,
    mode: NormalizationMode,
) -> Result<Vec<RetrievalHit>> {
    if db.recordings.is_empty() {
        return Err(Error::Parameter("cannot retrieve from an empty corpus".into()));
    }
    ProjectedCorpus::build(model, db)?.retrieve(model, table, query, k, mode)
}
