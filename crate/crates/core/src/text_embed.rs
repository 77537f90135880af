//! 768-d annotation embeddings.
//!
//! Annotation text is treated as opaque input data: a frozen sentence encoder
//! can be run offline and its vectors shipped as an embedding file. Texts the
//! table does not know fall back to a deterministic character-trigram hashing
//! embedder, so the pipeline also runs with no external encoder at all.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBED_DIM: usize = 768;
pub const EMBEDDINGS_FORMAT: &str = "tlsfd-embeddings";
pub const EMBEDDINGS_VERSION: u32 = 1;

/// Trim, collapse internal whitespace to single spaces, lower-case.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationEmbedding(Vec<f64>);

impl AnnotationEmbedding {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.len() != EMBED_DIM {
            return Err(Error::Shape {
                expected: EMBED_DIM,
                actual: vector.len(),
                context: "annotation embedding",
            });
        }
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::Embedding(format!("component {i} is not finite")));
        }
        Ok(Self(vector))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(salt: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET ^ salt, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// Character trigrams of the normalized text padded with one space on each
/// side, so every non-empty text has at least one trigram.
pub fn trigrams(normalized: &str) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(normalized.chars())
        .chain(std::iter::once(' '))
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Signed trigram hashing into 768 buckets, L2-normalized.
///
/// Bucket is FNV-1a of the trigram bytes modulo 768; the sign comes from a
/// second, salted FNV-1a.
pub fn hash_embed(text: &str) -> Result<AnnotationEmbedding> {
    let normalized = normalize_text(text);
    if normalized.is_empty() {
        return Err(Error::Embedding("cannot embed empty text".into()));
    }
    let mut v = vec![0.0; EMBED_DIM];
    for gram in trigrams(&normalized) {
        let bucket = (fnv1a(0, gram.as_bytes()) % EMBED_DIM as u64) as usize;
        let sign = if fnv1a(0x5bd1_e995, gram.as_bytes()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Signed collisions cancelled out; fall back to the first trigram's
        // bucket so the result is still a unit vector.
        let gram = &trigrams(&normalized)[0];
        v[(fnv1a(0, gram.as_bytes()) % EMBED_DIM as u64) as usize] = 1.0;
        return AnnotationEmbedding::new(v);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    AnnotationEmbedding::new(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Loaded,
    Fallback,
}

/// Normalized text -> embedding, plus a counter of fallback lookups.
#[derive(Debug)]
pub struct EmbeddingTable {
    entries: HashMap<String, AnnotationEmbedding>,
    source: EmbeddingSource,
    misses: AtomicU64,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            source: self.source,
            misses: AtomicU64::new(self.misses()),
        }
    }
}

impl Default for EmbeddingTable {
    fn default() -> Self {
        Self::fallback()
    }
}

impl EmbeddingTable {
    /// An empty table: every lookup uses [`hash_embed`].
    pub fn fallback() -> Self {
        Self {
            entries: HashMap::new(),
            source: EmbeddingSource::Fallback,
            misses: AtomicU64::new(0),
        }
    }

    pub fn loaded() -> Self {
        Self {
            source: EmbeddingSource::Loaded,
            ..Self::fallback()
        }
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn get(&self, text: &str) -> Option<&AnnotationEmbedding> {
        self.entries.get(&normalize_text(text))
    }

    /// Inserts under the normalized key. Re-inserting an identical vector is a
    /// no-op; a different vector for the same key is an error.
    pub fn insert(&mut self, text: &str, embedding: AnnotationEmbedding) -> Result<()> {
        let key = normalize_text(text);
        if key.is_empty() {
            return Err(Error::Embedding("empty embedding key".into()));
        }
        match self.entries.get(&key) {
            Some(existing) if *existing == embedding => Ok(()),
            Some(_) => Err(Error::Embedding(format!(
                "conflicting vectors for text {key:?}"
            ))),
            None => {
                self.entries.insert(key, embedding);
                Ok(())
            }
        }
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(&str, &AnnotationEmbedding)> {
        let mut out: Vec<_> = self.entries.iter().map(|(k, v)| (k.as_str(), v)).collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }
}

/// Table hit returns the stored vector verbatim; a miss returns
/// [`hash_embed`] and bumps the miss counter.
pub fn embed_annotation(table: &EmbeddingTable, text: &str) -> Result<AnnotationEmbedding> {
    if let Some(hit) = table.get(text) {
        return Ok(hit.clone());
    }
    let embedding = hash_embed(text)?;
    table.misses.fetch_add(1, Ordering::Relaxed);
    Ok(embedding)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingsHeader {
    format: String,
    version: u32,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    text: String,
    vector: Vec<f64>,
}

pub fn read_embedding_table<R: BufRead>(input: R) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::loaded();
    let mut saw_header = false;
    let mut row = 0usize;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<embedding reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: EmbeddingsHeader =
                serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad header: {e}"),
                })?;
            if header.format != EMBEDDINGS_FORMAT
                || header.version != EMBEDDINGS_VERSION
                || header.dim != EMBED_DIM
            {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "expected {EMBEDDINGS_FORMAT} v{EMBEDDINGS_VERSION} dim {EMBED_DIM}, found {} v{} dim {}",
                        header.format, header.version, header.dim
                    ),
                });
            }
            saw_header = true;
            continue;
        }
        row += 1;
        let parsed: EmbeddingRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let embedding = AnnotationEmbedding::new(parsed.vector)
            .map_err(|e| Error::Embedding(format!("row {row} (line {lineno}): {e}")))?;
        table
            .insert(&parsed.text, embedding)
            .map_err(|e| Error::Embedding(format!("row {row} (line {lineno}): {e}")))?;
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(table)
}

pub fn write_embedding_table<W: Write>(table: &EmbeddingTable, mut out: W) -> Result<()> {
    let io = |e| Error::io("<embedding writer>", e);
    crate::corpus::write_json_line(
        &mut out,
        &EmbeddingsHeader {
            format: EMBEDDINGS_FORMAT.into(),
            version: EMBEDDINGS_VERSION,
            dim: EMBED_DIM,
        },
    )
    .map_err(io)?;
    for (text, embedding) in table.entries() {
        crate::corpus::write_json_line(
            &mut out,
            &EmbeddingRow {
                text: text.to_string(),
                vector: embedding.as_slice().to_vec(),
            },
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embedding_table(BufReader::new(file))
}

pub fn save_embedding_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embedding_table(table, BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(i: usize) -> AnnotationEmbedding {
        let mut v = vec![0.0; EMBED_DIM];
        v[i] = 1.0;
        AnnotationEmbedding::new(v).unwrap()
    }

    #[test]
    fn normalization_collapses_whitespace_and_case() {
        assert_eq!(normalize_text("  BPFO   Env\tLOW \n"), "bpfo env low");
        assert_eq!(normalize_text("   "), "");
    }

    #[test]
    fn trigrams_are_space_padded() {
        assert_eq!(trigrams("ab"), vec![" ab", "ab "]);
        assert_eq!(trigrams("a"), vec![" a "]);
    }

    #[test]
    fn fnv1a_matches_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(0, b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(0, b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(0, b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn hash_embedding_is_unit_and_stable() {
        let a = hash_embed("BPFO Env low").unwrap();
        let b = hash_embed("  bpfo   env LOW").unwrap();
        assert_eq!(a, b);
        let norm = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(hash_embed(" \t ").is_err());
    }

    #[test]
    fn similar_texts_are_closer_than_unrelated_ones() {
        let dot = |a: &AnnotationEmbedding, b: &AnnotationEmbedding| -> f64 {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
        };
        let q = hash_embed("BPFO low levels").unwrap();
        let near = hash_embed("BPFO Env low").unwrap();
        let far = hash_embed("Replace the sensor next stop").unwrap();
        assert!(dot(&q, &near) > dot(&q, &far));
    }

    #[test]
    fn embedding_rejects_bad_vectors() {
        assert!(matches!(
            AnnotationEmbedding::new(vec![0.0; 767]),
            Err(Error::Shape { expected: 768, actual: 767, .. })
        ));
        let mut v = vec![0.0; EMBED_DIM];
        v[3] = f64::NAN;
        assert!(matches!(AnnotationEmbedding::new(v), Err(Error::Embedding(_))));
    }

    #[test]
    fn table_hits_are_verbatim_and_misses_are_counted() {
        let mut table = EmbeddingTable::loaded();
        table.insert("BPFO Env low", unit(5)).unwrap();
        assert_eq!(embed_annotation(&table, "bpfo  env low").unwrap(), unit(5));
        assert_eq!(table.misses(), 0);
        let miss = embed_annotation(&table, "Replace sensor").unwrap();
        assert_eq!(miss, hash_embed("Replace sensor").unwrap());
        assert_eq!(table.misses(), 1);
        assert_eq!(table.clone().misses(), 1);
    }

    #[test]
    fn conflicting_inserts_fail_identical_ones_do_not() {
        let mut table = EmbeddingTable::loaded();
        table.insert("a b", unit(1)).unwrap();
        table.insert("A  B", unit(1)).unwrap();
        assert_eq!(table.len(), 1);
        assert!(matches!(table.insert("a b", unit(2)), Err(Error::Embedding(_))));
    }

    #[test]
    fn table_file_round_trip_is_exact() {
        let mut table = EmbeddingTable::loaded();
        let mut v: Vec<f64> = (0..EMBED_DIM).map(|i| (i as f64 * 0.37).sin() / 7.0).collect();
        v[0] = 0.1 + 0.2;
        table.insert("first text", AnnotationEmbedding::new(v).unwrap()).unwrap();
        table.insert("second", unit(9)).unwrap();
        let mut buf = Vec::new();
        write_embedding_table(&table, &mut buf).unwrap();
        let back = read_embedding_table(buf.as_slice()).unwrap();
        assert_eq!(back.source(), EmbeddingSource::Loaded);
        assert_eq!(back.entries(), table.entries());
    }

    #[test]
    fn table_reader_reports_row_and_line() {
        let header = r#"{"format":"tlsfd-embeddings","version":1,"dim":768}"#;
        let short = format!("{header}\n{{\"text\":\"x\",\"vector\":[1.0,2.0]}}\n");
        let err = read_embedding_table(short.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("line 2"), "{err}");

        let wrong_dim = r#"{"format":"tlsfd-embeddings","version":1,"dim":384}"#;
        assert!(matches!(read_embedding_table(wrong_dim.as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_embedding_table("".as_bytes()), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn any_nonblank_text_embeds_to_a_unit_vector(text in "[a-zA-Z0-9 ./-]{1,40}") {
            prop_assume!(!text.trim().is_empty());
            let e = hash_embed(&text).unwrap();
            let norm = e.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
