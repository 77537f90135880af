//! Condition-monitoring corpus: assets own subassets, subassets own
//! recordings (one spectrum each), and analysts attach dated free-text
//! annotations at asset level.
//!
//! Annotations are sparse and live at asset level while training needs
//! spectrum-level supervision, so [`propagate_annotations`] assigns every
//! annotation to all recordings of its asset within a symmetric day window.
//! The resulting pairs are weakly labelled: a window may contain recordings
//! that do not show the annotated fault at all.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::synthgen::FaultClass;

/// Number of frequency bins in every spectrum.
pub const SPECTRUM_LEN: usize = 3200;
/// Upper edge of the spectrum band.
pub const SPECTRUM_MAX_HZ: f64 = 500.0;
pub const DEFAULT_WINDOW_DAYS: u32 = 10;
pub const SECONDS_PER_DAY: i64 = 86_400;

pub const CORPUS_FORMAT: &str = "tlsfd-corpus";
pub const CORPUS_VERSION: u32 = 1;

/// Centre frequency of spectrum bin `bin`.
pub fn bin_hz(bin: usize) -> f64 {
    bin as f64 * SPECTRUM_MAX_HZ / SPECTRUM_LEN as f64
}

/// Bin whose centre is nearest to `hz`, clamped to the band.
pub fn nearest_bin(hz: f64) -> usize {
    let raw = (hz * SPECTRUM_LEN as f64 / SPECTRUM_MAX_HZ).round();
    (raw.max(0.0) as usize).min(SPECTRUM_LEN - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub recording_id: String,
    pub asset_id: String,
    pub subasset_id: String,
    /// UTC epoch seconds.
    #[serde(with = "iso8601")]
    pub timestamp: i64,
    pub sample_rate_hz: f64,
    pub spectrum: Vec<f64>,
    #[serde(default)]
    pub truth_class: Option<FaultClass>,
    #[serde(default)]
    pub truth_severity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: String,
    pub asset_id: String,
    /// UTC epoch seconds.
    #[serde(with = "iso8601")]
    pub date: i64,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusDatabase {
    /// asset_id -> subasset ids
    pub assets: BTreeMap<String, Vec<String>>,
    pub recordings: Vec<Recording>,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub recording_id: String,
    pub annotation_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairDataset {
    pub pairs: Vec<Pair>,
    pub window_days: u32,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Read-only lookup tables over a corpus.
pub struct CorpusIndex<'a> {
    recordings: HashMap<&'a str, &'a Recording>,
    annotations: HashMap<&'a str, &'a Annotation>,
}

impl<'a> CorpusIndex<'a> {
    pub fn new(db: &'a CorpusDatabase) -> Self {
        Self {
            recordings: db
                .recordings
                .iter()
                .map(|r| (r.recording_id.as_str(), r))
                .collect(),
            annotations: db
                .annotations
                .iter()
                .map(|a| (a.annotation_id.as_str(), a))
                .collect(),
        }
    }

    pub fn recording(&self, id: &str) -> Option<&'a Recording> {
        self.recordings.get(id).copied()
    }

    pub fn annotation(&self, id: &str) -> Option<&'a Annotation> {
        self.annotations.get(id).copied()
    }

    pub fn pair(&self, pair: &Pair) -> Result<(&'a Recording, &'a Annotation)> {
        let rec = self
            .recording(&pair.recording_id)
            .ok_or_else(|| Error::NotFound(format!("recording {}", pair.recording_id)))?;
        let ann = self
            .annotation(&pair.annotation_id)
            .ok_or_else(|| Error::NotFound(format!("annotation {}", pair.annotation_id)))?;
        Ok((rec, ann))
    }
}

impl CorpusDatabase {
    /// Registers `subasset_id` under `asset_id`, creating the asset if needed.
    pub fn register_subasset(&mut self, asset_id: &str, subasset_id: &str) {
        let subs = self.assets.entry(asset_id.to_string()).or_default();
        if !subs.iter().any(|s| s == subasset_id) {
            subs.push(subasset_id.to_string());
        }
    }

    pub fn index(&self) -> CorpusIndex<'_> {
        CorpusIndex::new(self)
    }

    /// Checks every schema invariant, reporting the first offending record.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, rec) in self.recordings.iter().enumerate() {
            validate_recording(rec).map_err(|m| {
                Error::Validation(format!("recording #{i} ({}): {m}", rec.recording_id))
            })?;
            if !seen.insert(rec.recording_id.as_str()) {
                return Err(Error::Validation(format!(
                    "recording #{i}: duplicate recording_id {}",
                    rec.recording_id
                )));
            }
            let known = self
                .assets
                .get(&rec.asset_id)
                .is_some_and(|subs| subs.contains(&rec.subasset_id));
            if !known {
                return Err(Error::Validation(format!(
                    "recording #{i} ({}): unknown asset/subasset {}/{}",
                    rec.recording_id, rec.asset_id, rec.subasset_id
                )));
            }
        }
        let mut seen = HashSet::new();
        for (i, ann) in self.annotations.iter().enumerate() {
            validate_annotation(ann, &self.assets).map_err(|m| {
                Error::Validation(format!("annotation #{i} ({}): {m}", ann.annotation_id))
            })?;
            if !seen.insert(ann.annotation_id.as_str()) {
                return Err(Error::Validation(format!(
                    "annotation #{i}: duplicate annotation_id {}",
                    ann.annotation_id
                )));
            }
        }
        Ok(())
    }
}

fn validate_recording(rec: &Recording) -> std::result::Result<(), String> {
    if rec.spectrum.len() != SPECTRUM_LEN {
        return Err(format!(
            "spectrum has {} values, expected {SPECTRUM_LEN}",
            rec.spectrum.len()
        ));
    }
    if let Some(bin) = rec
        .spectrum
        .iter()
        .position(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(format!(
            "spectrum bin {bin} is {} (must be finite and >= 0)",
            rec.spectrum[bin]
        ));
    }
    if !(rec.sample_rate_hz.is_finite() && rec.sample_rate_hz > 0.0) {
        return Err(format!("sample_rate_hz {} is not positive", rec.sample_rate_hz));
    }
    if let Some(s) = rec.truth_severity {
        if !(0.0..=1.0).contains(&s) {
            return Err(format!("truth_severity {s} outside [0, 1]"));
        }
    }
    Ok(())
}

fn validate_annotation(
    ann: &Annotation,
    assets: &BTreeMap<String, Vec<String>>,
) -> std::result::Result<(), String> {
    if ann.text.trim().is_empty() {
        return Err("annotation text is empty".into());
    }
    if !assets.contains_key(&ann.asset_id) {
        return Err(format!("unknown asset_id {}", ann.asset_id));
    }
    Ok(())
}

/// Pairs every annotation with the recordings of its asset whose timestamp
/// lies within `window_days` of the annotation date (boundary inclusive).
///
/// Output is sorted by (annotation_id, recording timestamp, recording_id).
pub fn propagate_annotations(db: &CorpusDatabase, window_days: u32) -> Result<PairDataset> {
    if window_days == 0 {
        return Err(Error::Parameter("window_days must be >= 1".into()));
    }
    db.validate()?;
    let window = window_days as i64 * SECONDS_PER_DAY;

    let mut by_asset: HashMap<&str, Vec<&Recording>> = HashMap::new();
    for rec in &db.recordings {
        by_asset.entry(rec.asset_id.as_str()).or_default().push(rec);
    }

    let mut keyed = Vec::new();
    for ann in &db.annotations {
        let Some(recs) = by_asset.get(ann.asset_id.as_str()) else {
            continue;
        };
        for rec in recs {
            if (rec.timestamp - ann.date).abs() <= window {
                keyed.push((
                    ann.annotation_id.as_str(),
                    rec.timestamp,
                    rec.recording_id.as_str(),
                ));
            }
        }
    }
    keyed.sort_unstable();
    keyed.dedup();

    Ok(PairDataset {
        pairs: keyed
            .into_iter()
            .map(|(a, _, r)| Pair {
                recording_id: r.to_string(),
                annotation_id: a.to_string(),
            })
            .collect(),
        window_days,
    })
}

/// Partitions pairs by asset into (train, val).
///
/// Assets are shuffled with a seeded stream; the validation side is the
/// shortest prefix of that order whose pair count is closest to
/// `val_fraction` of all pairs, keeping at least one asset on each side.
pub fn split_by_asset(
    pairs: &PairDataset,
    db: &CorpusDatabase,
    val_fraction: f64,
    seed: u64,
) -> Result<(PairDataset, PairDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "val_fraction {val_fraction} must lie in (0, 1)"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Split("no pairs to split".into()));
    }
    let index = db.index();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pair_assets = Vec::with_capacity(pairs.len());
    for pair in &pairs.pairs {
        let (rec, _) = index.pair(pair)?;
        *counts.entry(rec.asset_id.as_str()).or_default() += 1;
        pair_assets.push(rec.asset_id.as_str());
    }
    if counts.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 assets among pairs, found {}",
            counts.len()
        )));
    }

    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.shuffle(&mut seed::rng(seed, &[seed::stream::SPLIT]));

    let target = val_fraction * pairs.len() as f64;
    let mut best = (f64::INFINITY, 1);
    let mut cumulative = 0usize;
    for (k, (_, n)) in order.iter().enumerate().take(order.len() - 1) {
        cumulative += n;
        let gap = (cumulative as f64 - target).abs();
        if gap < best.0 {
            best = (gap, k + 1);
        }
    }
    let val_assets: HashSet<&str> = order[..best.1].iter().map(|(a, _)| *a).collect();

    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (pair, asset) in pairs.pairs.iter().zip(pair_assets) {
        if val_assets.contains(asset) {
            val.push(pair.clone());
        } else {
            train.push(pair.clone());
        }
    }
    Ok((
        PairDataset {
            pairs: train,
            window_days: pairs.window_days,
        },
        PairDataset {
            pairs: val,
            window_days: pairs.window_days,
        },
    ))
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Header {
    pub(crate) format: String,
    pub(crate) version: u32,
}

#[derive(Serialize, Deserialize)]
struct AssetRecord {
    asset_id: String,
    subassets: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Asset(AssetRecord),
    Recording(Recording),
    Annotation(Annotation),
}

/// Writes the line-delimited corpus format: a header line, one `asset` line
/// per asset, then recordings and annotations in corpus order.
pub fn write_corpus<W: Write>(db: &CorpusDatabase, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<corpus writer>", e);
    let header = Header {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
    };
    write_json_line(&mut out, &header).map_err(io)?;
    for (asset_id, subassets) in &db.assets {
        write_json_line(
            &mut out,
            &Line::Asset(AssetRecord {
                asset_id: asset_id.clone(),
                subassets: subassets.clone(),
            }),
        )
        .map_err(io)?;
    }
    for rec in &db.recordings {
        write_json_line(&mut out, &Line::Recording(rec.clone())).map_err(io)?;
    }
    for ann in &db.annotations {
        write_json_line(&mut out, &Line::Annotation(ann.clone())).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub(crate) fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Reads the corpus format. Assets are registered from `asset` lines and from
/// the (asset, subasset) of every recording; the result is validated.
pub fn read_corpus<R: BufRead>(input: R) -> Result<CorpusDatabase> {
    let mut db = CorpusDatabase::default();
    let mut saw_header = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<corpus reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: Header = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad header: {e}"),
            })?;
            check_header(&header, CORPUS_FORMAT, CORPUS_VERSION, lineno)?;
            saw_header = true;
            continue;
        }
        let record: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        match record {
            Line::Asset(a) => {
                db.assets.entry(a.asset_id.clone()).or_default();
                for s in &a.subassets {
                    db.register_subasset(&a.asset_id, s);
                }
            }
            Line::Recording(rec) => {
                validate_recording(&rec).map_err(|m| {
                    Error::Validation(format!("line {lineno} ({}): {m}", rec.recording_id))
                })?;
                db.register_subasset(&rec.asset_id, &rec.subasset_id);
                db.recordings.push(rec);
            }
            Line::Annotation(ann) => db.annotations.push(ann),
        }
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    db.validate()?;
    Ok(db)
}

pub(crate) fn check_header(header: &Header, format: &str, version: u32, line: usize) -> Result<()> {
    if header.format != format || header.version != version {
        return Err(Error::Parse {
            line,
            message: format!(
                "expected header {format} v{version}, found {} v{}",
                header.format, header.version
            ),
        });
    }
    Ok(())
}

pub fn save_corpus(db: &CorpusDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(db, BufWriter::new(file))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusDatabase> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

/// ISO-8601 UTC text in files, epoch seconds in memory.
pub mod iso8601 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(epoch_seconds: i64) -> String {
        DateTime::<Utc>::from_timestamp(epoch_seconds, 0)
            .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true))
            .unwrap_or_else(|| epoch_seconds.to_string())
    }

    pub fn parse(text: &str) -> Result<i64, String> {
        DateTime::parse_from_rfc3339(text)
            .map(|t| t.with_timezone(&Utc).timestamp())
            .map_err(|e| format!("bad timestamp {text:?}: {e}"))
    }

    pub fn serialize<S: Serializer>(value: &i64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_corpus, GeneratorConfig};
    use proptest::prelude::*;

    const DAY: i64 = SECONDS_PER_DAY;

    fn recording(id: &str, asset: &str, timestamp: i64) -> Recording {
        Recording {
            recording_id: id.into(),
            asset_id: asset.into(),
            subasset_id: "motor".into(),
            timestamp,
            sample_rate_hz: 1000.0,
            spectrum: vec![0.5; SPECTRUM_LEN],
            truth_class: None,
            truth_severity: None,
        }
    }

    fn annotation(id: &str, asset: &str, date: i64) -> Annotation {
        Annotation {
            annotation_id: id.into(),
            asset_id: asset.into(),
            date,
            text: "BPFO Env low".into(),
        }
    }

    fn db_with(recordings: Vec<Recording>, annotations: Vec<Annotation>) -> CorpusDatabase {
        let mut db = CorpusDatabase::default();
        for r in &recordings {
            db.register_subasset(&r.asset_id, &r.subasset_id);
        }
        db.recordings = recordings;
        db.annotations = annotations;
        db
    }

    #[test]
    fn bins_span_zero_to_500_hz() {
        assert_eq!(bin_hz(0), 0.0);
        assert_eq!(nearest_bin(40.0), 256);
        assert_eq!(nearest_bin(-3.0), 0);
        assert_eq!(nearest_bin(900.0), SPECTRUM_LEN - 1);
    }

    #[test]
    fn window_is_inclusive_and_symmetric() {
        let t0 = 1_600_000_000;
        let db = db_with(
            vec![
                recording("r-3", "A", t0 - 3 * DAY),
                recording("r+5", "A", t0 + 5 * DAY),
                recording("r+15", "A", t0 + 15 * DAY),
                recording("edge", "B", t0 + 10 * DAY),
                recording("past", "B", t0 + 10 * DAY + 1),
            ],
            vec![annotation("n1", "A", t0), annotation("n2", "B", t0)],
        );
        let pairs = propagate_annotations(&db, 10).unwrap();
        let got: Vec<(&str, &str)> = pairs
            .pairs
            .iter()
            .map(|p| (p.annotation_id.as_str(), p.recording_id.as_str()))
            .collect();
        assert_eq!(got, [("n1", "r-3"), ("n1", "r+5"), ("n2", "edge")]);
    }

    #[test]
    fn no_annotations_means_no_pairs() {
        let db = db_with(vec![recording("r", "A", 0)], vec![]);
        assert!(propagate_annotations(&db, 10).unwrap().is_empty());
    }

    #[test]
    fn zero_window_is_rejected() {
        let db = db_with(vec![recording("r", "A", 0)], vec![]);
        assert!(matches!(propagate_annotations(&db, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn equal_assets_split_two_of_ten() {
        let mut recs = Vec::new();
        let mut anns = Vec::new();
        for a in 0..10 {
            let asset = format!("A{a}");
            anns.push(annotation(&format!("n{a}"), &asset, 0));
            for j in 0..5 {
                recs.push(recording(&format!("{asset}-{j}"), &asset, j * DAY));
            }
        }
        let db = db_with(recs, anns);
        let pairs = propagate_annotations(&db, 10).unwrap();
        let (train, val) = split_by_asset(&pairs, &db, 0.2, 7).unwrap();
        assert_eq!(val.len(), 10);
        assert_eq!(train.len(), 40);
        let assets = |d: &PairDataset| -> HashSet<String> {
            d.pairs.iter().map(|p| db.index().pair(p).unwrap().0.asset_id.clone()).collect()
        };
        assert_eq!(assets(&val).len(), 2);
        assert!(assets(&val).is_disjoint(&assets(&train)));
    }

    #[test]
    fn default_corpus_split_is_near_twenty_percent() {
        let db = gen_corpus(&GeneratorConfig::default()).unwrap();
        let pairs = propagate_annotations(&db, DEFAULT_WINDOW_DAYS).unwrap();
        let (_, val) = split_by_asset(&pairs, &db, 0.2, 1).unwrap();
        let share = val.len() as f64 / pairs.len() as f64;
        assert!((share - 0.2).abs() <= 0.02, "val share {share}");
    }

    #[test]
    fn split_needs_two_assets() {
        let db = db_with(vec![recording("r", "A", 0)], vec![annotation("n", "A", 0)]);
        let pairs = propagate_annotations(&db, 10).unwrap();
        assert!(matches!(split_by_asset(&pairs, &db, 0.2, 1), Err(Error::Split(_))));
        assert!(matches!(split_by_asset(&pairs, &db, 1.0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn corpus_round_trips() {
        let db = db_with(
            vec![
                recording("r1", "A", 0),
                recording("r2", "A", DAY),
                Recording {
                    truth_class: Some(FaultClass::Bpfo),
                    truth_severity: Some(0.25),
                    spectrum: (0..SPECTRUM_LEN).map(|i| i as f64 / 7.0).collect(),
                    ..recording("r3", "B", 2 * DAY)
                },
            ],
            vec![annotation("n1", "A", DAY)],
        );
        let mut buf = Vec::new();
        write_corpus(&db, &mut buf).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), db);
    }

    fn corpus_text(db: &CorpusDatabase) -> String {
        let mut buf = Vec::new();
        write_corpus(db, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn short_spectrum_names_the_line() {
        let mut rec = recording("r1", "A", 0);
        rec.spectrum.pop();
        let text = corpus_text(&db_with(vec![rec], vec![]));
        let err = read_corpus(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("3199") && err.contains("3200"), "{err}");
    }

    #[test]
    fn annotation_on_unknown_asset_is_rejected() {
        let db = db_with(vec![recording("r1", "A", 0)], vec![annotation("n1", "Z", 0)]);
        let err = read_corpus(corpus_text(&db).as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("unknown asset_id Z")), "{err}");
    }

    #[test]
    fn duplicate_recording_ids_are_rejected() {
        let db = db_with(vec![recording("r", "A", 0), recording("r", "A", 1)], vec![]);
        assert!(matches!(db.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn header_is_checked() {
        let err = read_corpus(&br#"{"format":"other","version":1}"#[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(read_corpus(&b""[..]).is_err());
    }

    #[test]
    fn timestamps_are_iso8601_utc() {
        assert_eq!(iso8601::format(0), "1970-01-01T00:00:00Z");
        assert_eq!(iso8601::parse("1970-01-02T01:00:00+01:00"), Ok(DAY));
    }

    fn brute_force(db: &CorpusDatabase, window_days: u32) -> Vec<Pair> {
        let mut out = Vec::new();
        for a in &db.annotations {
            for r in &db.recordings {
                if r.asset_id == a.asset_id && (r.timestamp - a.date).abs() <= window_days as i64 * DAY {
                    out.push(Pair {
                        recording_id: r.recording_id.clone(),
                        annotation_id: a.annotation_id.clone(),
                    });
                }
            }
        }
        out.sort();
        out
    }

    fn small_corpus() -> impl Strategy<Value = CorpusDatabase> {
        let recs = prop::collection::vec((0u8..3, -40i64..40), 0..25);
        let anns = prop::collection::vec((0u8..3, -20i64..20), 0..6);
        (recs, anns).prop_map(|(recs, anns)| {
            let recordings = recs
                .into_iter()
                .enumerate()
                .map(|(i, (a, hours))| recording(&format!("r{i}"), &format!("A{a}"), hours * 3600 * 6))
                .collect();
            let mut db = db_with(recordings, vec![]);
            for a in 0..3 {
                db.register_subasset(&format!("A{a}"), "motor");
            }
            db.annotations = anns
                .into_iter()
                .enumerate()
                .map(|(i, (a, d))| annotation(&format!("n{i}"), &format!("A{a}"), d * DAY))
                .collect();
            db
        })
    }

    proptest! {
        #[test]
        fn propagation_matches_brute_force(db in small_corpus(), w in 1u32..15) {
            let mut got = propagate_annotations(&db, w).unwrap().pairs;
            got.sort();
            prop_assert_eq!(got, brute_force(&db, w));
        }

        #[test]
        fn wider_window_never_loses_pairs(db in small_corpus(), w in 1u32..15) {
            let narrow: HashSet<Pair> = propagate_annotations(&db, w).unwrap().pairs.into_iter().collect();
            let wide: HashSet<Pair> = propagate_annotations(&db, w + 1).unwrap().pairs.into_iter().collect();
            prop_assert!(narrow.is_subset(&wide));
        }
    }
}
