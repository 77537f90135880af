//! Synthetic condition-monitoring corpus with kinematic fault signatures.
//!
//! Spectra are amplitude spectra over 3200 bins spanning 0–500 Hz. Every
//! spectrum carries a seeded noise floor; fault classes add their signature
//! on top:
//!
//! - bearing faults (BPFO/BPFI): Gaussian peaks at harmonics of the ball-pass
//!   frequency, amplitude linear in severity;
//! - cable and sensor faults: energy piled up in the lowest bins, the cable
//!   signature sharper and the sensor signature broader;
//! - looseness: a long series of slowly decaying shaft-speed harmonics.
//!
//! Annotations are template text in the terse analyst register ("BPFO Env
//! low", "WO written cable replacement"), optionally corrupted the three ways
//! weak supervision goes wrong in practice: missing labels, labels that cover
//! healthy data, and labels naming the wrong fault.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    self, Annotation, CorpusDatabase, Header, Recording, SECONDS_PER_DAY, SPECTRUM_LEN,
    SPECTRUM_MAX_HZ,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultClass {
    Healthy,
    #[serde(rename = "BPFO")]
    Bpfo,
    #[serde(rename = "BPFI")]
    Bpfi,
    CableFault,
    SensorFault,
    Looseness,
}

impl FaultClass {
    pub const ALL: [FaultClass; 6] = [
        FaultClass::Healthy,
        FaultClass::Bpfo,
        FaultClass::Bpfi,
        FaultClass::CableFault,
        FaultClass::SensorFault,
        FaultClass::Looseness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultClass::Healthy => "Healthy",
            FaultClass::Bpfo => "BPFO",
            FaultClass::Bpfi => "BPFI",
            FaultClass::CableFault => "CableFault",
            FaultClass::SensorFault => "SensorFault",
            FaultClass::Looseness => "Looseness",
        }
    }

    pub fn is_fault(self) -> bool {
        self != FaultClass::Healthy
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for FaultClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown fault class {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BearingGeometry {
    pub n_rolling_elements: u32,
    /// Rolling-element diameter over pitch diameter, d/D.
    pub ball_diameter_ratio: f64,
    pub contact_angle_rad: f64,
}

impl Default for BearingGeometry {
    /// A 16-element spherical roller bearing, d/D = 0.15, 10° contact angle.
    fn default() -> Self {
        Self {
            n_rolling_elements: 16,
            ball_diameter_ratio: 0.15,
            contact_angle_rad: 10f64.to_radians(),
        }
    }
}

impl BearingGeometry {
    pub fn new(n_rolling_elements: u32, ball_diameter_ratio: f64, contact_angle_rad: f64) -> Result<Self> {
        let geom = Self {
            n_rolling_elements,
            ball_diameter_ratio,
            contact_angle_rad,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rolling_elements == 0 {
            return Err(Error::Config("bearing needs at least one rolling element".into()));
        }
        let ratio = self.ball_diameter_ratio;
        if !(ratio.is_finite() && ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("d/D ratio {ratio} outside (0, 1)")));
        }
        let angle = self.contact_angle_rad;
        if !(angle.is_finite() && (0.0..std::f64::consts::FRAC_PI_2).contains(&angle)) {
            return Err(Error::Config(format!("contact angle {angle} outside [0, pi/2)")));
        }
        Ok(())
    }
}

/// Outer- and inner-race ball-pass frequencies for a shaft rotating at
/// `shaft_hz`: `(n/2)·f·(1 ∓ (d/D)·cos φ)`.
pub fn bearing_frequencies(geom: &BearingGeometry, shaft_hz: f64) -> Result<(f64, f64)> {
    geom.validate()?;
    if !(shaft_hz.is_finite() && shaft_hz > 0.0) {
        return Err(Error::Parameter(format!("shaft_hz {shaft_hz} must be positive")));
    }
    let half_n = geom.n_rolling_elements as f64 / 2.0;
    let r = geom.ball_diameter_ratio * geom.contact_angle_rad.cos();
    Ok((half_n * shaft_hz * (1.0 - r), half_n * shaft_hz * (1.0 + r)))
}

/// Fixed peak width in bins.
pub const PEAK_SIGMA_BINS: f64 = 3.0;
const MAX_BEARING_HARMONICS: usize = 6;
const MAX_SHAFT_HARMONICS: usize = 12;
const BEARING_PEAK_GAIN: f64 = 1.0;
const BEARING_HARMONIC_DECAY: f64 = 0.8;
const LOOSENESS_PEAK_GAIN: f64 = 0.6;
const LOOSENESS_HARMONIC_DECAY: f64 = 0.92;
const CABLE_BIAS_GAIN: f64 = 20.0;
const CABLE_BIAS_DECAY_BINS: f64 = 6.0;
const SENSOR_BIAS_GAIN: f64 = 6.0;
const SENSOR_BIAS_DECAY_BINS: f64 = 20.0;
/// Generated amplitudes are stored on a 1e-5 grid.
const QUANTA_PER_UNIT: f64 = 1e5;

/// Generates one spectrum. Deterministic in all arguments.
pub fn gen_spectrum(
    class: FaultClass,
    severity: f64,
    shaft_hz: f64,
    geom: &BearingGeometry,
    noise_floor: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::Parameter(format!("severity {severity} outside [0, 1]")));
    }
    if !(noise_floor.is_finite() && noise_floor > 0.0) {
        return Err(Error::Parameter(format!("noise_floor {noise_floor} must be positive")));
    }
    let (bpfo, bpfi) = bearing_frequencies(geom, shaft_hz)?;
    let mut rng = seed::rng(seed, &[]);
    let mut spectrum: Vec<f64> = (0..SPECTRUM_LEN)
        .map(|_| noise_floor * rng.random_range(0.5..1.5))
        .collect();

    match class {
        FaultClass::Healthy => {}
        FaultClass::Bpfo | FaultClass::Bpfi => {
            let base = if class == FaultClass::Bpfo { bpfo } else { bpfi };
            add_harmonics(
                &mut spectrum,
                base,
                MAX_BEARING_HARMONICS,
                severity * BEARING_PEAK_GAIN,
                BEARING_HARMONIC_DECAY,
            )?;
        }
        FaultClass::CableFault => {
            add_low_bias(&mut spectrum, severity * CABLE_BIAS_GAIN, CABLE_BIAS_DECAY_BINS)
        }
        FaultClass::SensorFault => {
            add_low_bias(&mut spectrum, severity * SENSOR_BIAS_GAIN, SENSOR_BIAS_DECAY_BINS)
        }
        FaultClass::Looseness => add_harmonics(
            &mut spectrum,
            shaft_hz,
            MAX_SHAFT_HARMONICS,
            severity * LOOSENESS_PEAK_GAIN,
            LOOSENESS_HARMONIC_DECAY,
        )?,
    }

    for v in &mut spectrum {
        *v = (*v * QUANTA_PER_UNIT).round() / QUANTA_PER_UNIT;
    }
    Ok(spectrum)
}

fn add_harmonics(
    spectrum: &mut [f64],
    fundamental_hz: f64,
    max_harmonics: usize,
    amplitude: f64,
    decay: f64,
) -> Result<()> {
    let count = (1..=max_harmonics)
        .take_while(|k| *k as f64 * fundamental_hz < SPECTRUM_MAX_HZ)
        .count();
    if count == 0 {
        return Err(Error::Generation(format!(
            "characteristic frequency {fundamental_hz:.2} Hz has no harmonic below {SPECTRUM_MAX_HZ} Hz"
        )));
    }
    let hz_per_bin = SPECTRUM_MAX_HZ / SPECTRUM_LEN as f64;
    for k in 1..=count {
        add_peak(
            spectrum,
            k as f64 * fundamental_hz / hz_per_bin,
            amplitude * decay.powi(k as i32 - 1),
        );
    }
    Ok(())
}

/// Gaussian peak of width [`PEAK_SIGMA_BINS`] centred on a fractional bin.
fn add_peak(spectrum: &mut [f64], centre: f64, height: f64) {
    let lo = (centre - 5.0 * PEAK_SIGMA_BINS).floor().max(0.0) as usize;
    let hi = ((centre + 5.0 * PEAK_SIGMA_BINS).ceil() as usize).min(SPECTRUM_LEN - 1);
    for (bin, v) in spectrum.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let dx = (bin as f64 - centre) / PEAK_SIGMA_BINS;
        *v += height * (-0.5 * dx * dx).exp();
    }
}

fn add_low_bias(spectrum: &mut [f64], amplitude: f64, decay_bins: f64) {
    for (bin, v) in spectrum.iter_mut().enumerate() {
        let e = (-(bin as f64) / decay_bins).exp();
        if e < 1e-12 {
            break;
        }
        *v += amplitude * e;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detected,
    Worsened,
    Replaced,
}

const LOW_WORDS: &[&str] = &["low", "slightly elevated"];
const MEDIUM_WORDS: &[&str] = &["moderate", "increasing"];
const HIGH_WORDS: &[&str] = &["high", "strongly increased"];

pub fn severity_words(severity: f64) -> &'static [&'static str] {
    if severity < 0.4 {
        LOW_WORDS
    } else if severity < 0.7 {
        MEDIUM_WORDS
    } else {
        HIGH_WORDS
    }
}

fn templates(class: FaultClass, stage: Stage) -> &'static [&'static str] {
    use FaultClass::*;
    use Stage::*;
    match (class, stage) {
        (Healthy, _) => &[
            "Levels normal no action",
            "Checked OK levels normal",
            "No fault found levels normal",
        ],
        (Bpfo, Detected) => &[
            "BPFO Env {sev}",
            "BPFO in env {sev} levels keep watch",
            "BPFO indication {sev} levels",
        ],
        (Bpfo, Worsened) => &[
            "BPFO visible in mm/s as overtones {sev}. WO written on BPFO",
            "BPFO levels {sev} WO written on bearing",
        ],
        (Bpfo, Replaced) => &["Bearing replaced levels of BPFO low again"],
        (Bpfi, Detected) => &["BPFI Env {sev}", "BPFI in env {sev} levels keep watch"],
        (Bpfi, Worsened) => &[
            "BPFI visible as overtones {sev}. WO written on BPFI",
            "BPFI levels {sev} WO written on bearing",
        ],
        (Bpfi, Replaced) => &["Bearing replaced levels of BPFI low again"],
        (CableFault, Detected) => &[
            "Cable fault suspected {sev} bias check cable",
            "Bias close to zero check the cable",
        ],
        (CableFault, Worsened) => &[
            "WO written cable replacement",
            "Damaged cable {sev} bias WO cable replacement",
        ],
        (CableFault, Replaced) => &["New cable mounted levels normal"],
        (SensorFault, Detected) => &[
            "Sensor fault suspected {sev} bias",
            "Replace the sensor next stop",
        ],
        (SensorFault, Worsened) => &[
            "Sensor broken replace the sensor next stop",
            "Replace sensor WO written",
        ],
        (SensorFault, Replaced) => &["New sensor mounted levels normal"],
        (Looseness, Detected) => &[
            "Looseness {sev} levels check bolts",
            "Mechanical looseness {sev} in bearing housing",
        ],
        (Looseness, Worsened) => &[
            "Looseness {sev} WO written on foundation bolts",
            "Mechanical looseness {sev} risk of breakdown",
        ],
        (Looseness, Replaced) => &["Bolts tightened levels normal"],
    }
}

/// Draws an annotation text for (class, severity, stage). Deterministic in
/// all arguments.
pub fn gen_annotation(class: FaultClass, severity: f64, stage: Stage, seed: u64) -> String {
    let mut rng = seed::rng(seed, &[]);
    let template = templates(class, stage)
        .choose(&mut rng)
        .expect("template families are non-empty");
    let word = severity_words(severity)
        .choose(&mut rng)
        .expect("severity vocabularies are non-empty");
    template.replace("{sev}", word)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Probability an annotation is dropped (its recordings stay faulty).
    #[serde(default)]
    pub incomplete_rate: f64,
    /// Probability a faulty asset's post-annotation recordings are healthy.
    #[serde(default)]
    pub inexact_rate: f64,
    /// Probability an annotation names another fault class.
    #[serde(default)]
    pub inaccurate_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_assets: usize,
    pub classes_distribution: BTreeMap<FaultClass, f64>,
    /// Shaft speed range in revolutions per minute.
    pub rpm_range: (f64, f64),
    pub recordings_per_annotation: usize,
    /// Recordings per asset placed strictly outside the annotation window.
    pub extra_recordings: usize,
    pub window_days: u32,
    pub noise_floor: f64,
    pub corruption: Corruption,
    pub seed: u64,
    pub bearing: BearingGeometry,
    /// Range fault severities are drawn from, per asset.
    pub severity_range: (f64, f64),
    /// ISO-8601 start of the six-month observation span.
    pub start: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let classes_distribution = [
            FaultClass::Healthy,
            FaultClass::Bpfo,
            FaultClass::CableFault,
            FaultClass::SensorFault,
            FaultClass::Looseness,
        ]
        .into_iter()
        .map(|c| (c, 0.2))
        .collect();
        Self {
            n_assets: 60,
            classes_distribution,
            rpm_range: (570.0, 630.0),
            recordings_per_annotation: 50,
            extra_recordings: 4,
            window_days: corpus::DEFAULT_WINDOW_DAYS,
            noise_floor: 0.01,
            corruption: Corruption::default(),
            seed: 1,
            bearing: BearingGeometry::default(),
            severity_range: (0.3, 1.0),
            start: "2021-01-01T00:00:00Z".into(),
        }
    }
}

pub const CONFIG_FORMAT: &str = "tlsfd-config";
pub const CONFIG_VERSION: u32 = 1;
pub const SAMPLE_RATE_HZ: f64 = 1000.0;
const OBSERVATION_DAYS: i64 = 180;
const SUBASSET_NAMES: [&str; 3] = ["env", "vel", "acc"];

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::Config("n_assets must be positive".into()));
        }
        if self.classes_distribution.is_empty() {
            return Err(Error::Config("classes_distribution is empty".into()));
        }
        if let Some((c, w)) = self
            .classes_distribution
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::Config(format!("weight for {c} is {w}")));
        }
        let total: f64 = self.classes_distribution.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("class weights sum to {total}, not 1")));
        }
        let (lo, hi) = self.rpm_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!("rpm_range ({lo}, {hi}) must satisfy 0 < low < high")));
        }
        if self.recordings_per_annotation == 0 || self.window_days == 0 {
            return Err(Error::Config(
                "recordings_per_annotation and window_days must be positive".into(),
            ));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor > 0.0) {
            return Err(Error::Config(format!("noise_floor {} must be positive", self.noise_floor)));
        }
        let c = &self.corruption;
        for (name, rate) in [
            ("incomplete_rate", c.incomplete_rate),
            ("inexact_rate", c.inexact_rate),
            ("inaccurate_rate", c.inaccurate_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0, 1]")));
            }
        }
        let (slo, shi) = self.severity_range;
        if !(0.0 <= slo && slo <= shi && shi <= 1.0) {
            return Err(Error::Config(format!("severity_range ({slo}, {shi}) outside [0, 1]")));
        }
        self.bearing.validate()?;
        corpus::iso8601::parse(&self.start).map_err(Error::Config)?;
        Ok(())
    }

    /// Exact per-class asset counts by largest remainder.
    fn class_counts(&self) -> Vec<(FaultClass, usize)> {
        let n = self.n_assets as f64;
        let mut counts: Vec<(FaultClass, usize, f64)> = self
            .classes_distribution
            .iter()
            .map(|(c, w)| {
                let exact = w * n;
                (*c, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = counts.iter().map(|c| c.1).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
        for &i in order.iter().take(self.n_assets - assigned) {
            counts[i].1 += 1;
        }
        counts.into_iter().map(|(c, k, _)| (c, k)).collect()
    }
}

/// Builds a full corpus from `config`. Every asset receives one annotation
/// (subject to corruption) with `recordings_per_annotation` recordings spread
/// over its window plus `extra_recordings` outside it.
pub fn gen_corpus(config: &GeneratorConfig) -> Result<CorpusDatabase> {
    config.validate()?;
    let start = corpus::iso8601::parse(&config.start).map_err(Error::Config)?;

    let mut classes: Vec<FaultClass> = config
        .class_counts()
        .into_iter()
        .flat_map(|(c, k)| std::iter::repeat_n(c, k))
        .collect();
    classes.shuffle(&mut seed::rng(config.seed, &[seed::stream::CORPUS]));

    let mut db = CorpusDatabase::default();
    for (asset_idx, class) in classes.into_iter().enumerate() {
        gen_asset(config, start, asset_idx, class, &mut db)?;
    }
    db.validate()?;
    Ok(db)
}

fn gen_asset(
    config: &GeneratorConfig,
    start: i64,
    asset_idx: usize,
    class: FaultClass,
    db: &mut CorpusDatabase,
) -> Result<()> {
    let asset_seed = seed::derive(config.seed, &[seed::stream::CORPUS, asset_idx as u64]);
    let mut rng = seed::rng(asset_seed, &[0]);
    let asset_id = format!("A{asset_idx:03}");

    let n_sub = rng.random_range(1..=SUBASSET_NAMES.len());
    let subassets = &SUBASSET_NAMES[..n_sub];
    for s in subassets {
        db.register_subasset(&asset_id, s);
    }

    let (rpm_lo, rpm_hi) = config.rpm_range;
    let shaft_hz = rng.random_range(rpm_lo..rpm_hi) / 60.0;
    let severity = if class.is_fault() {
        let (lo, hi) = config.severity_range;
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    } else {
        0.0
    };
    let window = config.window_days as i64 * SECONDS_PER_DAY;
    let span = OBSERVATION_DAYS * SECONDS_PER_DAY;
    let date = start + window + rng.random_range(0..span);

    let c = config.corruption;
    let drop_annotation = rng.random_bool(c.incomplete_rate);
    let healthy_after = class.is_fault() && rng.random_bool(c.inexact_rate);
    let mislabel = class.is_fault() && rng.random_bool(c.inaccurate_rate);

    let n = config.recordings_per_annotation;
    let mut timestamps: Vec<i64> = (0..n)
        .map(|j| {
            let offset = (2 * window) as f64 * (j as f64 + rng.random_range(0.0..1.0)) / n as f64;
            date - window + offset as i64
        })
        .collect();
    for j in 0..config.extra_recordings {
        let days_out = config.window_days as i64 + 1 + j as i64;
        let sign = if j % 2 == 0 { 1 } else { -1 };
        timestamps.push(date + sign * days_out * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY));
    }

    for (j, ts) in timestamps.into_iter().enumerate() {
        let (truth, rec_severity) = if healthy_after && ts > date {
            (FaultClass::Healthy, 0.0)
        } else if class.is_fault() {
            (class, (severity + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
        } else {
            (class, 0.0)
        };
        let rec_shaft = shaft_hz * (1.0 + rng.random_range(-0.005..0.005));
        let spectrum = gen_spectrum(
            truth,
            rec_severity,
            rec_shaft,
            &config.bearing,
            config.noise_floor,
            seed::derive(asset_seed, &[1, j as u64]),
        )?;
        let subasset = subassets[j % subassets.len()];
        db.recordings.push(Recording {
            recording_id: format!("{asset_id}-{subasset}-{j:03}"),
            asset_id: asset_id.clone(),
            subasset_id: subasset.to_string(),
            timestamp: ts,
            sample_rate_hz: SAMPLE_RATE_HZ,
            spectrum,
            truth_class: Some(truth),
            truth_severity: Some(rec_severity),
        });
    }

    if !drop_annotation {
        let stage = if severity < 0.6 { Stage::Detected } else { Stage::Worsened };
        let text_class = if mislabel {
            let others: Vec<FaultClass> = FaultClass::ALL
                .into_iter()
                .filter(|c| c.is_fault() && *c != class)
                .collect();
            *others.choose(&mut rng).expect("several fault classes")
        } else {
            class
        };
        db.annotations.push(Annotation {
            annotation_id: format!("N{asset_idx:03}"),
            asset_id,
            date,
            text: gen_annotation(text_class, severity, stage, seed::derive(asset_seed, &[2])),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ConfigLine {
    Config(GeneratorConfig),
}

pub fn write_config<W: Write>(config: &GeneratorConfig, mut out: W) -> Result<()> {
    let io = |e| Error::io("<config writer>", e);
    corpus::write_json_line(
        &mut out,
        &Header {
            format: CONFIG_FORMAT.into(),
            version: CONFIG_VERSION,
        },
    )
    .map_err(io)?;
    corpus::write_json_line(&mut out, &ConfigLine::Config(config.clone())).map_err(io)?;
    out.flush().map_err(io)
}

pub fn read_config<R: BufRead>(input: R) -> Result<GeneratorConfig> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(Error::io("<config reader>", e)),
            None => Err(Error::Parse {
                line: 0,
                message: format!("missing {what}"),
            }),
        }
    };
    let (lineno, header) = next("header")?;
    let header: Header = serde_json::from_str(&header).map_err(|e| Error::Parse {
        line: lineno,
        message: format!("bad header: {e}"),
    })?;
    corpus::check_header(&header, CONFIG_FORMAT, CONFIG_VERSION, lineno)?;
    let (lineno, body) = next("config record")?;
    let ConfigLine::Config(config) = serde_json::from_str(&body).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<GeneratorConfig> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_config(BufReader::new(file))
}

pub fn save_config(config: &GeneratorConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_config(config, BufWriter::new(file))
}

/// Median of a spectrum; used by signature checks.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}
