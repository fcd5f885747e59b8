use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureConfig};
use super::model::{Dataset, Sample};
use super::AffectError;

pub const EDA_SAMPLE_RATE_HZ: f64 = 32.0;
pub const SCR_TAU_RISE_S: f64 = 0.75;
pub const SCR_TAU_DECAY_S: f64 = 2.0;
pub const CONVERSATION_S: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubKind {
    Learn,
    Play,
    Feedback,
}

impl SubKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "learn" => Some(Self::Learn),
            "play" => Some(Self::Play),
            "feedback" => Some(Self::Feedback),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Learn => "learn",
            Self::Play => "play",
            Self::Feedback => "feedback",
        }
    }
}

/// One annotation row; rows without a sub-segment mark whole conversations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_s: f64,
    pub end_s: f64,
    pub section: String,
    pub subsegment: Option<SubKind>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaRecording {
    pub sample_rate_hz: f64,
    /// Skin conductance, microsiemens.
    pub samples: Vec<f64>,
    pub annotations: Vec<Annotation>,
}

impl EdaRecording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    fn index(&self, t: f64) -> usize {
        ((t * self.sample_rate_hz).round().max(0.0) as usize).min(self.samples.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSegment {
    pub kind: SubKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub section: String,
    pub label: String,
    pub start: usize,
    pub samples: Vec<f64>,
    pub subs: Vec<SubSegment>,
}

/// One segment per conversation annotation, with its sub-segments attached.
pub fn segment_conversations(rec: &EdaRecording) -> Result<Vec<Segment>, AffectError> {
    let dur = rec.duration_s() + 1e-9;
    for a in &rec.annotations {
        if !(a.start_s >= 0.0 && a.start_s < a.end_s && a.end_s <= dur) {
            return Err(AffectError::MissingAnnotations(format!(
                "interval [{}, {}] lies outside the {:.1} s record",
                a.start_s, a.end_s, dur
            )));
        }
    }
    let mut convs: Vec<&Annotation> = rec.annotations.iter().filter(|a| a.subsegment.is_none()).collect();
    if convs.is_empty() {
        return Err(AffectError::MissingAnnotations("no conversation intervals".into()));
    }
    convs.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    if convs.windows(2).any(|w| w[1].start_s < w[0].end_s - 1e-9) {
        return Err(AffectError::MissingAnnotations("conversation intervals overlap".into()));
    }
    let mut segments: Vec<Segment> = convs
        .iter()
        .enumerate()
        .map(|(id, a)| {
            let (s, e) = (rec.index(a.start_s), rec.index(a.end_s));
            Segment {
                id,
                section: a.section.clone(),
                label: a.label.clone(),
                start: s,
                samples: rec.samples[s..e].to_vec(),
                subs: Vec::new(),
            }
        })
        .collect();
    for a in rec.annotations.iter().filter(|a| a.subsegment.is_some()) {
        let parent = convs
            .iter()
            .position(|c| a.start_s >= c.start_s - 1e-9 && a.end_s <= c.end_s + 1e-9)
            .ok_or_else(|| {
                AffectError::MissingAnnotations(format!(
                    "sub-segment [{}, {}] is not inside any conversation",
                    a.start_s, a.end_s
                ))
            })?;
        let seg = &mut segments[parent];
        seg.subs.push(SubSegment {
            kind: a.subsegment.expect("filtered"),
            start: rec.index(a.start_s) - seg.start,
            end: rec.index(a.end_s) - seg.start,
        });
    }
    for seg in &mut segments {
        seg.subs.sort_by_key(|s| s.start);
        if seg.subs.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(AffectError::MissingAnnotations(format!("sub-segments overlap in conversation {}", seg.id)));
        }
    }
    Ok(segments)
}

/// Parameters of one synthetic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub label: String,
    pub tonic_level: f64,
    /// Linear drift, µS per second.
    pub drift: f64,
    pub scr_rate_per_min: f64,
    pub scr_amp: f64,
    pub seed: u64,
}

impl ClassParams {
    pub fn new(label: &str, scr_rate_per_min: f64, seed: u64) -> Self {
        Self { label: label.into(), tonic_level: 2.0, drift: 0.001, scr_rate_per_min, scr_amp: 0.4, seed }
    }
}

/// Tonic level plus drift plus bi-exponential SCRs at Poisson onsets,
/// annotated as back-to-back 45 s conversations split into three equal parts.
pub fn synth_eda(p: &ClassParams, duration_s: f64) -> Result<EdaRecording, AffectError> {
    if !(p.tonic_level > 0.0 && p.scr_amp > 0.0 && p.scr_rate_per_min >= 0.0 && duration_s > 0.0) {
        return Err(AffectError::BadParameter("synthetic EDA parameters must be positive".into()));
    }
    let fs = EDA_SAMPLE_RATE_HZ;
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut onsets = Vec::new();
    if p.scr_rate_per_min > 0.0 {
        let gap = Exp::new(p.scr_rate_per_min / 60.0).expect("positive rate");
        let mut t = gap.sample(&mut rng);
        while t < duration_s {
            onsets.push(t);
            t += gap.sample(&mut rng);
        }
    }
    let mut samples: Vec<f64> = (0..n).map(|i| p.tonic_level + p.drift * i as f64 / fs).collect();
    let ring = (SCR_TAU_DECAY_S * 20.0 * fs) as usize;
    for &t0 in &onsets {
        let first = (t0 * fs).ceil() as usize;
        for (i, s) in samples.iter_mut().enumerate().skip(first).take(ring) {
            let dt = i as f64 / fs - t0;
            *s += p.scr_amp * ((-dt / SCR_TAU_DECAY_S).exp() - (-dt / SCR_TAU_RISE_S).exp());
        }
    }
    let mut annotations = Vec::new();
    let mut start = 0.0;
    while start + CONVERSATION_S <= duration_s + 1e-9 {
        let end = start + CONVERSATION_S;
        annotations.push(Annotation {
            start_s: start,
            end_s: end,
            section: p.label.clone(),
            subsegment: None,
            label: p.label.clone(),
        });
        let third = CONVERSATION_S / 3.0;
        for (k, kind) in [SubKind::Learn, SubKind::Play, SubKind::Feedback].into_iter().enumerate() {
            annotations.push(Annotation {
                start_s: start + k as f64 * third,
                end_s: start + (k + 1) as f64 * third,
                section: p.label.clone(),
                subsegment: Some(kind),
                label: p.label.clone(),
            });
        }
        start = end;
    }
    Ok(EdaRecording { sample_rate_hz: fs, samples, annotations })
}

/// Feature dataset from synthetic classes, `per_class` conversations each.
pub fn synth_dataset(classes: &[ClassParams], per_class: usize, cfg: &FeatureConfig) -> Result<Dataset, AffectError> {
    let mut recs = Vec::new();
    for c in classes {
        recs.push(synth_eda(c, per_class as f64 * CONVERSATION_S)?);
    }
    dataset_from_recordings(&recs, cfg)
}

/// Features of every conversation segment, labelled by its annotation label.
pub fn dataset_from_recordings(recs: &[EdaRecording], cfg: &FeatureConfig) -> Result<Dataset, AffectError> {
    let mut labels: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    for rec in recs {
        for seg in segment_conversations(rec)? {
            let y = match labels.iter().position(|l| *l == seg.label) {
                Some(i) => i,
                None => {
                    labels.push(seg.label.clone());
                    labels.len() - 1
                }
            };
            let x = extract_features(&seg.samples, cfg)?;
            samples.push(Sample { x, y });
        }
    }
    Ok(Dataset { labels, samples })
}

#[derive(Deserialize)]
struct SignalRow {
    #[allow(dead_code)]
    t_s: f64,
    microsiemens: f64,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRow {
    start_s: f64,
    end_s: f64,
    section: String,
    subsegment: String,
    label: String,
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, AffectError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: AnnotationRow = row?;
        let sub = match r.subsegment.trim() {
            "" => None,
            s => Some(SubKind::parse(s).ok_or_else(|| AffectError::MissingAnnotations(format!("unknown sub-segment {s:?}")))?),
        };
        out.push(Annotation { start_s: r.start_s, end_s: r.end_s, section: r.section, subsegment: sub, label: r.label });
    }
    Ok(out)
}

/// Signal CSV (`t_s,microsiemens`) plus its annotation sidecar.
pub fn load_recording(signal: impl AsRef<Path>, annotations: impl AsRef<Path>) -> Result<EdaRecording, AffectError> {
    let mut rdr = csv::Reader::from_path(signal)?;
    let mut samples = Vec::new();
    for row in rdr.deserialize() {
        let r: SignalRow = row?;
        samples.push(r.microsiemens);
    }
    Ok(EdaRecording { sample_rate_hz: EDA_SAMPLE_RATE_HZ, samples, annotations: load_annotations(annotations)? })
}

fn sidecar(signal: &Path) -> PathBuf {
    let stem = signal.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    signal.with_file_name(format!("{stem}.annotations.csv"))
}

/// Every `NAME.csv` with a `NAME.annotations.csv` sidecar, in file-name order.
pub fn load_recording_dir(dir: impl AsRef<Path>) -> Result<Vec<EdaRecording>, AffectError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && !p.to_string_lossy().ends_with(".annotations.csv")
                && sidecar(p).exists()
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| load_recording(p, sidecar(p))).collect()
}

pub fn write_recording(rec: &EdaRecording, signal: impl AsRef<Path>) -> Result<(), AffectError> {
    let signal = signal.as_ref();
    let mut w = csv::Writer::from_path(signal)?;
    w.write_record(["t_s", "microsiemens"])?;
    for (i, v) in rec.samples.iter().enumerate() {
        w.write_record([format!("{:?}", i as f64 / rec.sample_rate_hz), format!("{v:?}")])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(sidecar(signal))?;
    for a in &rec.annotations {
        w.serialize(AnnotationRow {
            start_s: a.start_s,
            end_s: a.end_s,
            section: a.section.clone(),
            subsegment: a.subsegment.map(SubKind::as_str).unwrap_or_default().into(),
            label: a.label.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}
