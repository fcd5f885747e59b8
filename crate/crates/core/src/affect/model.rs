use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::knn::knn_classify;
use super::svm::{svm_train_binary, BinarySvm, Kernel, SmoOptions, SmoStats};
use super::AffectError;

pub const MODEL_MAGIC: &str = "melodica-model v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    /// Class names; `Sample::y` indexes into this list.
    pub labels: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.labels.len()];
        for s in &self.samples {
            c[s.y] += 1;
        }
        c
    }

    /// Keep only the listed classes, relabelled in the given order.
    pub fn subset(&self, classes: &[usize]) -> Dataset {
        Dataset {
            labels: classes.iter().map(|&c| self.labels[c].clone()).collect(),
            samples: self
                .samples
                .iter()
                .filter_map(|s| classes.iter().position(|&c| c == s.y).map(|y| Sample { x: s.x.clone(), y }))
                .collect(),
        }
    }
}

/// Per-feature z-scoring fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(samples: &[Sample]) -> Self {
        let d = samples.first().map_or(0, |s| s.x.len());
        let n = samples.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s.x[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = (samples.iter().map(|s| (s.x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if v > 1e-12 { v } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub pos: usize,
    pub neg: usize,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Svm { labels: Vec<String>, norm: Normalizer, machines: Vec<PairMachine> },
    Knn { labels: Vec<String>, norm: Normalizer, k: usize, points: Vec<Sample> },
}

impl TrainedModel {
    /// One-vs-one SMO machines over every class pair.
    pub fn train_svm(data: &Dataset, kernel: Kernel, opts: &SmoOptions) -> Result<(Self, Vec<SmoStats>), AffectError> {
        let counts = data.class_counts();
        if data.samples.is_empty() {
            return Err(AffectError::EmptyTrainingSet);
        }
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(AffectError::DegenerateData);
        }
        let norm = Normalizer::fit(&data.samples);
        let xs: Vec<Vec<f64>> = data.samples.iter().map(|s| norm.apply(&s.x)).collect();
        let mut machines = Vec::new();
        let mut stats = Vec::new();
        for pos in 0..data.labels.len() {
            for neg in pos + 1..data.labels.len() {
                if counts[pos] == 0 || counts[neg] == 0 {
                    continue;
                }
                let idx: Vec<usize> = (0..xs.len()).filter(|&i| data.samples[i].y == pos || data.samples[i].y == neg).collect();
                let x: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| if data.samples[i].y == pos { 1.0 } else { -1.0 }).collect();
                let (svm, _, st) = svm_train_binary(&x, &y, kernel, opts)?;
                machines.push(PairMachine { pos, neg, svm });
                stats.push(st);
            }
        }
        Ok((Self::Svm { labels: data.labels.clone(), norm, machines }, stats))
    }

    pub fn train_knn(data: &Dataset, k: usize) -> Result<Self, AffectError> {
        if data.samples.is_empty() {
            return Err(AffectError::EmptyTrainingSet);
        }
        if k == 0 || k > data.samples.len() {
            return Err(AffectError::BadParameter(format!("K = {k} with {} samples", data.samples.len())));
        }
        let norm = Normalizer::fit(&data.samples);
        let points = data.samples.iter().map(|s| Sample { x: norm.apply(&s.x), y: s.y }).collect();
        Ok(Self::Knn { labels: data.labels.clone(), norm, k, points })
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Self::Svm { labels, .. } | Self::Knn { labels, .. } => labels,
        }
    }

    /// Per-class scores: vote counts plus a small decision-sum tie-break for SVMs,
    /// neighbour shares for KNN.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Svm { labels, norm, machines } => {
                let z = norm.apply(x);
                let mut votes = vec![0.0; labels.len()];
                let mut sums = vec![0.0; labels.len()];
                for m in machines {
                    let d = m.svm.decision(&z);
                    if d > 0.0 { votes[m.pos] += 1.0 } else { votes[m.neg] += 1.0 }
                    sums[m.pos] += d;
                    sums[m.neg] -= d;
                }
                votes.iter().zip(&sums).map(|(v, s)| v * 1e6 + s).collect()
            }
            Self::Knn { labels, norm, k, points } => {
                let z = norm.apply(x);
                let near = super::knn::neighbours(points, &z);
                let mut share = vec![0.0; labels.len()];
                for &(i, _) in &near[..*k] {
                    share[points[i].y] += 1.0 / *k as f64;
                }
                share
            }
        }
    }

    /// Binary decision value for the first class against the second.
    pub fn decision(&self, x: &[f64]) -> f64 {
        match self {
            Self::Svm { norm, machines, .. } if machines.len() == 1 => machines[0].svm.decision(&norm.apply(x)),
            _ => {
                let s = self.scores(x);
                s[0] - s.get(1).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Self::Knn { norm, k, points, .. } => knn_classify(points, &norm.apply(x), *k).expect("trained on data"),
            Self::Svm { .. } => {
                let s = self.scores(x);
                // Highest score; first index on exact ties.
                s.iter().enumerate().fold(0, |b, (i, v)| if *v > s[b] { i } else { b })
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let vec = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let labels = self.labels();
        writeln!(s, "{MODEL_MAGIC}").unwrap();
        let (norm, kind) = match self {
            Self::Svm { norm, .. } => (norm, "svm"),
            Self::Knn { norm, .. } => (norm, "knn"),
        };
        writeln!(s, "kind {kind}").unwrap();
        writeln!(s, "labels {} {}", labels.len(), labels.join(" ")).unwrap();
        writeln!(s, "features {}", norm.mean.len()).unwrap();
        writeln!(s, "mean {}", vec(&norm.mean)).unwrap();
        writeln!(s, "std {}", vec(&norm.std)).unwrap();
        match self {
            Self::Svm { machines, .. } => {
                let m0 = &machines[0].svm;
                match m0.kernel {
                    Kernel::Linear => writeln!(s, "kernel linear").unwrap(),
                    Kernel::Poly { degree, gamma, coef0 } => {
                        writeln!(s, "kernel poly {degree} {gamma:?} {coef0:?}").unwrap()
                    }
                    Kernel::Rbf { gamma } => writeln!(s, "kernel rbf {gamma:?}").unwrap(),
                }
                writeln!(s, "c {:?}", m0.c).unwrap();
                writeln!(s, "machines {}", machines.len()).unwrap();
                for m in machines {
                    writeln!(s, "machine {} {} {:?} {}", m.pos, m.neg, m.svm.bias, m.svm.support.len()).unwrap();
                    for (sv, c) in m.svm.support.iter().zip(&m.svm.coef) {
                        writeln!(s, "sv {c:?} {}", vec(sv)).unwrap();
                    }
                }
            }
            Self::Knn { k, points, .. } => {
                writeln!(s, "k {k}").unwrap();
                writeln!(s, "points {}", points.len()).unwrap();
                for p in points {
                    writeln!(s, "pt {} {}", p.y, vec(&p.x)).unwrap();
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, AffectError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |m: String| AffectError::Format(m);
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad(format!("missing {MODEL_MAGIC:?} header")));
        }
        let mut field = |name: &str| -> Result<Vec<String>, AffectError> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(format!("expected {name}, found {line:?}")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| AffectError::Format(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| AffectError::Format(format!("{s:?}: {e}")));
        let nums = |v: &[String]| v.iter().map(|s| num(s)).collect::<Result<Vec<f64>, _>>();

        let kind = field("kind")?;
        let lab = field("labels")?;
        let n_labels = int(lab.first().ok_or_else(|| bad("labels count".into()))?)?;
        let labels: Vec<String> = lab[1..].to_vec();
        if labels.len() != n_labels {
            return Err(bad("label count mismatch".into()));
        }
        let d = int(&field("features")?[0])?;
        let norm = Normalizer { mean: nums(&field("mean")?)?, std: nums(&field("std")?)? };
        if norm.mean.len() != d || norm.std.len() != d {
            return Err(bad("normalizer length mismatch".into()));
        }
        match kind.first().map(String::as_str) {
            Some("svm") => {
                let k = field("kernel")?;
                let kernel = match k.first().map(String::as_str) {
                    Some("linear") => Kernel::Linear,
                    Some("poly") if k.len() == 4 => {
                        Kernel::Poly { degree: int(&k[1])? as u32, gamma: num(&k[2])?, coef0: num(&k[3])? }
                    }
                    Some("rbf") if k.len() == 2 => Kernel::Rbf { gamma: num(&k[1])? },
                    _ => return Err(bad(format!("bad kernel line {k:?}"))),
                };
                let c = num(&field("c")?[0])?;
                let count = int(&field("machines")?[0])?;
                let mut machines = Vec::with_capacity(count);
                for _ in 0..count {
                    let h = field("machine")?;
                    if h.len() != 4 {
                        return Err(bad("bad machine line".into()));
                    }
                    let (pos, neg, bias, nsv) = (int(&h[0])?, int(&h[1])?, num(&h[2])?, int(&h[3])?);
                    let mut support = Vec::with_capacity(nsv);
                    let mut coef = Vec::with_capacity(nsv);
                    for _ in 0..nsv {
                        let v = nums(&field("sv")?)?;
                        if v.len() != d + 1 {
                            return Err(bad("support vector length mismatch".into()));
                        }
                        coef.push(v[0]);
                        support.push(v[1..].to_vec());
                    }
                    machines.push(PairMachine { pos, neg, svm: BinarySvm { kernel, c, support, coef, bias } });
                }
                Ok(Self::Svm { labels, norm, machines })
            }
            Some("knn") => {
                let k = int(&field("k")?[0])?;
                let count = int(&field("points")?[0])?;
                let mut points = Vec::with_capacity(count);
                for _ in 0..count {
                    let p = field("pt")?;
                    if p.len() != d + 1 {
                        return Err(bad("point length mismatch".into()));
                    }
                    points.push(Sample { y: int(&p[0])?, x: nums(&p[1..])? });
                }
                Ok(Self::Knn { labels, norm, k, points })
            }
            other => Err(bad(format!("unknown model kind {other:?}"))),
        }
    }
}
