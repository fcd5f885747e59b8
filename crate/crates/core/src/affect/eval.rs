use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Dataset, Sample, TrainedModel};
use super::svm::{Kernel, SmoOptions};
use super::AffectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
}

impl KernelKind {
    /// Polynomial degree 3 with unit offset; γ = 1/feature count for poly and RBF.
    pub fn kernel(self, dim: usize) -> Kernel {
        let gamma = 1.0 / dim.max(1) as f64;
        match self {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Poly => Kernel::Poly { degree: 3, gamma, coef0: 1.0 },
            KernelKind::Rbf => Kernel::Rbf { gamma },
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = AffectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "poly" | "polynomial" => Ok(Self::Poly),
            "rbf" => Ok(Self::Rbf),
            _ => Err(AffectError::BadParameter(format!("unknown kernel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "classifier")]
pub enum ClassifierSpec {
    Svm { kernel: KernelKind, c: f64 },
    Knn { k: usize },
}

impl ClassifierSpec {
    pub fn svm(kernel: KernelKind) -> Self {
        Self::Svm { kernel, c: 1.0 }
    }

    pub fn train(&self, data: &Dataset) -> Result<(TrainedModel, f64), AffectError> {
        match *self {
            ClassifierSpec::Svm { kernel, c } => {
                let opts = SmoOptions { c, ..SmoOptions::default() };
                let (m, stats) = TrainedModel::train_svm(data, kernel.kernel(data.dim()), &opts)?;
                let kkt = stats.iter().map(|s| s.kkt_violation).fold(0.0, f64::max);
                Ok((m, kkt))
            }
            ClassifierSpec::Knn { k } => Ok((TrainedModel::train_knn(data, k)?, 0.0)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ClassifierSpec::Svm { kernel, .. } => format!("svm-{kernel:?}").to_ascii_lowercase(),
            ClassifierSpec::Knn { k } => format!("knn-k{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// Binary problems only; the first label is the positive class.
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Largest KKT gap over every SVM fit (0 for KNN).
    pub max_kkt_violation: f64,
}

/// Samples in a content-defined order, so results do not depend on input row order.
fn canonical(data: &Dataset) -> Vec<Sample> {
    let mut s = data.samples.clone();
    s.sort_by(|a, b| {
        a.y.cmp(&b.y).then_with(|| {
            a.x.iter().zip(&b.x).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    s
}

/// Fold index per sample: each class shuffled with the seed and dealt round-robin.
pub fn stratified_folds(samples: &[Sample], n_labels: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; samples.len()];
    let mut next = 0;
    for c in 0..n_labels {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].y == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

/// Mann–Whitney form of the trapezoidal ROC area.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn evaluate(spec: &ClassifierSpec, data: &Dataset, folds: usize, seed: u64) -> Result<Metrics, AffectError> {
    if folds < 2 {
        return Err(AffectError::BadParameter("need at least two folds".into()));
    }
    let counts = data.class_counts();
    if data.samples.is_empty() || counts.is_empty() {
        return Err(AffectError::InsufficientClassMembers("<none>".into(), 0, folds));
    }
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < folds) {
        return Err(AffectError::InsufficientClassMembers(data.labels[c].clone(), n, folds));
    }
    if counts.len() < 2 {
        return Err(AffectError::DegenerateData);
    }
    let samples = canonical(data);
    let fold_of = stratified_folds(&samples, data.labels.len(), folds, seed);
    let results: Vec<Result<(Vec<(usize, usize, f64)>, f64), AffectError>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train = Dataset {
                labels: data.labels.clone(),
                samples: samples.iter().zip(&fold_of).filter(|(_, &k)| k != f).map(|(s, _)| s.clone()).collect(),
            };
            let (model, kkt) = spec.train(&train)?;
            let preds = samples
                .iter()
                .zip(&fold_of)
                .filter(|(_, &k)| k == f)
                .map(|(s, _)| (s.y, model.predict(&s.x), model.decision(&s.x)))
                .collect();
            Ok((preds, kkt))
        })
        .collect();
    let n_labels = data.labels.len();
    let mut confusion = vec![vec![0usize; n_labels]; n_labels];
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let mut max_kkt: f64 = 0.0;
    for r in results {
        let (preds, kkt) = r?;
        max_kkt = max_kkt.max(kkt);
        for (y, p, d) in preds {
            confusion[y][p] += 1;
            if y == 0 { pos.push(d) } else { neg.push(d) }
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..n_labels).map(|i| confusion[i][i]).sum();
    let (auc_v, precision, recall) = if n_labels == 2 {
        let tp = confusion[0][0] as f64;
        let predicted_pos = (confusion[0][0] + confusion[1][0]) as f64;
        let actual_pos = (confusion[0][0] + confusion[0][1]) as f64;
        (
            Some(auc(&pos, &neg)),
            Some(if predicted_pos > 0.0 { tp / predicted_pos } else { 0.0 }),
            Some(tp / actual_pos),
        )
    } else {
        (None, None, None)
    };
    Ok(Metrics {
        labels: data.labels.clone(),
        accuracy: correct as f64 / total as f64,
        auc: auc_v,
        precision,
        recall,
        confusion,
        max_kkt_violation: max_kkt,
    })
}

/// Mean accuracy over `repeats` random relabellings that keep the class sizes.
pub fn permutation_baseline(
    spec: &ClassifierSpec,
    data: &Dataset,
    folds: usize,
    seed: u64,
    repeats: usize,
) -> Result<f64, AffectError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let base = canonical(data);
    let mut sum = 0.0;
    for r in 0..repeats.max(1) {
        let mut ys: Vec<usize> = base.iter().map(|s| s.y).collect();
        ys.shuffle(&mut rng);
        let shuffled = Dataset {
            labels: data.labels.clone(),
            samples: base.iter().zip(ys).map(|(s, y)| Sample { x: s.x.clone(), y }).collect(),
        };
        sum += evaluate(spec, &shuffled, folds, seed.wrapping_add(r as u64))?.accuracy;
    }
    Ok(sum / repeats.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub metrics: Metrics,
}

/// Every class pair, then all classes together.
pub fn pairwise_report(
    spec: &ClassifierSpec,
    data: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<ReportRow>, AffectError> {
    let n = data.labels.len();
    let mut rows = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let sub = data.subset(&[a, b]);
            rows.push(ReportRow {
                name: format!("{} vs {}", data.labels[a], data.labels[b]),
                metrics: evaluate(spec, &sub, folds, seed)?,
            });
        }
    }
    if n > 2 {
        rows.push(ReportRow { name: data.labels.join(" vs "), metrics: evaluate(spec, data, folds, seed)? });
    }
    Ok(rows)
}
