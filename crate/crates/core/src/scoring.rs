//! Melody scoring: edit distance, the likelihood gate and the extra-practice policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::NoteId;

/// Pass gate on the likelihood for multi-note trials.
pub const PASS_LIKELIHOOD: f64 = 2.0 / 3.0;
const PASS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("threshold must lie in (0, 1)")]
    BadThreshold,
    #[error("tracker has no trials")]
    NoTrials,
}

/// Edit distance with unit insertion, deletion and substitution costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // Single rolling row over `b`.
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(x != y);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// `(len(target) - lev) / len(target)`, clamped below at zero.
pub fn likelihood<T: PartialEq>(target: &[T], detected: &[T]) -> Result<f64, ScoringError> {
    if target.is_empty() {
        return Err(ScoringError::EmptyTarget);
    }
    let n = target.len() as f64;
    Ok(((n - levenshtein(target, detected) as f64) / n).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Single notes must match exactly; longer targets pass at likelihood >= 2/3.
pub fn judge<T: PartialEq>(target: &[T], detected: &[T]) -> Result<Verdict, ScoringError> {
    if target.is_empty() {
        return Err(ScoringError::EmptyTarget);
    }
    let pass = if target.len() == 1 {
        detected == target
    } else {
        likelihood(target, detected)? >= PASS_LIKELIHOOD - PASS_SLACK
    };
    Ok(if pass { Verdict::Pass } else { Verdict::Fail })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target: Vec<NoteId>,
    pub detected: Vec<NoteId>,
    pub likelihood: f64,
    pub verdict: Verdict,
    pub t_s: f64,
}

impl TrialRecord {
    pub fn score(
        target: Vec<NoteId>,
        detected: Vec<NoteId>,
        t_s: f64,
    ) -> Result<Self, ScoringError> {
        let likelihood = likelihood(&target, &detected)?;
        let verdict = judge(&target, &detected)?;
        Ok(Self {
            target,
            detected,
            likelihood,
            verdict,
            t_s,
        })
    }
}

pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTracker {
    correct: u32,
    total: u32,
    threshold: f64,
}

impl Default for AccuracyTracker {
    fn default() -> Self {
        Self {
            correct: 0,
            total: 0,
            threshold: DEFAULT_ACCURACY_THRESHOLD,
        }
    }
}

impl AccuracyTracker {
    pub fn new(threshold: f64) -> Result<Self, ScoringError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ScoringError::BadThreshold);
        }
        Ok(Self {
            threshold,
            ..Self::default()
        })
    }

    pub fn with_counts(correct: u32, total: u32, threshold: f64) -> Result<Self, ScoringError> {
        let mut t = Self::new(threshold)?;
        t.correct = correct.min(total);
        t.total = total;
        Ok(t)
    }

    pub fn record(&mut self, verdict: Verdict) {
        self.total += 1;
        if verdict.is_pass() {
            self.correct += 1;
        }
    }

    pub fn correct(&self) -> u32 {
        self.correct
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "trials")]
pub enum PracticeDecision {
    Continue,
    ExtraTrials(u32),
}

/// Smallest number of extra trials that, all passed, lifts accuracy back to the threshold.
pub fn practice_policy(tracker: &AccuracyTracker) -> Result<PracticeDecision, ScoringError> {
    if tracker.total == 0 {
        return Err(ScoringError::NoTrials);
    }
    let (c, t, th) = (
        tracker.correct as f64,
        tracker.total as f64,
        tracker.threshold,
    );
    if c / t >= th - 1e-12 {
        return Ok(PracticeDecision::Continue);
    }
    let estimate = ((th * t - c) / (1.0 - th) - 1e-9).ceil().max(1.0) as u32;
    // Float rounding can leave the estimate one off in either direction.
    let restores = |k: u32| (c + k as f64) / (t + k as f64) >= th - 1e-12;
    let mut k = estimate.saturating_sub(1).max(1);
    while !restores(k) {
        k += 1;
    }
    Ok(PracticeDecision::ExtraTrials(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the recursive definition.
    fn lev_recursive(a: &[u8], b: &[u8], i: usize, j: usize) -> usize {
        if i.min(j) == 0 {
            return i.max(j);
        }
        let sub = usize::from(a[i - 1] != b[j - 1]);
        (lev_recursive(a, b, i - 1, j) + 1)
            .min(lev_recursive(a, b, i, j - 1) + 1)
            .min(lev_recursive(a, b, i - 1, j - 1) + sub)
    }

    fn notes(v: &[u8]) -> Vec<NoteId> {
        v.iter().map(|&x| NoteId::new(x).unwrap()).collect()
    }

    #[test]
    fn levenshtein_examples() {
        let t = [1u8, 1, 5, 5, 6, 6, 5];
        assert_eq!(levenshtein(&t, &t), 0);
        assert_eq!(levenshtein(&[1u8, 2, 3], &[]), 3);
        assert_eq!(levenshtein(&[1u8, 2, 3], &[1, 3, 3]), 1);
        assert_eq!(lev_recursive(&[1, 2, 3], &[1, 3, 3], 3, 3), 1);
        assert_eq!(levenshtein::<u8>(&[], &[]), 0);
    }

    #[test]
    fn likelihood_examples() {
        let t = notes(&[1, 1, 5, 5, 6, 6, 5]);
        assert_eq!(likelihood(&t, &t).unwrap(), 1.0);
        let l = likelihood(&t, &notes(&[1, 1, 5, 5, 6, 6])).unwrap();
        assert!((l - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(likelihood(&notes(&[1]), &notes(&[1, 2, 3, 4, 5])).unwrap(), 0.0);
        assert_eq!(
            likelihood::<NoteId>(&[], &notes(&[1])),
            Err(ScoringError::EmptyTarget)
        );
    }

    #[test]
    fn judge_examples() {
        assert_eq!(judge(&notes(&[3]), &notes(&[4])).unwrap(), Verdict::Fail);
        assert_eq!(judge(&notes(&[3]), &notes(&[3])).unwrap(), Verdict::Pass);
        assert_eq!(judge(&notes(&[3]), &notes(&[3, 3])).unwrap(), Verdict::Fail);
        assert_eq!(
            judge(&notes(&[1, 2, 3]), &notes(&[1, 3, 3])).unwrap(),
            Verdict::Pass
        );
        assert_eq!(
            judge(&notes(&[1, 2, 3]), &notes(&[4, 5, 6])).unwrap(),
            Verdict::Fail
        );
        assert_eq!(
            judge::<NoteId>(&[], &[]),
            Err(ScoringError::EmptyTarget)
        );
    }

    #[test]
    fn policy_examples() {
        let t = |c, n| AccuracyTracker::with_counts(c, n, 0.6).unwrap();
        assert_eq!(practice_policy(&t(6, 10)).unwrap(), PracticeDecision::Continue);
        assert_eq!(practice_policy(&t(10, 10)).unwrap(), PracticeDecision::Continue);
        assert_eq!(
            practice_policy(&t(4, 10)).unwrap(),
            PracticeDecision::ExtraTrials(5)
        );
        assert_eq!(practice_policy(&t(0, 0)), Err(ScoringError::NoTrials));
        assert!(AccuracyTracker::new(1.0).is_err());
    }

    #[test]
    fn policy_is_minimal_by_search() {
        for th in [0.5, 0.6, 2.0 / 3.0, 0.75, 0.9] {
            for total in 1..=20u32 {
                for correct in 0..=total {
                    let tracker = AccuracyTracker::with_counts(correct, total, th).unwrap();
                    let expected = (0..)
                        .find(|&k| {
                            (correct + k) as f64 / (total + k) as f64 >= th - 1e-12
                        })
                        .unwrap();
                    let got = practice_policy(&tracker).unwrap();
                    if expected == 0 {
                        assert_eq!(got, PracticeDecision::Continue);
                    } else {
                        assert_eq!(got, PracticeDecision::ExtraTrials(expected), "{correct}/{total} @ {th}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lev_matches_recursion(a in prop::collection::vec(1u8..=4, 0..6), b in prop::collection::vec(1u8..=4, 0..6)) {
            prop_assert_eq!(levenshtein(&a, &b), lev_recursive(&a, &b, a.len(), b.len()));
        }

        #[test]
        fn lev_is_a_metric(
            a in prop::collection::vec(1u8..=11, 0..10),
            b in prop::collection::vec(1u8..=11, 0..10),
            c in prop::collection::vec(1u8..=11, 0..10),
        ) {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn likelihood_bounded_and_self_pass(
            t in prop::collection::vec(1u8..=11, 1..12),
            d in prop::collection::vec(1u8..=11, 0..20),
        ) {
            let l = likelihood(&t, &d).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert_eq!(judge(&t, &t).unwrap(), Verdict::Pass);
        }

        #[test]
        fn correct_continuation_keeps_pass(
            t in prop::collection::vec(1u8..=11, 2..12),
            cut in 0usize..12,
        ) {
            // A truncated attempt that already passes cannot fail once the
            // missing notes are played, since the distance only shrinks.
            let cut = cut.min(t.len());
            let partial = &t[..cut];
            if judge(&t, partial).unwrap().is_pass() {
                prop_assert!(judge(&t, &t[..(cut + 1).min(t.len())]).unwrap().is_pass());
            }
        }
    }
}
