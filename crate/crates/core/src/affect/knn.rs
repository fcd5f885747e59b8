use super::model::Sample;
use super::AffectError;

/// Indices of training samples sorted by distance to `x`; stable, so ties keep input order.
pub(crate) fn neighbours(train: &[Sample], x: &[f64]) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = train
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1));
    d
}

/// Majority label of the K nearest samples; ties go to the nearest sample
/// holding one of the tied labels.
pub fn knn_classify(train: &[Sample], x: &[f64], k: usize) -> Result<usize, AffectError> {
    if train.is_empty() {
        return Err(AffectError::EmptyTrainingSet);
    }
    if k == 0 || k > train.len() {
        return Err(AffectError::BadParameter(format!("K = {k} with {} training samples", train.len())));
    }
    let near = neighbours(train, x);
    let top = &near[..k];
    let n_labels = train.iter().map(|s| s.y).max().unwrap_or(0) + 1;
    let mut votes = vec![0usize; n_labels];
    for &(i, _) in top {
        votes[train[i].y] += 1;
    }
    let best = *votes.iter().max().expect("labels exist");
    Ok(top.iter().map(|&(i, _)| train[i].y).find(|&y| votes[y] == best).expect("a top label has the max"))
}
