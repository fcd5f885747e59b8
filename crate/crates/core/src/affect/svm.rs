use serde::{Deserialize, Serialize};

use super::AffectError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    Linear,
    /// `(γ·x·y + coef0)^degree`
    Poly { degree: u32, gamma: f64, coef0: f64 },
    /// `exp(−γ‖x−y‖²)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Poly { degree, gamma, coef0 } => (gamma * dot(a, b) + coef0).powi(degree as i32),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoOptions {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self { c: 1.0, tolerance: 1e-3, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SmoStats {
    pub iterations: usize,
    /// Dual objective `Σα − ½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ` after each step.
    pub objective: Vec<f64>,
    pub converged: bool,
    /// KKT gap recomputed from scratch at the returned multipliers.
    pub kkt_violation: f64,
}

/// Binary soft-margin SVM; labels are +1 / −1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub c: f64,
    pub support: Vec<Vec<f64>>,
    /// αᵢ·yᵢ per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, c)| c * self.kernel.eval(s, x)).sum::<f64>() + self.bias
    }
}

const TAU: f64 = 1e-12;

fn select_up(alpha: &[f64], y: &[f64], c: f64, t: usize) -> bool {
    (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0)
}

fn select_low(alpha: &[f64], y: &[f64], c: f64, t: usize) -> bool {
    (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c)
}

/// Largest KKT gap `max_{I_up} −yG − min_{I_low} −yG` of a dual point.
pub fn kkt_violation(k: &[Vec<f64>], y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> =
        (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j] * alpha[j]).sum::<f64>() - 1.0).collect();
    let up = (0..n).filter(|&t| select_up(alpha, y, c, t)).map(|t| -y[t] * grad[t]).fold(f64::NEG_INFINITY, f64::max);
    let low = (0..n).filter(|&t| select_low(alpha, y, c, t)).map(|t| -y[t] * grad[t]).fold(f64::INFINITY, f64::min);
    if up.is_finite() && low.is_finite() {
        (up - low).max(0.0)
    } else {
        0.0
    }
}

/// SMO with second-order working-set selection. Returns the model, the
/// final multipliers and run statistics.
pub fn svm_train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: Kernel,
    opts: &SmoOptions,
) -> Result<(BinarySvm, Vec<f64>, SmoStats), AffectError> {
    let n = x.len();
    if n == 0 {
        return Err(AffectError::EmptyTrainingSet);
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(AffectError::DegenerateData);
    }
    if !(opts.c > 0.0) {
        return Err(AffectError::BadParameter("C must be positive".into()));
    }
    // The dual is symmetric under y → −y; solving in one fixed orientation
    // makes flipped labels give exactly negated machines.
    if y[0] < 0.0 {
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        let (mut svm, alpha, stats) = svm_train_binary(x, &flipped, kernel, opts)?;
        svm.coef.iter_mut().for_each(|c| *c = -*c);
        svm.bias = -svm.bias;
        return Ok((svm, alpha, stats));
    }
    let c = opts.c;
    let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| kernel.eval(a, b)).collect()).collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut stats = SmoStats::default();
    // With G = Qα − e the dual objective is −½Σαᵢ(Gᵢ − 1).
    let objective = |alpha: &[f64], grad: &[f64]| -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();

    while stats.iterations < opts.max_iterations {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if select_up(&alpha, y, c, t) && -y[t] * grad[t] >= gmax {
                if -y[t] * grad[t] > gmax || i == usize::MAX {
                    gmax = -y[t] * grad[t];
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !select_low(&alpha, y, c, t) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX {
                let b = gmax - v;
                if b > 0.0 {
                    let a = (q(i, i) + q(t, t) - 2.0 * y[i] * y[t] * q(i, t)).max(TAU);
                    let score = -(b * b) / a;
                    if score < best {
                        best = score;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < opts.tolerance {
            stats.converged = true;
            break;
        }
        stats.iterations += 1;
        let (ai, aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        stats.objective.push(objective(&alpha, &grad));
    }

    stats.kkt_violation = kkt_violation(&k, y, &alpha, c);
    // Bias from free multipliers, or the midpoint of the feasible range.
    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    let (support, coef): (Vec<Vec<f64>>, Vec<f64>) =
        (0..n).filter(|&t| alpha[t] > 0.0).map(|t| (x[t].clone(), alpha[t] * y[t])).unzip();
    Ok((BinarySvm { kernel, c, support, coef, bias: -rho }, alpha, stats))
}
