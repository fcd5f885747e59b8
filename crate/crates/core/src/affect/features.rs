use serde::{Deserialize, Serialize};

use super::cwt::{cwt, log_scales, MIN_SIGNAL_LEN};
use super::AffectError;

/// 6 bands × 4 time cells × {mean, std, max} + {energy, tonic mean, phasic std}.
pub const FEATURE_LEN: usize = 6 * 4 * 3 + 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate_hz: f64,
    pub f_c: f64,
    pub f_b: f64,
    /// Requested band; the upper edge is clipped just below Nyquist.
    pub band_hz: (f64, f64),
    pub n_scales: usize,
    pub n_bands: usize,
    pub n_cells: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sample_rate_hz: 32.0, f_c: 1.0, f_b: 1.0, band_hz: (0.5, 50.0), n_scales: 24, n_bands: 6, n_cells: 4 }
    }
}

impl FeatureConfig {
    pub fn effective_band(&self) -> (f64, f64) {
        (self.band_hz.0, self.band_hz.1.min(self.sample_rate_hz / 2.0 - 0.1))
    }

    pub fn scales(&self) -> Vec<f64> {
        let (lo, hi) = self.effective_band();
        log_scales(lo, hi, self.n_scales, self.f_c, self.sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.n_bands * self.n_cells * 3 + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn mean_std_max(v: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let n = v.clone().count().max(1) as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.clone().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt(), v.fold(0.0, f64::max))
}

pub fn extract_features(segment: &[f64], cfg: &FeatureConfig) -> Result<Vec<f64>, AffectError> {
    if segment.len() < MIN_SIGNAL_LEN {
        return Err(AffectError::SignalTooShort(segment.len()));
    }
    if cfg.n_bands == 0 || cfg.n_cells == 0 || cfg.n_scales < cfg.n_bands {
        return Err(AffectError::BadParameter("need at least one scale per band and one cell".into()));
    }
    let (lo, hi) = cfg.effective_band();
    if !(lo > 0.0 && lo < hi) {
        return Err(AffectError::BadParameter(format!("empty band ({lo}, {hi})")));
    }
    let mag = cwt(segment, cfg.f_c, cfg.f_b, &cfg.scales(), cfg.sample_rate_hz)?.magnitude();
    let len = segment.len();
    let mut out = Vec::with_capacity(cfg.len());
    for b in 0..cfg.n_bands {
        let rows = &mag[b * cfg.n_scales / cfg.n_bands..(b + 1) * cfg.n_scales / cfg.n_bands];
        for c in 0..cfg.n_cells {
            let (t0, t1) = (c * len / cfg.n_cells, (c + 1) * len / cfg.n_cells);
            let (m, s, x) = mean_std_max(rows.iter().flat_map(|r| r[t0..t1].iter().copied()));
            out.extend([m, s, x]);
        }
    }
    let energy = mag.iter().flatten().map(|v| v * v).sum::<f64>() / (mag.len() * len) as f64;
    let (tonic, phasic, _) = mean_std_max(segment.iter().copied());
    out.extend([energy, tonic, phasic]);
    Ok(out)
}
