//! Spectral-function estimation by sweeping the filter energy, peak
//! detection against the stochastic background, and the hierarchical
//! window-shrinking eigenvalue search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rodeo::{draw_schedule, success_probability, TimeAccounting};
use crate::seeding;
use crate::spectral::SpectralWeights;

/// Grid sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    pub cycles: usize,
    pub t_rms: f64,
    pub averages: usize,
    pub seed: u64,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_min < self.e_max) {
            return Err(Error::InvalidArgument(format!(
                "energy window must satisfy e_min < e_max, got [{}, {}]",
                self.e_min, self.e_max
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidArgument(format!(
                "scan needs at least 2 grid points, got {}",
                self.points
            )));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidArgument("cycle count must be ≥ 1".into()));
        }
        if !(self.t_rms > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_rms must be positive, got {}",
                self.t_rms
            )));
        }
        if self.averages == 0 {
            return Err(Error::InvalidArgument(
                "averages must be ≥ 1 schedule set".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.e_max - self.e_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.e_min + i as f64 * step)
            .collect()
    }
}

/// One swept estimate of the spectral function plus sampling errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    energies: Vec<f64>,
    mean_success: Vec<f64>,
    stderr: Vec<f64>,
    metadata: Option<ScanConfig>,
}

impl ScanResult {
    /// Rebuild a result from raw columns (e.g. a loaded CSV). Metadata about
    /// how the columns were produced is absent in that case.
    pub fn from_columns(
        energies: Vec<f64>,
        mean_success: Vec<f64>,
        stderr: Vec<f64>,
    ) -> Result<Self> {
        if energies.len() != mean_success.len() || energies.len() != stderr.len() {
            return Err(Error::DimensionMismatch {
                context: "scan columns",
                expected: energies.len(),
                found: mean_success.len().min(stderr.len()),
            });
        }
        if energies.len() < 2 {
            return Err(Error::InvalidArgument(
                "scan result needs at least 2 rows".into(),
            ));
        }
        if energies.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "scan energies must be strictly increasing".into(),
            ));
        }
        for (&m, &s) in mean_success.iter().zip(&stderr) {
            if !(0.0..=1.0).contains(&m) || !m.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "mean success {m} outside [0,1]"
                )));
            }
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "stderr {s} must be finite and non-negative"
                )));
            }
        }
        Ok(Self {
            energies,
            mean_success,
            stderr,
            metadata: None,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn mean_success(&self) -> &[f64] {
        &self.mean_success
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn metadata(&self) -> Option<&ScanConfig> {
        self.metadata.as_ref()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// One detected peak on the scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub location: f64,
    pub height: f64,
    pub grid_index: usize,
}

/// Detected peaks with the background they were measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    pub background_level: f64,
}

/// Mean success at a peak with its sampling error; `isolation_verified`
/// records whether exactly one occupied level sits within the filter
/// half-bandwidth 1/(2·t_rms·√N) of the probe energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    pub value: f64,
    pub stderr: f64,
    pub isolation_verified: bool,
}

/// Which detected peak each search round follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakPreference {
    /// Highest peak in the window.
    Strongest,
    /// Lowest-energy peak whose height clears `min_weight`.
    LowestAboveThreshold,
}

/// Hierarchical search configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub shrink_factor: f64,
    pub epsilon: f64,
    pub cycles: usize,
    pub points: usize,
    pub t_rms: f64,
    pub max_scans: usize,
    pub averages: usize,
    pub seed: u64,
    pub peak_z: f64,
    pub min_weight: f64,
    pub peak_preference: PeakPreference,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            shrink_factor: 4.0,
            epsilon: 1e-3,
            cycles: 9,
            points: 16,
            t_rms: 1.0,
            max_scans: 64,
            averages: 20,
            seed: 0,
            peak_z: 5.0,
            min_weight: 0.01,
            peak_preference: PeakPreference::LowestAboveThreshold,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.shrink_factor > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "shrink factor must exceed 1, got {}",
                self.shrink_factor
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "target resolution must be positive, got {}",
                self.epsilon
            )));
        }
        if self.points < 3 {
            return Err(Error::InvalidArgument(
                "search scans need at least 3 grid points".into(),
            ));
        }
        if self.cycles == 0 || self.averages == 0 {
            return Err(Error::InvalidArgument(
                "cycles and averages must be ≥ 1".into(),
            ));
        }
        if !(self.t_rms > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_rms must be positive, got {}",
                self.t_rms
            )));
        }
        if self.max_scans == 0 {
            return Err(Error::InvalidArgument("max_scans must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One round of the hierarchical search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_index: usize,
    pub window_min: f64,
    pub window_max: f64,
    pub t_rms: f64,
    pub peak_location: f64,
    pub total_evolution_time: f64,
}

/// Search result: the located eigenvalue and every round that led there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub estimate: f64,
    pub history: Vec<ScanRecord>,
}

impl SearchOutcome {
    pub fn total_evolution_time(&self) -> f64 {
        self.history.iter().map(|r| r.total_evolution_time).sum()
    }
}

fn point_statistics(
    weights: &SpectralWeights,
    e: f64,
    cfg: &ScanConfig,
    grid_index: usize,
) -> (f64, f64) {
    let m = cfg.averages;
    let mut values = Vec::with_capacity(m);
    for draw in 0..m {
        let seed = seeding::derive_seed(cfg.seed, grid_index as u64, draw as u64);
        let schedule = draw_schedule(cfg.cycles, cfg.t_rms, seed).expect("validated config");
        values.push(success_probability(weights, e, &schedule));
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let stderr = if m > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    (mean, stderr)
}

/// Sweep the filter energy across the grid, averaging the all-success
/// probability over `averages` independent schedules per point. Schedule
/// seeds derive from (seed, grid index, draw index), so the result is
/// bit-identical for any worker count.
pub fn scan_spectral(weights: &SpectralWeights, cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let energies = cfg.grid();
    let stats: Vec<(f64, f64)> = energies
        .par_iter()
        .enumerate()
        .map(|(i, &e)| point_statistics(weights, e, cfg, i))
        .collect();
    let (mean_success, stderr) = stats.into_iter().unzip();
    Ok(ScanResult {
        energies,
        mean_success,
        stderr,
        metadata: Some(cfg.clone()),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Find strict local maxima exceeding the median background by
/// `z_threshold` standard errors, refining each location and height with a
/// three-point quadratic fit.
pub fn detect_peaks(result: &ScanResult, z_threshold: f64) -> PeakList {
    let mean = result.mean_success();
    let err = result.stderr();
    let e = result.energies();
    let background_level = median(mean);
    let mut peaks = Vec::new();
    for i in 1..mean.len().saturating_sub(1) {
        let y = mean[i];
        if !(y > mean[i - 1] && y > mean[i + 1]) {
            continue;
        }
        if !(y > background_level + z_threshold * err[i]) {
            continue;
        }
        let denom = mean[i - 1] - 2.0 * y + mean[i + 1];
        let dx = (0.5 * (mean[i - 1] - mean[i + 1]) / denom).clamp(-0.5, 0.5);
        let location = e[i] + dx * (e[i + 1] - e[i - 1]) * 0.5;
        let height = y - 0.25 * (mean[i - 1] - mean[i + 1]) * dx;
        peaks.push(Peak {
            location,
            height,
            grid_index: i,
        });
    }
    PeakList {
        peaks,
        background_level,
    }
}

/// Estimate the merged weight at a level by averaging the all-success
/// probability at the peak energy over `averages` schedules.
pub fn estimate_overlap(
    weights: &SpectralWeights,
    e_peak: f64,
    cycles: usize,
    t_rms: f64,
    averages: usize,
    seed: u64,
) -> Result<OverlapEstimate> {
    let cfg = ScanConfig {
        e_min: e_peak - 1.0,
        e_max: e_peak + 1.0,
        points: 2,
        cycles,
        t_rms,
        averages,
        seed,
    };
    cfg.validate()?;
    let (value, stderr) = point_statistics(weights, e_peak, &cfg, 0);
    let radius = 0.5 / (t_rms * (cycles as f64).sqrt());
    let occupied = weights.merged().occupied(crate::rodeo::OCCUPANCY_FLOOR);
    let nearby = occupied
        .iter()
        .filter(|&&(e_lvl, _)| (e_lvl - e_peak).abs() <= radius)
        .count();
    Ok(OverlapEstimate {
        value,
        stderr,
        isolation_verified: nearby == 1,
    })
}

/// Total evolution time a scan costs under the chosen accounting: realized
/// Σ|t_n| over every grid point and draw, or the deterministic N·t_rms
/// equivalent.
pub fn scan_evolution_time(cfg: &ScanConfig, accounting: TimeAccounting) -> f64 {
    match accounting {
        TimeAccounting::SumAbs => {
            let mut total = 0.0;
            for i in 0..cfg.points {
                for m in 0..cfg.averages {
                    let seed = seeding::derive_seed(cfg.seed, i as u64, m as u64);
                    let schedule =
                        draw_schedule(cfg.cycles, cfg.t_rms, seed).expect("validated config");
                    total += schedule.times().iter().map(|t| t.abs()).sum::<f64>();
                }
            }
            total
        }
        TimeAccounting::NTimesTrms => {
            (cfg.points * cfg.averages * cfg.cycles) as f64 * cfg.t_rms
        }
    }
}

/// Locate an eigenvalue by repeated scans: each round detects peaks, picks
/// one according to the configured preference, shrinks the window by the
/// shrink factor around it, and lengthens t_rms by the same factor, until
/// the window width reaches the target resolution.
pub fn hierarchical_search(
    weights: &SpectralWeights,
    e_min: f64,
    e_max: f64,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if !(e_min < e_max) {
        return Err(Error::InvalidArgument(format!(
            "search window must satisfy e_min < e_max, got [{e_min}, {e_max}]"
        )));
    }
    let width0 = e_max - e_min;
    let needed = (width0 / cfg.epsilon).log(cfg.shrink_factor).ceil().max(0.0) as usize;
    if needed > cfg.max_scans {
        return Err(Error::InvalidArgument(format!(
            "resolution {} needs {} scans but max_scans is {}",
            cfg.epsilon, needed, cfg.max_scans
        )));
    }
    let mut lo = e_min;
    let mut hi = e_max;
    let mut t_rms = cfg.t_rms;
    let mut history: Vec<ScanRecord> = Vec::new();
    let mut windows: Vec<(f64, f64)> = Vec::new();
    let mut scan_index = 0;
    while hi - lo > cfg.epsilon {
        scan_index += 1;
        windows.push((lo, hi));
        let scan_cfg = ScanConfig {
            e_min: lo,
            e_max: hi,
            points: cfg.points,
            cycles: cfg.cycles,
            t_rms,
            averages: cfg.averages,
            seed: seeding::derive_seed(cfg.seed, scan_index as u64, 0),
        };
        let result = scan_spectral(weights, &scan_cfg)?;
        let detected = detect_peaks(&result, cfg.peak_z);
        let chosen = match cfg.peak_preference {
            PeakPreference::Strongest => detected
                .peaks
                .iter()
                .max_by(|a, b| a.height.total_cmp(&b.height)),
            PeakPreference::LowestAboveThreshold => detected
                .peaks
                .iter()
                .filter(|p| p.height >= cfg.min_weight)
                .min_by(|a, b| a.location.total_cmp(&b.location)),
        };
        let Some(peak) = chosen else {
            return Err(Error::SearchFailed {
                scans: scan_index,
                windows,
            });
        };
        history.push(ScanRecord {
            scan_index,
            window_min: lo,
            window_max: hi,
            t_rms,
            peak_location: peak.location,
            total_evolution_time: scan_evolution_time(&scan_cfg, TimeAccounting::SumAbs),
        });
        let half = (hi - lo) / (2.0 * cfg.shrink_factor);
        lo = peak.location - half;
        hi = peak.location + half;
        t_rms *= cfg.shrink_factor;
    }
    let estimate = match history.last() {
        Some(record) => record.peak_location,
        None => 0.5 * (lo + hi),
    };
    Ok(SearchOutcome { estimate, history })
}
