use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranges::RangeBins;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error("invalid IoU sweep: {0}")]
    Sweep(String),
    #[error("invalid range bins: {0}")]
    Bins(String),
    #[error("max_dets must be positive")]
    MaxDets,
    #[error("unknown temporal length mode {0:?} (visible|extent)")]
    Mode(String),
}

/// How an instance's temporal length is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalLengthMode {
    /// Number of frames with a non-empty mask.
    #[default]
    Visible,
    /// `last - first + 1` over non-empty frames, counting interior gaps.
    Extent,
}

impl std::str::FromStr for TemporalLengthMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "visible" => Ok(TemporalLengthMode::Visible),
            "extent" => Ok(TemporalLengthMode::Extent),
            other => Err(ConfigError::Mode(other.to_string())),
        }
    }
}

/// Denominator of the temporal overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapUnionMode {
    /// Union of the two sets of non-empty frames.
    #[default]
    Visible,
    /// Union of the two `[first, last]` index ranges.
    Range,
}

/// IoU thresholds `lo, lo + step, ..., hi`, generated the way numpy's `linspace` does so that
/// the default sweep is bit-identical to the COCO one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouSweep {
    pub lo: f64,
    pub step: f64,
    pub hi: f64,
}

impl Default for IouSweep {
    fn default() -> Self {
        IouSweep {
            lo: 0.5,
            step: 0.05,
            hi: 0.95,
        }
    }
}

impl IouSweep {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, step, hi] = parts.as_slice() else {
            return Err(ConfigError::Sweep(format!(
                "expected lo:step:hi, got {s:?}"
            )));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::Sweep(format!("not a number: {x:?}")))
        };
        let sweep = IouSweep {
            lo: num(lo)?,
            step: num(step)?,
            hi: num(hi)?,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.lo > 0.0
            && self.hi <= 1.0
            && self.lo <= self.hi
            && (self.step > 0.0 || self.lo == self.hi);
        if !ok {
            return Err(ConfigError::Sweep(format!(
                "need 0 < lo <= hi <= 1 and step > 0, got {}:{}:{}",
                self.lo, self.step, self.hi
            )));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Vec<f64> {
        if self.lo == self.hi {
            return vec![self.lo];
        }
        let n = ((self.hi - self.lo) / self.step).round() as usize + 1;
        let delta = (self.hi - self.lo) / (n - 1) as f64;
        let mut out: Vec<f64> = (0..n).map(|i| i as f64 * delta + self.lo).collect();
        out[n - 1] = self.hi;
        out
    }
}

/// The 101 recall sample points `0.00, 0.01, ..., 1.00`, as numpy's `linspace` produces them.
pub fn recall_thresholds() -> Vec<f64> {
    let mut out: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
    out[100] = 1.0;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Foreground IoU threshold: matching threshold for error analysis.
    pub thr_f: f64,
    /// Background IoU threshold.
    pub thr_b: f64,
    /// A frame counts towards the temporal overlap when its mask IoU is strictly above this.
    pub thr_spat: f64,
    /// Localization errors with temporal overlap at or above this are spatial, below it temporal.
    pub thr_temp: f64,
    pub iou_sweep: IouSweep,
    /// Per (video, category) detection cap.
    pub max_dets: usize,
    pub range_bins: RangeBins,
    pub temporal_length_mode: TemporalLengthMode,
    pub overlap_union_mode: OverlapUnionMode,
    /// Extra IoU thresholds at which error weights are also reported. Empty by default.
    pub weight_sweep: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thr_f: 0.5,
            thr_b: 0.1,
            thr_spat: 0.1,
            thr_temp: 0.7,
            iou_sweep: IouSweep::default(),
            max_dets: 100,
            range_bins: RangeBins::default(),
            temporal_length_mode: TemporalLengthMode::Visible,
            overlap_union_mode: OverlapUnionMode::Visible,
            weight_sweep: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        // thr_b == thr_f is allowed: it empties the localization band
        if !(in_unit(self.thr_b)
            && in_unit(self.thr_f)
            && self.thr_b <= self.thr_f
            && self.thr_f > 0.0)
        {
            return Err(ConfigError::Threshold(format!(
                "need 0 <= thr_b <= thr_f <= 1, got thr_b={} thr_f={}",
                self.thr_b, self.thr_f
            )));
        }
        if !(0.0..1.0).contains(&self.thr_spat) {
            return Err(ConfigError::Threshold(format!(
                "need 0 <= thr_spat < 1, got {}",
                self.thr_spat
            )));
        }
        if !(self.thr_temp > 0.0 && self.thr_temp <= 1.0) {
            return Err(ConfigError::Threshold(format!(
                "need 0 < thr_temp <= 1, got {}",
                self.thr_temp
            )));
        }
        for &t in &self.weight_sweep {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConfigError::Threshold(format!("weight threshold {t}")));
            }
        }
        if self.max_dets == 0 {
            return Err(ConfigError::MaxDets);
        }
        self.iou_sweep.validate()?;
        self.range_bins.validate()?;
        Ok(())
    }

    /// Detection caps used for AR.
    pub fn recall_tiers(&self) -> Vec<usize> {
        let mut tiers: Vec<usize> = [1, 10].into_iter().filter(|&k| k < self.max_dets).collect();
        tiers.push(self.max_dets);
        tiers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_matches_linspace() {
        let t = IouSweep::default().thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        // values printed by np.linspace(.5, .95, 10)
        assert_eq!(t[1], 0.55);
        assert_eq!(t[6], 0.8);
        assert_eq!(t[8], 0.8999999999999999);
    }

    #[test]
    fn recall_points() {
        let r = recall_thresholds();
        assert_eq!(r.len(), 101);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[100], 1.0);
        assert_eq!(r[3], 0.03);
    }

    #[test]
    fn parse_sweep() {
        let s = IouSweep::parse("0.5:0.1:0.9").unwrap();
        assert_eq!(s.thresholds().len(), 5);
        assert!(IouSweep::parse("0.5:0.1").is_err());
        assert!(IouSweep::parse("0.9:0.1:0.5").is_err());
        assert_eq!(
            IouSweep::parse("0.5:0:0.5").unwrap().thresholds(),
            vec![0.5]
        );
    }

    #[test]
    fn threshold_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        let c = EvalConfig {
            thr_b: 0.6,
            ..EvalConfig::default()
        };
        assert!(c.validate().is_err());
        let c = EvalConfig {
            thr_b: 0.5,
            ..EvalConfig::default()
        };
        assert!(c.validate().is_ok());
        let c = EvalConfig {
            thr_temp: 0.0,
            ..EvalConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tiers() {
        assert_eq!(EvalConfig::default().recall_tiers(), vec![1, 10, 100]);
        let c = EvalConfig {
            max_dets: 5,
            ..EvalConfig::default()
        };
        assert_eq!(c.recall_tiers(), vec![1, 5]);
    }
}
