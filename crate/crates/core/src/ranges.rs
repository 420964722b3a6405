//! Metrics restricted to instances of a given temporal length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::dataset::{CategoryId, MaskSequence};
use crate::error::EvalError;
use crate::matching::{EvalResult, EvalView, Evaluator};
use crate::taxonomy::{classify_all, error_summary, ErrorRecord, ErrorSummary, MatchContext};
use crate::weights::{weight_report, ErrorWeightReport};

/// Lower edges of consecutive temporal-length bins; the last bin is open-ended.
///
/// A length equal to an edge belongs to the bin that starts there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RangeBins {
    edges: Vec<usize>,
}

impl Default for RangeBins {
    fn default() -> Self {
        RangeBins {
            edges: vec![1, 16, 32],
        }
    }
}

impl RangeBins {
    pub fn new(edges: Vec<usize>) -> Result<Self, ConfigError> {
        let bins = RangeBins { edges };
        bins.validate()?;
        Ok(bins)
    }

    /// Parses `a,b,c`. A leading edge of 1 is implied when missing, so `16,32` means the
    /// default three bins.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let mut edges = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| ConfigError::Bins(format!("not a frame count: {x:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if edges.first().is_some_and(|&e| e > 1) {
            edges.insert(0, 1);
        }
        RangeBins::new(edges)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.edges.first() != Some(&1) {
            return Err(ConfigError::Bins(format!(
                "first edge must be 1, got {:?}",
                self.edges
            )));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Bins(format!(
                "edges must increase strictly, got {:?}",
                self.edges
            )));
        }
        Ok(())
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `[lo, hi)` of bin `i`; `hi` is `None` for the last bin.
    pub fn bounds(&self, i: usize) -> (usize, Option<usize>) {
        (self.edges[i], self.edges.get(i + 1).copied())
    }

    pub fn label(&self, i: usize) -> String {
        if self.edges.len() == 3 {
            return ["short", "medium", "long"][i].to_string();
        }
        match self.bounds(i) {
            (lo, Some(hi)) => format!("[{lo},{hi})"),
            (lo, None) => format!("[{lo},inf)"),
        }
    }

    /// Index of the bin holding `length`; lengths below 1 count as 1.
    pub fn bin_of(&self, length: usize) -> usize {
        let length = length.max(1);
        self.edges.partition_point(|&e| e <= length) - 1
    }
}

/// How out-of-range tracks are treated; written into every range report.
pub const RANGE_POLICY: &str = "ground truth outside the bin is ignored; predictions outside \
the bin are ignored unless they match in-bin ground truth";

/// The view restricted to bin `bin`.
pub fn range_view(evaluator: &Evaluator, base: &EvalView, bin: usize) -> EvalView {
    let d = evaluator.dataset();
    let config = evaluator.config();
    let bins = &config.range_bins;
    let mode = config.temporal_length_mode;
    let mut view = base.clone();
    for (g, t) in d.gt_tracks.iter().enumerate() {
        if bins.bin_of(t.temporal_length(mode)) != bin {
            view.gt_ignore[g] = true;
        }
    }
    for (p, t) in d.predictions.iter().enumerate() {
        view.pred_out_of_range[p] = bins.bin_of(t.temporal_length(mode)) != bin;
    }
    view
}

/// Per-category AP inside one view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAp {
    pub category: CategoryId,
    pub name: String,
    pub n_gt: usize,
    pub map: Option<f64>,
    pub ap50: Option<f64>,
}

/// Evaluation, classification and weights of one view.
#[derive(Debug, Clone)]
pub struct ViewMetrics {
    pub eval: EvalResult,
    pub records: Vec<ErrorRecord>,
    pub errors: ErrorSummary,
    pub weights: Option<ErrorWeightReport>,
}

impl ViewMetrics {
    pub fn categories(&self) -> Vec<CategoryAp> {
        self.eval
            .categories
            .iter()
            .map(|c| CategoryAp {
                category: c.category,
                name: c.name.clone(),
                n_gt: c.n_gt,
                map: c.mean_ap(),
                ap50: c.ap50,
            })
            .collect()
    }
}

pub fn view_metrics(evaluator: &Evaluator, view: &EvalView) -> Result<ViewMetrics, EvalError> {
    let eval = evaluator.evaluate_view(view);
    let ctx = MatchContext {
        evaluator,
        view,
        matching: &eval.matching,
    };
    let records = classify_all(&ctx)?;
    let weights = weight_report(&ctx, &records)?;
    let errors = error_summary(&records);
    Ok(ViewMetrics {
        eval,
        records,
        errors,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeResult {
    pub label: String,
    pub lo: usize,
    pub hi: Option<usize>,
    pub n_gt: usize,
    pub n_pred: usize,
    /// `None` (not applicable) when the bin holds no ground truth.
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub errors: ErrorSummary,
    pub weights: Option<ErrorWeightReport>,
    pub categories: Vec<CategoryAp>,
}

pub fn evaluate_range(
    evaluator: &Evaluator,
    base: &EvalView,
    bin: usize,
) -> Result<RangeResult, EvalError> {
    let config = evaluator.config();
    let bins = &config.range_bins;
    let d = evaluator.dataset();
    let view = range_view(evaluator, base, bin);
    let n_gt = (0..d.gt_tracks.len())
        .filter(|&g| view.gt_active[g] && !view.gt_ignore[g])
        .count();
    let n_pred = (0..d.predictions.len())
        .filter(|&p| view.pred_active[p] && !view.pred_out_of_range[p])
        .count();
    let (lo, hi) = bins.bounds(bin);
    let mut result = RangeResult {
        label: bins.label(bin),
        lo,
        hi,
        n_gt,
        n_pred,
        map: None,
        ap50: None,
        errors: error_summary(&[]),
        weights: None,
        categories: Vec::new(),
    };
    if n_gt > 0 {
        let m = view_metrics(evaluator, &view)?;
        result.map = m.eval.map;
        result.ap50 = m.eval.ap50;
        result.categories = m.categories();
        result.errors = m.errors;
        result.weights = m.weights;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeGlobal {
    pub n_gt: usize,
    pub n_pred: usize,
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub errors: ErrorSummary,
    pub weights: Option<ErrorWeightReport>,
    pub categories: Vec<CategoryAp>,
}

impl RangeGlobal {
    pub fn new(evaluator: &Evaluator, base: &EvalView, m: &ViewMetrics) -> Self {
        let d = evaluator.dataset();
        RangeGlobal {
            n_gt: (0..d.gt_tracks.len())
                .filter(|&g| base.gt_active[g] && !base.gt_ignore[g])
                .count(),
            n_pred: base.pred_active.iter().filter(|&&a| a).count(),
            map: m.eval.map,
            ap50: m.eval.ap50,
            errors: m.errors.clone(),
            weights: m.weights.clone(),
            categories: m.categories(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeMetrics {
    pub bins: Vec<RangeResult>,
    pub global: RangeGlobal,
    pub policy: &'static str,
}

pub fn range_bins_report(
    evaluator: &Evaluator,
    base: &EvalView,
) -> Result<Vec<RangeResult>, EvalError> {
    (0..evaluator.config().range_bins.len())
        .into_par_iter()
        .map(|b| evaluate_range(evaluator, base, b))
        .collect()
}

/// Every bin plus the unfiltered metrics.
pub fn range_report(evaluator: &Evaluator) -> Result<RangeMetrics, EvalError> {
    let base = evaluator.base_view();
    let bins = range_bins_report(evaluator, &base)?;
    let global = RangeGlobal::new(evaluator, &base, &view_metrics(evaluator, &base)?);
    Ok(RangeMetrics {
        bins,
        global,
        policy: RANGE_POLICY,
    })
}
