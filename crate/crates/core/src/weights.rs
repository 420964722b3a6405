//! Error weights: the AP gain from fixing all errors of one kind with an oracle.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::EvalError;
use crate::matching::EvalView;
use crate::taxonomy::{ErrorKind, ErrorRecord, MatchContext};

const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Ground truth claimed so far: everything matched in the original view, plus whatever
/// earlier fixes pinned.
fn claimed_set(ctx: &MatchContext) -> Vec<bool> {
    ctx.matching
        .gt_matched
        .iter()
        .map(Option::is_some)
        .collect()
}

fn fix_in_place(
    ctx: &MatchContext,
    view: &mut EvalView,
    claimed: &mut [bool],
    records: &[ErrorRecord],
    kind: ErrorKind,
) {
    let d = ctx.evaluator.dataset();
    let mut selected: Vec<&ErrorRecord> = records.iter().filter(|r| r.kind == kind).collect();
    // higher-scored predictions claim first
    let score = |r: &ErrorRecord| r.prediction.map_or(0.0, |p| d.predictions[p].score);
    selected.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then(a.prediction.cmp(&b.prediction))
            .then(a.gt.cmp(&b.gt))
    });
    for r in selected {
        match (kind, r.prediction, r.gt) {
            (ErrorKind::Miss, _, Some(g)) => view.gt_active[g] = false,
            (ErrorKind::Cls | ErrorKind::Spat | ErrorKind::Temp, Some(p), Some(g)) => {
                if claimed[g] {
                    view.pred_active[p] = false;
                } else {
                    claimed[g] = true;
                    view.pinned[p] = Some(g);
                    view.pred_category[p] = d.gt_tracks[g].category_id;
                }
            }
            (_, Some(p), _) => view.pred_active[p] = false,
            _ => {}
        }
    }
}

/// The view with every error of `kind` fixed; the input view is untouched.
pub fn apply_fix(ctx: &MatchContext, records: &[ErrorRecord], kind: ErrorKind) -> EvalView {
    let mut view = ctx.view.clone();
    let mut claimed = claimed_set(ctx);
    fix_in_place(ctx, &mut view, &mut claimed, records, kind);
    view
}

/// AP at `thr_f`, counting a view without any ground truth left as perfect.
fn fixed_ap(ctx: &MatchContext, view: &EvalView) -> f64 {
    ctx.evaluator
        .ap_at(view, ctx.evaluator.config().thr_f)
        .unwrap_or(100.0)
}

fn base_ap(ctx: &MatchContext) -> Option<f64> {
    ctx.evaluator.ap_from_matching(ctx.view, ctx.matching)
}

/// AP gain at `thr_f` from fixing every error of `kind`.
pub fn error_weight(
    ctx: &MatchContext,
    records: &[ErrorRecord],
    kind: ErrorKind,
) -> Result<f64, EvalError> {
    let base = base_ap(ctx).unwrap_or(100.0);
    let delta = fixed_ap(ctx, &apply_fix(ctx, records, kind)) - base;
    if delta < -NEGATIVE_TOLERANCE {
        return Err(EvalError::NegativeWeight { kind, delta });
    }
    Ok(delta.max(0.0))
}

/// AP at `thr_f` after fixing every kind cumulatively, in [`ErrorKind::FIX_ORDER`].
pub fn fix_all(ctx: &MatchContext, records: &[ErrorRecord]) -> f64 {
    let mut view = ctx.view.clone();
    let mut claimed = claimed_set(ctx);
    for kind in ErrorKind::FIX_ORDER {
        fix_in_place(ctx, &mut view, &mut claimed, records, kind);
    }
    fixed_ap(ctx, &view)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorWeightReport {
    pub base_ap50: f64,
    pub weights: BTreeMap<ErrorKind, f64>,
    pub fix_all_ap50: f64,
}

impl ErrorWeightReport {
    pub fn weight(&self, kind: ErrorKind) -> f64 {
        self.weights[&kind]
    }
}

/// All seven weights plus the fix-everything check; `None` when the view has no ground truth.
///
/// Fixing everything must reach AP 100; anything less means some false positive or missed
/// ground truth escaped the taxonomy, and is reported as an error.
pub fn weight_report(
    ctx: &MatchContext,
    records: &[ErrorRecord],
) -> Result<Option<ErrorWeightReport>, EvalError> {
    let Some(base) = base_ap(ctx) else {
        return Ok(None);
    };
    let weights = ErrorKind::ALL
        .par_iter()
        .map(|&kind| error_weight(ctx, records, kind).map(|w| (kind, w)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .collect();
    let fix_all_ap50 = fix_all(ctx, records);
    if (fix_all_ap50 - 100.0).abs() > 1e-6 {
        return Err(EvalError::FixAllIncomplete(fix_all_ap50));
    }
    Ok(Some(ErrorWeightReport {
        base_ap50: base,
        weights,
        fix_all_ap50,
    }))
}

/// Weights measured at other IoU thresholds, with the classification and fixes made at `thr_f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepWeights {
    pub threshold: f64,
    pub base_ap: f64,
    pub weights: BTreeMap<ErrorKind, f64>,
}

pub fn sweep_weights(
    ctx: &MatchContext,
    records: &[ErrorRecord],
    thresholds: &[f64],
) -> Vec<SweepWeights> {
    let fixed: Vec<(ErrorKind, EvalView)> = ErrorKind::ALL
        .iter()
        .map(|&k| (k, apply_fix(ctx, records, k)))
        .collect();
    thresholds
        .iter()
        .map(|&t| {
            let ap = |v: &EvalView| ctx.evaluator.ap_at(v, t).unwrap_or(100.0);
            let base_ap = ap(ctx.view);
            SweepWeights {
                threshold: t,
                base_ap,
                weights: fixed.iter().map(|(k, v)| (*k, ap(v) - base_ap)).collect(),
            }
        })
        .collect()
}
