//! Classification of false positives and missed ground truth into seven error kinds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryId, TrackId, VideoId};
use crate::error::EvalError;
use crate::iou::temporal_overlap;
use crate::matching::{DetStatus, EvalView, Evaluator, Matching};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    Cls,
    Dup,
    Spat,
    Temp,
    Both,
    Bkg,
    Miss,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::Cls,
        ErrorKind::Dup,
        ErrorKind::Spat,
        ErrorKind::Temp,
        ErrorKind::Both,
        ErrorKind::Bkg,
        ErrorKind::Miss,
    ];

    /// Order in which fixes are applied cumulatively.
    pub const FIX_ORDER: [ErrorKind; 7] = [
        ErrorKind::Cls,
        ErrorKind::Spat,
        ErrorKind::Temp,
        ErrorKind::Both,
        ErrorKind::Dup,
        ErrorKind::Bkg,
        ErrorKind::Miss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Cls => "Cls",
            ErrorKind::Dup => "Dup",
            ErrorKind::Spat => "Spat",
            ErrorKind::Temp => "Temp",
            ErrorKind::Both => "Both",
            ErrorKind::Bkg => "Bkg",
            ErrorKind::Miss => "Miss",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: ErrorKind,
    /// Absent for Miss.
    pub prediction: Option<usize>,
    /// Best-matching ground truth; absent for Bkg.
    pub gt: Option<usize>,
    pub iou_max: f64,
    /// Only computed for the localization kinds.
    pub overlap_temp: Option<f64>,
}

/// Best ground-truth candidates for one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRecord {
    pub prediction: usize,
    pub matched_gt: Option<usize>,
    pub iou_with_match: f64,
    pub best_gt_same_class: Option<usize>,
    pub iou_max_same_class: f64,
    pub best_gt_other_class: Option<usize>,
    pub iou_max_other_class: f64,
}

/// Everything classification needs: the IoU table, the view and its matching at `thr_f`.
#[derive(Clone, Copy)]
pub struct MatchContext<'a, 'd> {
    pub evaluator: &'a Evaluator<'d>,
    pub view: &'a EvalView,
    pub matching: &'a Matching,
}

impl MatchContext<'_, '_> {
    /// Best same-class and other-class ground truth among active, non-ignored tracks.
    pub fn match_record(&self, pred: usize) -> MatchRecord {
        let d = self.evaluator.dataset();
        let category = self.view.pred_category[pred];
        let mut same: (Option<usize>, f64) = (None, 0.0);
        let mut other: (Option<usize>, f64) = (None, 0.0);
        for &g in self.evaluator.video_gts(pred) {
            if !self.view.gt_active[g] || self.view.gt_ignore[g] {
                continue;
            }
            let iou = self.evaluator.view_iou(self.view, pred, g);
            let slot = if d.gt_tracks[g].category_id == category {
                &mut same
            } else {
                &mut other
            };
            if slot.0.is_none() || iou > slot.1 {
                *slot = (Some(g), iou);
            }
        }
        MatchRecord {
            prediction: pred,
            matched_gt: self.matching.matched[pred],
            iou_with_match: self.matching.iou[pred],
            best_gt_same_class: same.0,
            iou_max_same_class: same.1,
            best_gt_other_class: other.0,
            iou_max_other_class: other.1,
        }
    }

    pub fn false_positives(&self) -> Vec<usize> {
        (0..self.view.pred_active.len())
            .filter(|&p| self.matching.status(self.view, p) == Some(DetStatus::Fp))
            .collect()
    }
}

/// Assigns one error kind to a prediction left unmatched at `thr_f`.
pub fn classify_false_positive(ctx: &MatchContext, pred: usize) -> Result<ErrorRecord, EvalError> {
    let config = ctx.evaluator.config();
    let (thr_f, thr_b) = (config.thr_f, config.thr_b);
    let m = ctx.match_record(pred);
    let (same, other) = (m.iou_max_same_class, m.iou_max_other_class);
    let record = |kind, gt, iou_max, overlap_temp| ErrorRecord {
        kind,
        prediction: Some(pred),
        gt,
        iou_max,
        overlap_temp,
    };

    let same_gt = m.best_gt_same_class;
    let other_gt = m.best_gt_other_class;
    if other_gt.is_some() && other >= thr_f {
        return Ok(record(ErrorKind::Cls, other_gt, other, None));
    }
    if let Some(g) = same_gt.filter(|_| same >= thr_b && same < thr_f) {
        let d = ctx.evaluator.dataset();
        let overlap = temporal_overlap(
            &d.gt_tracks[g],
            &d.predictions[pred],
            config.thr_spat,
            config.overlap_union_mode,
        )
        .map_err(|source| EvalError::Iou {
            pred,
            gt: g,
            source,
        })?
        .value;
        let kind = if overlap >= config.thr_temp {
            ErrorKind::Spat
        } else {
            ErrorKind::Temp
        };
        return Ok(record(kind, Some(g), same, Some(overlap)));
    }
    if other_gt.is_some() && other >= thr_b && other < thr_f {
        return Ok(record(ErrorKind::Both, other_gt, other, None));
    }
    if let Some(g) = same_gt.filter(|_| same >= thr_f) {
        if ctx.matching.gt_matched[g].is_some() {
            return Ok(record(ErrorKind::Dup, Some(g), same, None));
        }
    } else if (same_gt.is_none() || same < thr_b) && (other_gt.is_none() || other < thr_b) {
        return Ok(record(ErrorKind::Bkg, None, same.max(other), None));
    }
    Err(EvalError::Unclassifiable {
        pred,
        iou_same: same,
        iou_other: other,
    })
}

/// Miss records for unmatched, non-ignored ground truth that no Cls, Spat or Temp error
/// would claim when fixed.
pub fn collect_missed(ctx: &MatchContext, errors: &[ErrorRecord]) -> Vec<ErrorRecord> {
    let covered: BTreeSet<usize> = errors
        .iter()
        .filter(|r| matches!(r.kind, ErrorKind::Cls | ErrorKind::Spat | ErrorKind::Temp))
        .filter_map(|r| r.gt)
        .collect();
    let d = ctx.evaluator.dataset();
    (0..d.gt_tracks.len())
        .filter(|&g| {
            ctx.view.gt_active[g]
                && !ctx.view.gt_ignore[g]
                && ctx.matching.gt_matched[g].is_none()
                && !covered.contains(&g)
        })
        .map(|g| {
            let category = d.gt_tracks[g].category_id;
            let iou_max = ctx
                .evaluator
                .video_preds(g)
                .iter()
                .filter(|&&p| ctx.view.pred_active[p] && ctx.view.pred_category[p] == category)
                .map(|&p| ctx.evaluator.view_iou(ctx.view, p, g))
                .fold(0.0, f64::max);
            ErrorRecord {
                kind: ErrorKind::Miss,
                prediction: None,
                gt: Some(g),
                iou_max,
                overlap_temp: None,
            }
        })
        .collect()
}

/// Every false positive in prediction order, then every Miss in ground-truth order.
pub fn classify_all(ctx: &MatchContext) -> Result<Vec<ErrorRecord>, EvalError> {
    let mut records: Vec<ErrorRecord> = ctx
        .false_positives()
        .into_par_iter()
        .map(|p| classify_false_positive(ctx, p))
        .collect::<Result<_, _>>()?;
    let missed = collect_missed(ctx, &records);
    records.extend(missed);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ErrorSummary(pub BTreeMap<ErrorKind, usize>);

impl ErrorSummary {
    pub fn get(&self, kind: ErrorKind) -> usize {
        self.0.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

pub fn error_summary(records: &[ErrorRecord]) -> ErrorSummary {
    let mut counts: BTreeMap<ErrorKind, usize> = ErrorKind::ALL.iter().map(|&k| (k, 0)).collect();
    for r in records {
        *counts.get_mut(&r.kind).unwrap() += 1;
    }
    ErrorSummary(counts)
}

/// One line of the error export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorExport {
    pub kind: ErrorKind,
    pub video_id: VideoId,
    pub category_id: CategoryId,
    pub score: Option<f64>,
    pub iou_max: f64,
    pub overlap_temp: Option<f64>,
    pub gt_id: Option<TrackId>,
}

pub fn export_record(evaluator: &Evaluator, record: &ErrorRecord) -> ErrorExport {
    let d = evaluator.dataset();
    let gt = record.gt.map(|g| &d.gt_tracks[g]);
    let (video_id, category_id, score) = match record.prediction {
        Some(p) => {
            let pred = &d.predictions[p];
            (pred.video_id, pred.category_id, Some(pred.score))
        }
        None => {
            let gt = gt.expect("a Miss record names its ground truth");
            (gt.video_id, gt.category_id, None)
        }
    };
    ErrorExport {
        kind: record.kind,
        video_id,
        category_id,
        score,
        iou_max: record.iou_max,
        overlap_temp: record.overlap_temp,
        gt_id: gt.map(|g| g.id),
    }
}

/// JSON lines, one record per line.
pub fn records_to_jsonl(evaluator: &Evaluator, records: &[ErrorRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&export_record(evaluator, r)).unwrap());
        out.push('\n');
    }
    out
}
