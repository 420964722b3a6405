//! Greedy sequence-IoU matching and COCO-style precision/recall accumulation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{recall_thresholds, EvalConfig};
use crate::dataset::{validate, CategoryId, Dataset, VideoId};
use crate::error::EvalError;
use crate::iou::{sequence_crowd_overlap, sequence_iou};

/// Greedy matching for one (video, category) cell.
///
/// `ious[d][g]` is the IoU of detection `d` with ground truth `g`. Detections are visited in
/// descending score order (ties keep input order); each takes the still-unmatched ground
/// truth with the highest IoU at or above `threshold`, preferring non-ignored ground truth.
/// Crowd ground truth may absorb any number of detections. Returns, in input order, the
/// matched ground-truth index and its IoU.
pub fn match_category(
    scores: &[f64],
    ious: &[Vec<f64>],
    gt_ignore: &[bool],
    gt_crowd: &[bool],
    threshold: f64,
) -> Vec<Option<(usize, f64)>> {
    let n_gt = gt_ignore.len();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // non-ignored ground truth first
    let mut gt_order: Vec<usize> = (0..n_gt).collect();
    gt_order.sort_by_key(|&g| gt_ignore[g]);

    let mut gt_taken = vec![false; n_gt];
    let mut out = vec![None; scores.len()];
    for d in order {
        let mut best_iou = threshold.min(1.0 - 1e-10);
        let mut best: Option<usize> = None;
        for &g in &gt_order {
            if gt_taken[g] && !gt_crowd[g] {
                continue;
            }
            if let Some(m) = best {
                if !gt_ignore[m] && gt_ignore[g] {
                    break;
                }
            }
            let iou = ious[d][g];
            if iou < best_iou {
                continue;
            }
            best_iou = iou;
            best = Some(g);
        }
        if let Some(g) = best {
            gt_taken[g] = true;
            out[d] = Some((g, ious[d][g]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DetStatus {
    Tp,
    Fp,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// Interpolated precision at recall 0.00, 0.01, ..., 1.00.
    pub precision: Vec<f64>,
    /// Recall reached with every detection.
    pub recall: f64,
    /// Mean of `precision`, in percentage points.
    pub ap: f64,
}

/// 101-point interpolated AP over detections given as `(score, status)`.
///
/// Returns `None` when there is no ground truth to recall.
pub fn average_precision(dets: &[(f64, DetStatus)], n_gt: usize) -> Option<PrCurve> {
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.total_cmp(&dets[a].0));

    let mut rc = Vec::with_capacity(dets.len());
    let mut pr = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        match dets[i].1 {
            DetStatus::Tp => tp += 1,
            DetStatus::Fp => fp += 1,
            DetStatus::Ignored => {}
        }
        rc.push(tp as f64 / n_gt as f64);
        let total = tp + fp;
        pr.push(if total > 0 {
            tp as f64 / total as f64
        } else {
            0.0
        });
    }
    for i in (0..pr.len().saturating_sub(1)).rev() {
        pr[i] = pr[i].max(pr[i + 1]);
    }
    let mut precision = Vec::with_capacity(101);
    let mut ptr = 0usize;
    for r in recall_thresholds() {
        while ptr < rc.len() && rc[ptr] < r {
            ptr += 1;
        }
        precision.push(if ptr < rc.len() { pr[ptr] } else { 0.0 });
    }
    let ap = precision.iter().sum::<f64>() / precision.len() as f64 * 100.0;
    Some(PrCurve {
        precision,
        recall: rc.last().copied().unwrap_or(0.0),
        ap,
    })
}

/// Mutable overlay on a dataset describing which tracks take part in an evaluation and how.
///
/// Range filtering and error fixes are both expressed as views, so the underlying dataset
/// and IoU table are never modified.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalView {
    pub pred_active: Vec<bool>,
    pub pred_category: Vec<CategoryId>,
    /// Unmatched predictions with this flag are ignored rather than counted as false positives.
    pub pred_out_of_range: Vec<bool>,
    /// A pinned prediction has IoU 1 with the given ground truth and 0 with everything else.
    pub pinned: Vec<Option<usize>>,
    pub gt_active: Vec<bool>,
    pub gt_ignore: Vec<bool>,
}

/// Matching outcome for every prediction at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub threshold: f64,
    pub matched: Vec<Option<usize>>,
    pub iou: Vec<f64>,
    pub ignored: Vec<bool>,
    pub gt_matched: Vec<Option<usize>>,
}

impl Matching {
    pub fn status(&self, view: &EvalView, pred: usize) -> Option<DetStatus> {
        if !view.pred_active[pred] {
            return None;
        }
        Some(if self.ignored[pred] {
            DetStatus::Ignored
        } else if self.matched[pred].is_some() {
            DetStatus::Tp
        } else {
            DetStatus::Fp
        })
    }
}

struct VideoBlock {
    preds: Vec<usize>,
    gts: Vec<usize>,
    /// `preds.len() x gts.len()`, row-major.
    ious: Vec<f64>,
}

/// Precomputed IoUs between every prediction and every ground-truth track of the same video.
pub struct Evaluator<'d> {
    dataset: &'d Dataset,
    config: EvalConfig,
    blocks: Vec<VideoBlock>,
    pred_loc: Vec<(usize, usize)>,
    gt_loc: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryResult {
    pub category: CategoryId,
    pub name: String,
    pub n_gt: usize,
    pub n_pred: usize,
    /// AP per IoU threshold; `None` without ground truth.
    pub ap: Vec<Option<f64>>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    /// Recall per IoU threshold and detection cap.
    pub recall: Vec<Vec<Option<f64>>>,
    #[serde(skip)]
    pub curves: Vec<Option<PrCurve>>,
}

impl CategoryResult {
    pub fn mean_ap(&self) -> Option<f64> {
        mean(self.ap.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub thresholds: Vec<f64>,
    pub recall_tiers: Vec<usize>,
    pub categories: Vec<CategoryResult>,
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    /// AR per detection cap in `recall_tiers`.
    pub ar: Vec<Option<f64>>,
    #[serde(skip)]
    pub matching: Matching,
}

impl EvalResult {
    pub fn ar_at(&self, max_dets: usize) -> Option<f64> {
        self.recall_tiers
            .iter()
            .position(|&k| k == max_dets)
            .and_then(|i| self.ar[i])
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl<'d> Evaluator<'d> {
    pub fn new(dataset: &'d Dataset, config: &EvalConfig) -> Result<Self, EvalError> {
        config.validate()?;
        let report = validate(dataset);
        if !report.is_ok() {
            return Err(EvalError::Invalid(report));
        }

        let mut by_video: BTreeMap<VideoId, (Vec<usize>, Vec<usize>)> = dataset
            .videos
            .keys()
            .map(|&v| (v, (Vec::new(), Vec::new())))
            .collect();
        for (i, p) in dataset.predictions.iter().enumerate() {
            by_video.get_mut(&p.video_id).unwrap().0.push(i);
        }
        for (i, g) in dataset.gt_tracks.iter().enumerate() {
            by_video.get_mut(&g.video_id).unwrap().1.push(i);
        }

        let blocks: Vec<VideoBlock> = by_video
            .into_values()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(preds, gts)| {
                let mut ious = Vec::with_capacity(preds.len() * gts.len());
                for &p in &preds {
                    let pred = &dataset.predictions[p];
                    for &g in &gts {
                        let gt = &dataset.gt_tracks[g];
                        let iou = if gt.iscrowd {
                            sequence_crowd_overlap(gt, pred)
                        } else {
                            sequence_iou(gt, pred).map(|s| s.value)
                        }
                        .map_err(|source| EvalError::Iou {
                            pred: p,
                            gt: g,
                            source,
                        })?;
                        ious.push(iou);
                    }
                }
                Ok(VideoBlock { preds, gts, ious })
            })
            .collect::<Result<_, EvalError>>()?;

        let mut pred_loc = vec![(0, 0); dataset.predictions.len()];
        let mut gt_loc = vec![(0, 0); dataset.gt_tracks.len()];
        for (b, block) in blocks.iter().enumerate() {
            for (row, &p) in block.preds.iter().enumerate() {
                pred_loc[p] = (b, row);
            }
            for (col, &g) in block.gts.iter().enumerate() {
                gt_loc[g] = (b, col);
            }
        }
        Ok(Evaluator {
            dataset,
            config: config.clone(),
            blocks,
            pred_loc,
            gt_loc,
        })
    }

    pub fn dataset(&self) -> &'d Dataset {
        self.dataset
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    /// Sequence IoU between a prediction and a ground-truth track; 0 across videos.
    pub fn iou(&self, pred: usize, gt: usize) -> f64 {
        let (pb, row) = self.pred_loc[pred];
        let (gb, col) = self.gt_loc[gt];
        if pb != gb {
            return 0.0;
        }
        let block = &self.blocks[pb];
        block.ious[row * block.gts.len() + col]
    }

    /// IoU as seen through a view: pinned predictions overlap only their pinned ground truth.
    pub fn view_iou(&self, view: &EvalView, pred: usize, gt: usize) -> f64 {
        match view.pinned[pred] {
            Some(pin) => (pin == gt) as u8 as f64,
            None => self.iou(pred, gt),
        }
    }

    /// Ground-truth tracks sharing the prediction's video.
    pub fn video_gts(&self, pred: usize) -> &[usize] {
        &self.blocks[self.pred_loc[pred].0].gts
    }

    /// Predictions sharing the ground truth's video.
    pub fn video_preds(&self, gt: usize) -> &[usize] {
        &self.blocks[self.gt_loc[gt].0].preds
    }

    /// Every track active, crowd ground truth ignored, and at most `max_dets` predictions
    /// kept per (video, category).
    pub fn base_view(&self) -> EvalView {
        let d = self.dataset;
        let mut view = EvalView {
            pred_active: vec![true; d.predictions.len()],
            pred_category: d.predictions.iter().map(|p| p.category_id).collect(),
            pred_out_of_range: vec![false; d.predictions.len()],
            pinned: vec![None; d.predictions.len()],
            gt_active: vec![true; d.gt_tracks.len()],
            gt_ignore: d.gt_tracks.iter().map(|g| g.iscrowd).collect(),
        };
        for block in &self.blocks {
            let mut cells: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
            for &p in &block.preds {
                cells.entry(view.pred_category[p]).or_default().push(p);
            }
            for preds in cells.values_mut() {
                preds.sort_by(|&a, &b| d.predictions[b].score.total_cmp(&d.predictions[a].score));
                for &p in preds.iter().skip(self.config.max_dets) {
                    view.pred_active[p] = false;
                }
            }
        }
        view
    }

    /// Matches every (video, category) cell of the view at each threshold.
    pub fn match_view(&self, view: &EvalView, thresholds: &[f64]) -> Vec<Matching> {
        let d = self.dataset;
        let n_pred = d.predictions.len();
        let n_gt = d.gt_tracks.len();

        type CellResult = Vec<(usize, Vec<Option<(usize, f64)>>)>;
        let per_block: Vec<(CellResult, Vec<usize>)> = self
            .blocks
            .par_iter()
            .map(|block| {
                let mut cells: BTreeMap<CategoryId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
                for &p in block.preds.iter().filter(|&&p| view.pred_active[p]) {
                    cells.entry(view.pred_category[p]).or_default().0.push(p);
                }
                for &g in block.gts.iter().filter(|&&g| view.gt_active[g]) {
                    cells
                        .entry(d.gt_tracks[g].category_id)
                        .or_default()
                        .1
                        .push(g);
                }
                let mut results: CellResult = Vec::new();
                let mut touched_gts = Vec::new();
                for (preds, gts) in cells.values() {
                    touched_gts.extend_from_slice(gts);
                    if preds.is_empty() {
                        continue;
                    }
                    let scores: Vec<f64> = preds.iter().map(|&p| d.predictions[p].score).collect();
                    let ious: Vec<Vec<f64>> = preds
                        .iter()
                        .map(|&p| gts.iter().map(|&g| self.view_iou(view, p, g)).collect())
                        .collect();
                    let ignore: Vec<bool> = gts.iter().map(|&g| view.gt_ignore[g]).collect();
                    let crowd: Vec<bool> = gts.iter().map(|&g| d.gt_tracks[g].iscrowd).collect();
                    let per_threshold: Vec<Vec<Option<(usize, f64)>>> = thresholds
                        .iter()
                        .map(|&t| {
                            match_category(&scores, &ious, &ignore, &crowd, t)
                                .into_iter()
                                .map(|m| m.map(|(gi, iou)| (gts[gi], iou)))
                                .collect()
                        })
                        .collect();
                    for (i, &p) in preds.iter().enumerate() {
                        results.push((p, per_threshold.iter().map(|r| r[i]).collect()));
                    }
                }
                (results, touched_gts)
            })
            .collect();

        thresholds
            .iter()
            .enumerate()
            .map(|(ti, &threshold)| {
                let mut m = Matching {
                    threshold,
                    matched: vec![None; n_pred],
                    iou: vec![0.0; n_pred],
                    ignored: vec![false; n_pred],
                    gt_matched: vec![None; n_gt],
                };
                for (results, _) in &per_block {
                    for (p, per_t) in results {
                        match per_t[ti] {
                            Some((g, iou)) => {
                                m.matched[*p] = Some(g);
                                m.iou[*p] = iou;
                                m.ignored[*p] = view.gt_ignore[g];
                                if !d.gt_tracks[g].iscrowd {
                                    m.gt_matched[g] = Some(*p);
                                }
                            }
                            None => m.ignored[*p] = view.pred_out_of_range[*p],
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// Ground-truth counts (non-ignored, active) per category.
    fn gt_counts(&self, view: &EvalView) -> BTreeMap<CategoryId, usize> {
        let mut counts: BTreeMap<CategoryId, usize> =
            self.dataset.categories.keys().map(|&c| (c, 0)).collect();
        for (g, t) in self.dataset.gt_tracks.iter().enumerate() {
            if view.gt_active[g] && !view.gt_ignore[g] {
                *counts.entry(t.category_id).or_default() += 1;
            }
        }
        counts
    }

    fn dets_by_category(
        &self,
        view: &EvalView,
        matching: &Matching,
    ) -> BTreeMap<CategoryId, Vec<(usize, f64, DetStatus)>> {
        let mut out: BTreeMap<CategoryId, Vec<(usize, f64, DetStatus)>> = BTreeMap::new();
        for (p, pred) in self.dataset.predictions.iter().enumerate() {
            if let Some(status) = matching.status(view, p) {
                out.entry(view.pred_category[p])
                    .or_default()
                    .push((p, pred.score, status));
            }
        }
        out
    }

    /// Mean AP over categories with ground truth at one threshold, or `None` when no category
    /// has ground truth.
    pub fn ap_at(&self, view: &EvalView, threshold: f64) -> Option<f64> {
        let matching = self.match_view(view, &[threshold]).pop().unwrap();
        self.ap_from_matching(view, &matching)
    }

    pub fn ap_from_matching(&self, view: &EvalView, matching: &Matching) -> Option<f64> {
        let counts = self.gt_counts(view);
        let dets = self.dets_by_category(view, matching);
        mean(counts.iter().map(|(c, &n)| {
            let d: Vec<(f64, DetStatus)> = dets
                .get(c)
                .map(|v| v.iter().map(|&(_, s, st)| (s, st)).collect())
                .unwrap_or_default();
            average_precision(&d, n).map(|curve| curve.ap)
        }))
    }

    /// Full COCO-style evaluation of a view over the configured IoU sweep.
    pub fn evaluate_view(&self, view: &EvalView) -> EvalResult {
        let mut thresholds = self.config.iou_sweep.thresholds();
        let sweep_len = thresholds.len();
        let position = |ts: &[f64], x: f64| ts.iter().position(|&t| (t - x).abs() < 1e-12);
        // AP@50, AP@75 and the error-analysis threshold are always evaluated
        for extra in [0.5, 0.75, self.config.thr_f] {
            if position(&thresholds, extra).is_none() {
                thresholds.push(extra);
            }
        }
        let matchings = self.match_view(view, &thresholds);
        let tiers = self.config.recall_tiers();

        // rank of each prediction inside its (video, category) cell
        let d = self.dataset;
        let mut cell_rank = vec![usize::MAX; d.predictions.len()];
        for block in &self.blocks {
            let mut cells: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
            for &p in block.preds.iter().filter(|&&p| view.pred_active[p]) {
                cells.entry(view.pred_category[p]).or_default().push(p);
            }
            for preds in cells.values_mut() {
                preds.sort_by(|&a, &b| d.predictions[b].score.total_cmp(&d.predictions[a].score));
                for (rank, &p) in preds.iter().enumerate() {
                    cell_rank[p] = rank;
                }
            }
        }

        let counts = self.gt_counts(view);
        let per_threshold_dets: Vec<_> = matchings
            .iter()
            .map(|m| self.dets_by_category(view, m))
            .collect();
        let categories: Vec<CategoryResult> = counts
            .iter()
            .map(|(&c, &n_gt)| {
                let mut ap = Vec::new();
                let mut curves = Vec::new();
                let mut recall = Vec::new();
                for dets in &per_threshold_dets {
                    let cat = dets.get(&c).map(Vec::as_slice).unwrap_or(&[]);
                    let plain: Vec<(f64, DetStatus)> =
                        cat.iter().map(|&(_, s, st)| (s, st)).collect();
                    let curve = average_precision(&plain, n_gt);
                    ap.push(curve.as_ref().map(|c| c.ap));
                    curves.push(curve);
                    recall.push(
                        tiers
                            .iter()
                            .map(|&k| {
                                (n_gt > 0).then(|| {
                                    let tp = cat
                                        .iter()
                                        .filter(|&&(p, _, st)| {
                                            st == DetStatus::Tp && cell_rank[p] < k
                                        })
                                        .count();
                                    tp as f64 / n_gt as f64 * 100.0
                                })
                            })
                            .collect(),
                    );
                }
                let n_pred = per_threshold_dets[0].get(&c).map_or(0, Vec::len);
                let at = |x: f64| position(&thresholds, x).and_then(|i| ap[i]);
                CategoryResult {
                    ap50: at(0.5),
                    ap75: at(0.75),
                    category: c,
                    name: d.categories.get(&c).cloned().unwrap_or_default(),
                    n_gt,
                    n_pred,
                    ap,
                    recall,
                    curves,
                }
            })
            .collect();

        let ap_at = |x: f64| {
            let i = position(&thresholds, x)?;
            mean(categories.iter().map(|c| c.ap[i]))
        };
        let sweep_mean = mean(
            categories
                .iter()
                .map(|c| mean(c.ap[..sweep_len].iter().copied())),
        );
        let ar = (0..tiers.len())
            .map(|k| {
                mean(
                    categories
                        .iter()
                        .map(|c| mean(c.recall[..sweep_len].iter().map(|r| r[k]))),
                )
            })
            .collect();
        let thr_f_index = position(&thresholds, self.config.thr_f).unwrap();
        let result = EvalResult {
            thresholds: thresholds[..sweep_len].to_vec(),
            recall_tiers: tiers,
            map: sweep_mean,
            ap50: ap_at(0.5),
            ap75: ap_at(0.75),
            ar,
            categories: categories
                .into_iter()
                .map(|mut c| {
                    c.ap.truncate(sweep_len);
                    c.recall.truncate(sweep_len);
                    c.curves.truncate(sweep_len);
                    c
                })
                .collect(),
            matching: matchings[thr_f_index].clone(),
        };
        result
    }
}

/// Loads nothing, checks the configuration and dataset, then runs the full sweep.
pub fn evaluate(dataset: &Dataset, config: &EvalConfig) -> Result<EvalResult, EvalError> {
    let evaluator = Evaluator::new(dataset, config)?;
    Ok(evaluator.evaluate_view(&evaluator.base_view()))
}
