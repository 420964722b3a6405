//! Localization measurements between two padded mask sequences: sequence IoU, per-frame IoU
//! and temporal overlap.

use thiserror::Error;

use crate::config::OverlapUnionMode;
use crate::dataset::MaskSequence;
use crate::rle::{RleError, RleMask};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IouError {
    #[error("sequences have {0} and {1} frames")]
    LengthMismatch(usize, usize),
    #[error("frame {frame}: {source}")]
    Mask { frame: usize, source: RleError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceIou {
    pub value: f64,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalOverlap {
    pub value: f64,
    pub n_match: usize,
    pub temporal_union: usize,
}

/// Per-frame `(|a ∩ b|, |a ∪ b|)`; an absent mask is empty.
pub fn frame_areas(
    a: &(impl MaskSequence + ?Sized),
    b: &(impl MaskSequence + ?Sized),
) -> Result<Vec<(u64, u64)>, IouError> {
    let (a, b) = (a.masks(), b.masks());
    if a.len() != b.len() {
        return Err(IouError::LengthMismatch(a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(frame, pair)| pair_areas(pair).map_err(|source| IouError::Mask { frame, source }))
        .collect()
}

fn pair_areas(pair: (&Option<RleMask>, &Option<RleMask>)) -> Result<(u64, u64), RleError> {
    Ok(match pair {
        (Some(x), Some(y)) => (x.intersect_area(y)?, x.union_area(y)?),
        (Some(x), None) | (None, Some(x)) => (0, x.area()),
        (None, None) => (0, 0),
    })
}

/// Sum of per-frame intersections over sum of per-frame unions. Two all-empty sequences
/// give 0.
pub fn sequence_iou(
    gt: &(impl MaskSequence + ?Sized),
    pred: &(impl MaskSequence + ?Sized),
) -> Result<SequenceIou, IouError> {
    let (intersection, union) = frame_areas(gt, pred)?
        .into_iter()
        .fold((0u64, 0u64), |(i, u), (fi, fu)| (i + fi, u + fu));
    let value = if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    };
    Ok(SequenceIou {
        value,
        intersection,
        union,
    })
}

/// Crowd-region overlap: intersection over the prediction's own area.
pub fn sequence_crowd_overlap(
    crowd: &(impl MaskSequence + ?Sized),
    pred: &(impl MaskSequence + ?Sized),
) -> Result<f64, IouError> {
    let (crowd, pred) = (crowd.masks(), pred.masks());
    if crowd.len() != pred.len() {
        return Err(IouError::LengthMismatch(crowd.len(), pred.len()));
    }
    let mut inter = 0u64;
    let mut area = 0u64;
    for (frame, (c, p)) in crowd.iter().zip(pred).enumerate() {
        if let Some(p) = p {
            area += p.area();
            if let Some(c) = c {
                inter += c
                    .intersect_area(p)
                    .map_err(|source| IouError::Mask { frame, source })?;
            }
        }
    }
    Ok(if area == 0 {
        0.0
    } else {
        inter as f64 / area as f64
    })
}

/// Mask IoU for every frame; `None` where both masks are empty.
pub fn frame_ious(
    gt: &(impl MaskSequence + ?Sized),
    pred: &(impl MaskSequence + ?Sized),
) -> Result<Vec<Option<f64>>, IouError> {
    Ok(frame_areas(gt, pred)?
        .into_iter()
        .map(|(i, u)| (u > 0).then(|| i as f64 / u as f64))
        .collect())
}

/// Fraction of the temporal union on which the two tracks overlap with frame IoU strictly
/// above `thr_spat`.
pub fn temporal_overlap(
    gt: &(impl MaskSequence + ?Sized),
    pred: &(impl MaskSequence + ?Sized),
    thr_spat: f64,
    mode: OverlapUnionMode,
) -> Result<TemporalOverlap, IouError> {
    let ious = frame_ious(gt, pred)?;
    let n_match = ious
        .iter()
        .filter(|iou| matches!(iou, Some(v) if *v > thr_spat))
        .count();
    let n = ious.len();
    let temporal_union = match mode {
        OverlapUnionMode::Visible => (0..n)
            .filter(|&t| gt.is_visible(t) || pred.is_visible(t))
            .count(),
        OverlapUnionMode::Range => {
            let in_range = |ext: Option<(usize, usize)>, t: usize| {
                ext.is_some_and(|(first, last)| first <= t && t <= last)
            };
            let (ge, pe) = (gt.temporal_extent(), pred.temporal_extent());
            (0..n)
                .filter(|&t| in_range(ge, t) || in_range(pe, t))
                .count()
        }
    };
    let value = if temporal_union == 0 {
        0.0
    } else {
        n_match as f64 / temporal_union as f64
    };
    Ok(TemporalOverlap {
        value,
        n_match,
        temporal_union,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::Bitmask;

    fn mask(on: &[usize]) -> Option<RleMask> {
        let mut px = vec![false; 16];
        for &i in on {
            px[i] = true;
        }
        Some(RleMask::encode(&Bitmask::from_pixels(4, 4, px).unwrap()))
    }

    #[test]
    fn identical_and_disjoint() {
        let a = vec![mask(&[0, 1, 2]), None, mask(&[5])];
        let b = vec![mask(&[8, 9]), mask(&[3]), None];
        assert_eq!(sequence_iou(&a, &a).unwrap().value, 1.0);
        assert_eq!(sequence_iou(&a, &b).unwrap().value, 0.0);
    }

    #[test]
    fn two_frame_example() {
        // frame 1: |∩| = 2, |∪| = 6; frame 2: |∩| = 4, |∪| = 4
        let gt = vec![mask(&[0, 1, 2, 3]), mask(&[4, 5, 6, 7])];
        let pred = vec![mask(&[2, 3, 8, 9]), mask(&[4, 5, 6, 7])];
        let iou = sequence_iou(&gt, &pred).unwrap();
        assert_eq!((iou.intersection, iou.union), (6, 10));
        assert_eq!(iou.value, 0.6);
        let frames = frame_ious(&gt, &pred).unwrap();
        assert_eq!(frames[0], Some(2.0 / 6.0));
        assert_eq!(frames[1], Some(1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gt = vec![mask(&[0]), None];
        let pred: Vec<Option<RleMask>> = vec![None, None];
        assert_eq!(sequence_iou(&gt, &pred).unwrap().value, 0.0);
        assert_eq!(frame_ious(&gt, &pred).unwrap(), vec![Some(0.0), None]);
    }

    #[test]
    fn length_mismatch() {
        let a = vec![mask(&[0])];
        let b = vec![mask(&[0]), None];
        assert_eq!(
            sequence_iou(&a, &b).unwrap_err(),
            IouError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn frame_dimension_mismatch() {
        let a = vec![mask(&[0])];
        let b = vec![Some(RleMask::empty(2, 2).unwrap())];
        assert!(matches!(
            sequence_iou(&a, &b),
            Err(IouError::Mask { frame: 0, .. })
        ));
    }

    #[test]
    fn overlap_of_shifted_tracks() {
        // GT on frames 0..10, prediction on frames 5..15, overlapping on 5..10
        let on = mask(&[0, 1, 2, 3]);
        let gt: Vec<_> = (0..15)
            .map(|t| if t < 10 { on.clone() } else { None })
            .collect();
        let pred: Vec<_> = (0..15)
            .map(|t| if t >= 5 { on.clone() } else { None })
            .collect();
        let o = temporal_overlap(&gt, &pred, 0.1, OverlapUnionMode::Visible).unwrap();
        assert_eq!((o.n_match, o.temporal_union), (5, 15));
        assert_eq!(o.value, 5.0 / 15.0);
        assert_eq!(
            temporal_overlap(&gt, &gt, 0.1, OverlapUnionMode::Visible)
                .unwrap()
                .value,
            1.0
        );
    }

    #[test]
    fn overlap_threshold_is_strict() {
        // frame IoU exactly 0.5
        let gt = vec![mask(&[0, 1])];
        let pred = vec![mask(&[0])];
        let at = temporal_overlap(&gt, &pred, 0.5, OverlapUnionMode::Visible).unwrap();
        assert_eq!(at.n_match, 0);
        let below = temporal_overlap(&gt, &pred, 0.49, OverlapUnionMode::Visible).unwrap();
        assert_eq!(below.n_match, 1);
    }

    #[test]
    fn cotemporal_but_disjoint() {
        let gt = vec![mask(&[0]), mask(&[0])];
        let pred = vec![mask(&[15]), mask(&[15])];
        let o = temporal_overlap(&gt, &pred, 0.1, OverlapUnionMode::Visible).unwrap();
        assert_eq!((o.n_match, o.value), (0, 0.0));
    }

    #[test]
    fn range_mode_counts_interior_gaps() {
        let m = mask(&[0]);
        let gt = vec![m.clone(), None, None, m.clone()];
        let pred = vec![m.clone(), None, None, None];
        let visible = temporal_overlap(&gt, &pred, 0.1, OverlapUnionMode::Visible).unwrap();
        let range = temporal_overlap(&gt, &pred, 0.1, OverlapUnionMode::Range).unwrap();
        assert_eq!(visible.temporal_union, 2);
        assert_eq!(range.temporal_union, 4);
        assert_eq!(range.n_match, 1);
    }

    #[test]
    fn both_empty_tracks_overlap_zero() {
        let e: Vec<Option<RleMask>> = vec![None, None];
        let o = temporal_overlap(&e, &e, 0.1, OverlapUnionMode::Visible).unwrap();
        assert_eq!((o.value, o.temporal_union), (0.0, 0));
    }

    #[test]
    fn crowd_overlap_uses_prediction_area() {
        let crowd = vec![mask(&[0, 1, 2, 3, 4, 5, 6, 7])];
        let pred = vec![mask(&[6, 7, 8, 9])];
        assert_eq!(sequence_crowd_overlap(&crowd, &pred).unwrap(), 0.5);
    }
}
