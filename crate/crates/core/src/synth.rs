//! Synthetic scenes and seeded error injection.
//!
//! [`perturb`] turns ground truth into predictions with a known population of each error
//! kind. In the default non-interacting mode every injection targets its own ground-truth
//! track, so the classifier must reproduce the census exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::OverlapUnionMode;
use crate::dataset::{
    CategoryId, Dataset, InstanceTrack, TrackId, TrackPrediction, VideoClip, VideoId,
};
use crate::iou::{sequence_iou, temporal_overlap};
use crate::rle::RleMask;
use crate::taxonomy::ErrorKind;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid perturbation spec: {0}")]
    Spec(String),
    #[error("could only place {placed} of {requested} {kind} errors: {reason}")]
    Unrealizable {
        kind: ErrorKind,
        requested: usize,
        placed: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Each injection gets its own ground-truth track.
    #[default]
    NonInteracting,
    /// Targets are drawn with replacement; only partition totals are meaningful.
    Interacting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    pub seed: u64,
    pub counts: BTreeMap<ErrorKind, usize>,
    pub mode: PerturbMode,
    /// Score range of untouched copies. `[1, 1]` replays ground truth.
    pub tp_score: [f64; 2],
    pub fp_score: [f64; 2],
    /// Largest erosion or dilation radius tried, in pixels.
    pub max_radius: u32,
    /// Side of background blobs, in pixels.
    pub blob_size: u32,
    pub thr_f: f64,
    pub thr_b: f64,
    pub thr_spat: f64,
    pub thr_temp: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            seed: 0,
            counts: BTreeMap::new(),
            mode: PerturbMode::NonInteracting,
            tp_score: [1.0, 1.0],
            fp_score: [0.05, 0.95],
            max_radius: 64,
            blob_size: 6,
            thr_f: 0.5,
            thr_b: 0.1,
            thr_spat: 0.1,
            thr_temp: 0.7,
        }
    }
}

impl PerturbSpec {
    pub fn count(&self, kind: ErrorKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn with_counts(mut self, counts: &[(ErrorKind, usize)]) -> Self {
        self.counts = counts.iter().copied().collect();
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        for (name, [lo, hi]) in [("tp_score", self.tp_score), ("fp_score", self.fp_score)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SynthError::Spec(format!(
                    "{name} must satisfy 0 <= lo <= hi <= 1"
                )));
            }
        }
        if !(0.0 < self.thr_b && self.thr_b < self.thr_f && self.thr_f <= 1.0) {
            return Err(SynthError::Spec("need 0 < thr_b < thr_f <= 1".into()));
        }
        if self.blob_size == 0 {
            return Err(SynthError::Spec("blob_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: ErrorKind,
    pub video_id: VideoId,
    /// Target track; absent for background blobs.
    pub gt_id: Option<TrackId>,
    /// Index of the injected prediction in the output; absent for Miss.
    pub prediction: Option<usize>,
}

/// What was injected and which error records the classifier should produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub seed: u64,
    pub mode: PerturbMode,
    pub injected: BTreeMap<ErrorKind, usize>,
    /// Expected classifier counts. A Both injection also leaves its target uncovered, so it
    /// adds a Miss.
    pub expected: BTreeMap<ErrorKind, usize>,
    pub injections: Vec<Injection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Role {
    Tp,
    Injected(ErrorKind),
}

struct Planned {
    gt: Option<usize>,
    video: VideoId,
    role: Role,
    prediction: Option<TrackPrediction>,
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Non-crowd ground truth in the same video, excluding `g`.
fn neighbours(d: &Dataset, g: usize) -> Vec<usize> {
    let v = d.gt_tracks[g].video_id;
    (0..d.gt_tracks.len())
        .filter(|&h| h != g && d.gt_tracks[h].video_id == v && !d.gt_tracks[h].iscrowd)
        .collect()
}

fn iou(gt: &InstanceTrack, masks: &[Option<RleMask>]) -> f64 {
    sequence_iou(gt, masks).map_or(0.0, |s| s.value)
}

fn overlap(gt: &InstanceTrack, masks: &[Option<RleMask>], spec: &PerturbSpec) -> f64 {
    temporal_overlap(gt, masks, spec.thr_spat, OverlapUnionMode::Visible).map_or(0.0, |o| o.value)
}

fn in_band(x: f64, spec: &PerturbSpec) -> bool {
    x > spec.thr_b && x < spec.thr_f
}

/// Checks that a localization-type prediction of `category` is read as intended: `g` is the
/// best same-class track with IoU in the band and no other-class track reaches `thr_f`.
fn check_localized(
    d: &Dataset,
    g: usize,
    category: CategoryId,
    masks: &[Option<RleMask>],
    spec: &PerturbSpec,
) -> Option<f64> {
    let own = iou(&d.gt_tracks[g], masks);
    if !in_band(own, spec) {
        return None;
    }
    for h in neighbours(d, g) {
        let other = iou(&d.gt_tracks[h], masks);
        let same_class = d.gt_tracks[h].category_id == category;
        if (same_class && other >= own) || (!same_class && other >= spec.thr_f) {
            return None;
        }
    }
    Some(own)
}

// ---- morphology ----

/// A track's frames cropped to a common bounding box (plus `pad`), column-major.
struct Crop {
    row0: u32,
    col0: u32,
    rows: u32,
    cols: u32,
    frames: Vec<Option<Vec<bool>>>,
}

fn crop(masks: &[Option<RleMask>], pad: u32) -> Option<Crop> {
    let (mut r0, mut r1, mut c0, mut c1) = (u32::MAX, 0u32, u32::MAX, 0u32);
    let mut height = 0u32;
    let mut width = 0u32;
    for m in masks.iter().flatten() {
        height = m.height();
        width = m.width();
        for (start, end) in m.foreground_runs() {
            for idx in [start, end - 1] {
                let (c, r) = ((idx / height as u64) as u32, (idx % height as u64) as u32);
                c0 = c0.min(c);
                c1 = c1.max(c);
                r0 = r0.min(r);
                r1 = r1.max(r);
            }
            // a run spanning columns covers whole rows in between
            if (start / height as u64) != ((end - 1) / height as u64) {
                r0 = 0;
                r1 = height - 1;
            }
        }
    }
    if c0 == u32::MAX {
        return None;
    }
    let row0 = r0.saturating_sub(pad);
    let col0 = c0.saturating_sub(pad);
    let rows = (r1 + pad + 1).min(height) - row0;
    let cols = (c1 + pad + 1).min(width) - col0;
    let frames = masks
        .iter()
        .map(|m| {
            m.as_ref().map(|m| {
                let mut grid = vec![false; (rows * cols) as usize];
                for (start, end) in m.foreground_runs() {
                    for idx in start..end {
                        let (c, r) = ((idx / height as u64) as u32, (idx % height as u64) as u32);
                        grid[((c - col0) * rows + (r - row0)) as usize] = true;
                    }
                }
                grid
            })
        })
        .collect();
    Some(Crop {
        row0,
        col0,
        rows,
        cols,
        frames,
    })
}

/// Chessboard distance of every pixel to the nearest pixel where `grid` is `target`;
/// pixels outside the grid count as `target` when `border_is_target` holds.
fn chessboard_distance(
    grid: &[bool],
    rows: u32,
    cols: u32,
    target: bool,
    border_is_target: bool,
) -> Vec<u32> {
    let (rows, cols) = (rows as i64, cols as i64);
    let inf = u32::MAX / 2;
    let outside = if border_is_target { 0 } else { inf };
    let mut d: Vec<u32> = grid
        .iter()
        .map(|&p| if p == target { 0 } else { inf })
        .collect();
    let at = |d: &Vec<u32>, r: i64, c: i64| -> u32 {
        if r < 0 || c < 0 || r >= rows || c >= cols {
            outside
        } else {
            d[(c * rows + r) as usize]
        }
    };
    for c in 0..cols {
        for r in 0..rows {
            let i = (c * rows + r) as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [(-1, -1), (0, -1), (1, -1), (-1, 0)]
                .iter()
                .map(|&(dr, dc)| at(&d, r + dr, c + dc))
                .min()
                .unwrap();
            d[i] = d[i].min(best.saturating_add(1));
        }
    }
    for c in (0..cols).rev() {
        for r in (0..rows).rev() {
            let i = (c * rows + r) as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [(1, 1), (0, 1), (-1, 1), (1, 0)]
                .iter()
                .map(|&(dr, dc)| at(&d, r + dr, c + dc))
                .min()
                .unwrap();
            d[i] = d[i].min(best.saturating_add(1));
        }
    }
    d
}

fn uncrop(crop: &Crop, keep: &[Vec<bool>], like: &[Option<RleMask>]) -> Vec<Option<RleMask>> {
    let (height, width) = like
        .iter()
        .flatten()
        .map(|m| (m.height(), m.width()))
        .next()
        .unwrap();
    let mut k = keep.iter();
    crop.frames
        .iter()
        .map(|f| {
            f.as_ref().map(|_| {
                let grid = k.next().unwrap();
                let mut intervals = Vec::new();
                for c in 0..crop.cols {
                    let mut r = 0;
                    while r < crop.rows {
                        if grid[(c * crop.rows + r) as usize] {
                            let start = r;
                            while r < crop.rows && grid[(c * crop.rows + r) as usize] {
                                r += 1;
                            }
                            let base = (crop.col0 + c) as u64 * height as u64 + crop.row0 as u64;
                            intervals.push((base + start as u64, base + r as u64));
                        } else {
                            r += 1;
                        }
                    }
                }
                RleMask::from_intervals(height, width, intervals).unwrap()
            })
        })
        .collect()
}

/// Erosion by a `(2r+1)`-square for every `r`, returned lazily through the distance map.
fn eroded(
    masks: &[Option<RleMask>],
    r: u32,
    dist: &[Vec<u32>],
    crop: &Crop,
) -> Vec<Option<RleMask>> {
    let keep: Vec<Vec<bool>> = dist
        .iter()
        .map(|d| d.iter().map(|&x| x > r).collect())
        .collect();
    uncrop(crop, &keep, masks)
}

fn dilated(
    masks: &[Option<RleMask>],
    r: u32,
    dist: &[Vec<u32>],
    crop: &Crop,
) -> Vec<Option<RleMask>> {
    let keep: Vec<Vec<bool>> = dist
        .iter()
        .map(|d| d.iter().map(|&x| x <= r).collect())
        .collect();
    uncrop(crop, &keep, masks)
}

/// Smallest erosion (or, failing that, dilation) whose IoU with `g` drops below `thr_f`,
/// subject to `accept`.
fn morph_below_threshold(
    d: &Dataset,
    g: usize,
    category: CategoryId,
    spec: &PerturbSpec,
    accept: impl Fn(&[Option<RleMask>]) -> bool,
) -> Result<Vec<Option<RleMask>>, String> {
    let gt = &d.gt_tracks[g];
    let masks = &gt.masks;
    let area: u64 = masks.iter().flatten().map(RleMask::area).sum();

    if let Some(c) = crop(masks, 1) {
        let dist: Vec<Vec<u32>> = c
            .frames
            .iter()
            .flatten()
            .map(|f| chessboard_distance(f, c.rows, c.cols, false, true))
            .collect();
        // kept area for radius r is the number of pixels with distance > r
        let mut hist: Vec<u64> = Vec::new();
        for x in dist.iter().flatten().filter(|&&x| x > 0) {
            if hist.len() <= *x as usize {
                hist.resize(*x as usize + 1, 0);
            }
            hist[*x as usize] += 1;
        }
        let mut kept = area;
        for r in 1..=spec.max_radius.min(hist.len() as u32) {
            kept -= hist.get(r as usize).copied().unwrap_or(0);
            if (kept as f64) / (area as f64) < spec.thr_f {
                let candidate = eroded(masks, r, &dist, &c);
                if check_localized(d, g, category, &candidate, spec).is_some() && accept(&candidate)
                {
                    return Ok(candidate);
                }
                break;
            }
        }
    }

    let pad = spec.max_radius;
    if let Some(c) = crop(masks, pad) {
        let dist: Vec<Vec<u32>> = c
            .frames
            .iter()
            .flatten()
            .map(|f| chessboard_distance(f, c.rows, c.cols, true, false))
            .collect();
        for r in 1..=spec.max_radius {
            let candidate = dilated(masks, r, &dist, &c);
            let value = iou(gt, &candidate);
            if value < spec.thr_f {
                if check_localized(d, g, category, &candidate, spec).is_some() && accept(&candidate)
                {
                    return Ok(candidate);
                }
                break;
            }
        }
    }
    Err(format!(
        "track {} (area {area}) cannot be eroded or dilated into the IoU band",
        gt.id
    ))
}

// ---- per-kind realizations ----

fn realize_spat(d: &Dataset, g: usize, spec: &PerturbSpec) -> Result<Vec<Option<RleMask>>, String> {
    let gt = &d.gt_tracks[g];
    morph_below_threshold(d, g, gt.category_id, spec, |m| {
        overlap(gt, m, spec) >= spec.thr_temp
    })
}

/// Identity-switch splice: `g` before frame `s`, a partner track from `s` on. Falls back to
/// cutting `g` off at `s` when no partner works. Keeps the highest IoU with `g` below `thr_f`.
fn realize_temp(d: &Dataset, g: usize, spec: &PerturbSpec) -> Result<Vec<Option<RleMask>>, String> {
    let gt = &d.gt_tracks[g];
    let t_len = gt.masks.len();
    let mut partners: Vec<Option<usize>> = neighbours(d, g).into_iter().map(Some).collect();
    partners.push(None);
    let mut best: Option<(f64, Vec<Option<RleMask>>)> = None;
    for partner in partners {
        for s in 1..t_len {
            let masks: Vec<Option<RleMask>> = (0..t_len)
                .map(|t| match (t < s, partner) {
                    (true, _) => gt.masks[t].clone(),
                    (false, Some(h)) => d.gt_tracks[h].masks[t].clone(),
                    (false, None) => None,
                })
                .collect();
            if masks.iter().flatten().all(RleMask::is_empty) {
                continue;
            }
            let Some(value) = check_localized(d, g, gt.category_id, &masks, spec) else {
                continue;
            };
            if overlap(gt, &masks, spec) >= spec.thr_temp {
                continue;
            }
            if best.as_ref().map_or(true, |(b, _)| value > *b) {
                best = Some((value, masks));
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, m)| m).ok_or_else(|| {
        format!(
            "track {} admits no switch frame with IoU in the band and low temporal overlap",
            gt.id
        )
    })
}

fn other_category(d: &Dataset, c: CategoryId) -> Option<CategoryId> {
    let cats: Vec<CategoryId> = d.categories.keys().copied().collect();
    let i = cats.iter().position(|&x| x == c)?;
    (cats.len() > 1).then(|| cats[(i + 1) % cats.len()])
}

fn realize_both(
    d: &Dataset,
    g: usize,
    spec: &PerturbSpec,
) -> Result<(CategoryId, Vec<Option<RleMask>>), String> {
    let gt = &d.gt_tracks[g];
    let flipped = other_category(d, gt.category_id).ok_or("only one category")?;
    let masks = morph_below_threshold(d, g, gt.category_id, spec, |m| {
        // no track of the new class may look like a localization error
        neighbours(d, g)
            .into_iter()
            .filter(|&h| d.gt_tracks[h].category_id == flipped)
            .all(|h| iou(&d.gt_tracks[h], m) < spec.thr_b)
    })?;
    Ok((flipped, masks))
}

/// Square blob on frames `[first, last]`, disjoint from every ground-truth pixel of the video.
fn realize_bkg(
    video: &VideoClip,
    occupied: &[bool],
    spec: &PerturbSpec,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Option<RleMask>>> {
    let (h, w) = (video.height, video.width);
    let size = spec.blob_size.min(h).min(w);
    let free = |r0: u32, c0: u32| {
        (c0..c0 + size).all(|c| (r0..r0 + size).all(|r| !occupied[(c * h + r) as usize]))
    };
    let mut spot = None;
    for _ in 0..200 {
        let (r0, c0) = (rng.gen_range(0..=h - size), rng.gen_range(0..=w - size));
        if free(r0, c0) {
            spot = Some((r0, c0));
            break;
        }
    }
    if spot.is_none() {
        spot = (0..=w - size)
            .flat_map(|c| (0..=h - size).map(move |r| (r, c)))
            .find(|&(r, c)| free(r, c));
    }
    let (r0, c0) = spot?;
    let blob = RleMask::from_intervals(
        h,
        w,
        (c0..c0 + size).map(|c| {
            let base = c as u64 * h as u64 + r0 as u64;
            (base, base + size as u64)
        }),
    )
    .ok()?;
    let t = video.length;
    let first = rng.gen_range(0..t);
    let last = rng.gen_range(first..t);
    Some(
        (0..t)
            .map(|i| (first..=last).contains(&i).then(|| blob.clone()))
            .collect(),
    )
}

fn occupancy(d: &Dataset, video: &VideoClip) -> Vec<bool> {
    let mut occ = vec![false; (video.height * video.width) as usize];
    for t in d.gt_tracks.iter().filter(|t| t.video_id == video.id) {
        for m in t.masks.iter().flatten() {
            for (start, end) in m.foreground_runs() {
                occ[start as usize..end as usize].fill(true);
            }
        }
    }
    occ
}

/// Realizes `count` injections of `kind` on the first suitable candidates, trying them in
/// parallel batches while keeping the candidate order.
fn place<T: Send>(
    kind: ErrorKind,
    count: usize,
    candidates: &mut Vec<usize>,
    realize: impl Fn(usize) -> Result<T, String> + Sync,
) -> Result<Vec<(usize, T)>, SynthError> {
    let mut placed = Vec::new();
    let mut last_reason = String::from("no candidate tracks left");
    let mut cursor = 0;
    let mut used = BTreeSet::new();
    while placed.len() < count && cursor < candidates.len() {
        let batch = ((count - placed.len()) * 2).max(8);
        let end = (cursor + batch).min(candidates.len());
        let results: Vec<(usize, Result<T, String>)> = candidates[cursor..end]
            .par_iter()
            .map(|&g| (g, realize(g)))
            .collect();
        for (g, r) in results {
            if placed.len() == count {
                break;
            }
            match r {
                Ok(v) => {
                    used.insert(g);
                    placed.push((g, v));
                }
                Err(reason) => last_reason = reason,
            }
        }
        cursor = end;
    }
    if placed.len() < count {
        return Err(SynthError::Unrealizable {
            kind,
            requested: count,
            placed: placed.len(),
            reason: last_reason,
        });
    }
    candidates.retain(|g| !used.contains(g));
    Ok(placed)
}

/// Predictions realizing `spec` on the ground truth of `d`, plus the census.
pub fn perturb(
    d: &Dataset,
    spec: &PerturbSpec,
) -> Result<(Vec<TrackPrediction>, Census), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<usize> = (0..d.gt_tracks.len())
        .filter(|&g| !d.gt_tracks[g].iscrowd)
        .collect();
    pool.shuffle(&mut rng);

    let targeted = [
        ErrorKind::Cls,
        ErrorKind::Spat,
        ErrorKind::Temp,
        ErrorKind::Both,
        ErrorKind::Dup,
        ErrorKind::Miss,
    ];
    let mut planned: Vec<Planned> = Vec::new();
    let mut replaced: BTreeSet<usize> = BTreeSet::new();

    for kind in targeted {
        let count = spec.count(kind);
        if count == 0 {
            continue;
        }
        let mut candidates = match spec.mode {
            PerturbMode::NonInteracting => pool.clone(),
            PerturbMode::Interacting => {
                let mut all: Vec<usize> = (0..d.gt_tracks.len())
                    .filter(|&g| !d.gt_tracks[g].iscrowd)
                    .collect();
                all.shuffle(&mut rng);
                all
            }
        };
        let make = |g: usize, category: CategoryId, masks| TrackPrediction {
            video_id: d.gt_tracks[g].video_id,
            category_id: category,
            score: 0.0,
            masks,
        };
        let placed: Vec<(usize, Option<TrackPrediction>)> = match kind {
            ErrorKind::Cls => place(kind, count, &mut candidates, |g| {
                let flipped = other_category(d, d.gt_tracks[g].category_id)
                    .ok_or_else(|| "only one category".to_string())?;
                Ok(Some(make(g, flipped, d.gt_tracks[g].masks.clone())))
            })?,
            ErrorKind::Spat => place(kind, count, &mut candidates, |g| {
                realize_spat(d, g, spec).map(|m| Some(make(g, d.gt_tracks[g].category_id, m)))
            })?,
            ErrorKind::Temp => place(kind, count, &mut candidates, |g| {
                realize_temp(d, g, spec).map(|m| Some(make(g, d.gt_tracks[g].category_id, m)))
            })?,
            ErrorKind::Both => place(kind, count, &mut candidates, |g| {
                realize_both(d, g, spec).map(|(c, m)| Some(make(g, c, m)))
            })?,
            ErrorKind::Dup => place(kind, count, &mut candidates, |g| {
                Ok(Some(make(
                    g,
                    d.gt_tracks[g].category_id,
                    d.gt_tracks[g].masks.clone(),
                )))
            })?,
            _ => place(kind, count, &mut candidates, |_| Ok(None))?,
        };
        for (g, prediction) in placed {
            if spec.mode == PerturbMode::NonInteracting {
                pool.retain(|&x| x != g);
            }
            if kind != ErrorKind::Dup {
                replaced.insert(g);
            }
            planned.push(Planned {
                gt: Some(g),
                video: d.gt_tracks[g].video_id,
                role: Role::Injected(kind),
                prediction,
            });
        }
    }

    for g in 0..d.gt_tracks.len() {
        if d.gt_tracks[g].iscrowd || replaced.contains(&g) {
            continue;
        }
        let t = &d.gt_tracks[g];
        planned.push(Planned {
            gt: Some(g),
            video: t.video_id,
            role: Role::Tp,
            prediction: Some(TrackPrediction {
                video_id: t.video_id,
                category_id: t.category_id,
                score: 0.0,
                masks: t.masks.clone(),
            }),
        });
    }

    // background blobs, spread over videos round-robin
    let n_bkg = spec.count(ErrorKind::Bkg);
    if n_bkg > 0 {
        let mut videos: Vec<&VideoClip> = d.videos.values().collect();
        videos.shuffle(&mut rng);
        let mut per_video: Vec<usize> = vec![0; videos.len()];
        for i in 0..n_bkg {
            per_video[i % videos.len()] += 1;
        }
        let seed = spec.seed;
        let blobs: Vec<Vec<Vec<Option<RleMask>>>> = videos
            .par_iter()
            .zip(per_video.par_iter())
            .map(|(v, &n)| {
                if n == 0 {
                    return Vec::new();
                }
                let occupied = occupancy(d, v);
                let mut local = ChaCha8Rng::seed_from_u64(seed);
                local.set_stream(v.id.0.wrapping_add(1));
                (0..n)
                    .filter_map(|_| realize_bkg(v, &occupied, spec, &mut local))
                    .collect()
            })
            .collect();
        let placed: usize = blobs.iter().map(Vec::len).sum();
        if placed < n_bkg {
            return Err(SynthError::Unrealizable {
                kind: ErrorKind::Bkg,
                requested: n_bkg,
                placed,
                reason: "no free area left in the videos".into(),
            });
        }
        for (v, masks) in videos.iter().zip(blobs) {
            for m in masks {
                planned.push(Planned {
                    gt: None,
                    video: v.id,
                    role: Role::Injected(ErrorKind::Bkg),
                    prediction: Some(TrackPrediction {
                        video_id: v.id,
                        category_id: *d.categories.keys().next().unwrap(),
                        score: 0.0,
                        masks: m,
                    }),
                });
            }
        }
    }

    // stable output order: by video, target track, then copies before injections
    planned.sort_by_key(|p| (p.video, p.gt.is_none(), p.gt, p.role));

    let mut predictions = Vec::new();
    let mut injections = Vec::new();
    let mut tp_score: BTreeMap<usize, f64> = BTreeMap::new();
    for p in planned {
        let index = p.prediction.as_ref().map(|_| predictions.len());
        if let Some(mut pred) = p.prediction {
            pred.score = match p.role {
                Role::Tp => {
                    let s = draw(&mut rng, spec.tp_score);
                    tp_score.insert(p.gt.unwrap(), s);
                    s
                }
                Role::Injected(ErrorKind::Dup) => {
                    let ceiling = tp_score.get(&p.gt.unwrap()).copied().unwrap_or(1.0);
                    let [lo, hi] = spec.fp_score;
                    if ceiling > lo {
                        draw(&mut rng, [lo, hi.min(ceiling)]).min(ceiling * (1.0 - 1e-9))
                    } else {
                        ceiling * 0.5
                    }
                }
                Role::Injected(_) => draw(&mut rng, spec.fp_score),
            };
            predictions.push(pred);
        }
        if let Role::Injected(kind) = p.role {
            injections.push(Injection {
                kind,
                video_id: p.video,
                gt_id: p.gt.map(|g| d.gt_tracks[g].id),
                prediction: index,
            });
        }
    }

    let mut injected: BTreeMap<ErrorKind, usize> = ErrorKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut expected = injected.clone();
    for inj in &injections {
        *injected.get_mut(&inj.kind).unwrap() += 1;
        *expected.get_mut(&inj.kind).unwrap() += 1;
        if inj.kind == ErrorKind::Both {
            *expected.get_mut(&ErrorKind::Miss).unwrap() += 1;
        }
    }
    Ok((
        predictions,
        Census {
            seed: spec.seed,
            mode: spec.mode,
            injected,
            expected,
            injections,
        },
    ))
}

// ---- synthetic ground truth ----

#[derive(Debug, Clone, PartialEq)]
pub struct VideoLayout {
    pub length: usize,
    pub height: u32,
    pub width: u32,
    /// Visible-frame count of each track.
    pub tracks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_categories: u64,
    pub videos: Vec<VideoLayout>,
}

impl SceneSpec {
    /// `n_videos` videos with `tracks_per_video` tracks of random visible length each.
    pub fn uniform(
        seed: u64,
        n_videos: usize,
        tracks_per_video: std::ops::RangeInclusive<usize>,
        frames: usize,
        height: u32,
        width: u32,
        n_categories: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let videos = (0..n_videos)
            .map(|_| {
                let k = rng.gen_range(tracks_per_video.clone());
                VideoLayout {
                    length: frames,
                    height,
                    width,
                    tracks: (0..k).map(|_| rng.gen_range(2..=frames)).collect(),
                }
            })
            .collect();
        SceneSpec {
            seed,
            n_categories,
            videos,
        }
    }

    /// 214 videos and 479 tracks: 61 shorter than 16 frames, 237 of 16 to 31 frames and 181
    /// of at least 32 frames.
    pub fn range_fixture(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lengths: Vec<usize> = Vec::new();
        lengths.extend((0..61).map(|_| rng.gen_range(2..16)));
        lengths.extend((0..237).map(|_| rng.gen_range(16..32)));
        lengths.extend((0..181).map(|_| rng.gen_range(32..=36)));
        lengths.shuffle(&mut rng);
        // 214 videos: 51 with three tracks, 163 with two
        let mut videos = Vec::new();
        let mut it = lengths.into_iter();
        for v in 0..214 {
            let k = if v < 51 { 3 } else { 2 };
            videos.push(VideoLayout {
                length: 36,
                height: 48,
                width: 64,
                tracks: (0..k).map(|_| it.next().unwrap()).collect(),
            });
        }
        SceneSpec {
            seed,
            n_categories: 4,
            videos,
        }
    }
}

/// Ground truth for `spec`: each track lives in its own column strip, in the upper three
/// quarters of the frame, so tracks never overlap and the bottom band stays free.
pub fn synthetic_ground_truth(spec: &SceneSpec) -> Dataset {
    let categories: BTreeMap<CategoryId, String> = (1..=spec.n_categories)
        .map(|c| (CategoryId(c), format!("class_{c}")))
        .collect();
    let videos: BTreeMap<VideoId, VideoClip> = spec
        .videos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let id = VideoId(i as u64 + 1);
            (
                id,
                VideoClip {
                    id,
                    length: v.length,
                    height: v.height,
                    width: v.width,
                    frame_names: Vec::new(),
                },
            )
        })
        .collect();
    let per_video: Vec<Vec<InstanceTrack>> = spec
        .videos
        .par_iter()
        .enumerate()
        .map(|(i, layout)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let k = layout.tracks.len().max(1) as u32;
            let strip = layout.width / k;
            layout
                .tracks
                .iter()
                .enumerate()
                .map(|(j, &len)| {
                    let len = len.clamp(1, layout.length);
                    let first = rng.gen_range(0..=layout.length - len);
                    let shape = Shape::random(&mut rng, j as u32 * strip, strip, layout.height);
                    let masks = (0..layout.length)
                        .map(|t| {
                            (first..first + len)
                                .contains(&t)
                                .then(|| shape.render(t - first, layout.height, layout.width))
                        })
                        .collect();
                    InstanceTrack {
                        id: TrackId(0),
                        video_id: VideoId(i as u64 + 1),
                        category_id: CategoryId(rng.gen_range(1..=spec.n_categories)),
                        iscrowd: false,
                        masks,
                    }
                })
                .collect()
        })
        .collect();
    let mut gt_tracks: Vec<InstanceTrack> = per_video.into_iter().flatten().collect();
    for (i, t) in gt_tracks.iter_mut().enumerate() {
        t.id = TrackId(i as u64 + 1);
    }
    Dataset {
        videos,
        categories,
        gt_tracks,
        predictions: Vec::new(),
    }
}

/// Ellipse or rectangle drifting slowly downwards inside its strip.
struct Shape {
    ellipse: bool,
    col0: u32,
    cols: u32,
    row0: f64,
    rows: u32,
    drift: f64,
    band: u32,
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, strip0: u32, strip: u32, height: u32) -> Self {
        let band = (height * 3 / 4).max(1);
        let margin = (strip / 8).max(1);
        let max_cols = strip.saturating_sub(2 * margin).max(1);
        let cols = rng.gen_range((max_cols / 2).max(1)..=max_cols);
        let col0 = strip0 + margin + rng.gen_range(0..=max_cols - cols);
        let rows = rng.gen_range((band / 3).max(1)..=(band * 2 / 3).max(1));
        let row0 = rng.gen_range(0..=band - rows) as f64;
        Shape {
            ellipse: rng.gen_bool(0.5),
            col0,
            cols,
            row0,
            rows,
            drift: rng.gen_range(-0.5..0.5),
            band,
        }
    }

    fn render(&self, t: usize, height: u32, width: u32) -> RleMask {
        let max_top = (self.band - self.rows) as f64;
        let top = (self.row0 + self.drift * t as f64)
            .clamp(0.0, max_top)
            .round() as u64;
        let (a, b) = (self.cols as f64 / 2.0, self.rows as f64 / 2.0);
        let intervals = (0..self.cols).filter_map(|x| {
            let (start, len) = if self.ellipse {
                let dx = (x as f64 + 0.5 - a) / a;
                let half = b * (1.0 - dx * dx).max(0.0).sqrt();
                let s = (b - half).round() as u64;
                let e = (b + half).round() as u64;
                (s, e.saturating_sub(s))
            } else {
                (0, self.rows as u64)
            };
            (len > 0).then(|| {
                let base = (self.col0 + x) as u64 * height as u64 + top + start;
                (base, base + len)
            })
        });
        RleMask::from_intervals(height, width, intervals).unwrap()
    }
}
