//! Independent reference implementations and fixture builders shared by the integration
//! tests. Nothing here calls into the code under test except to construct input values.

#![allow(dead_code)]

use std::collections::BTreeMap;

use visdiag::dataset::{CategoryId, Dataset, InstanceTrack, TrackId, TrackPrediction, VideoClip, VideoId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use visdiag::rle::{Bitmask, RleMask};

// ---- per-pixel mask oracle ----

/// Pixels in column-major order, straight from the run lengths.
pub fn pixels_of(counts: &[u32], n: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(n);
    let mut value = false;
    for &c in counts {
        for _ in 0..c {
            out.push(value);
        }
        value = !value;
    }
    assert_eq!(out.len(), n);
    out
}

pub fn pixel_and(a: &[bool], b: &[bool]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u64
}

pub fn pixel_or(a: &[bool], b: &[bool]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| **x || **y).count() as u64
}

pub fn mask_from_pixels(h: u32, w: u32, px: &[bool]) -> RleMask {
    RleMask::encode(&Bitmask::from_pixels(h, w, px.to_vec()).unwrap())
}

/// Stacked-volume IoU: every pixel of every frame, with absent frames as all-background.
pub fn volume_iou(a: &[Option<RleMask>], b: &[Option<RleMask>], h: u32, w: u32) -> f64 {
    let n = (h * w) as usize;
    let expand = |m: &Option<RleMask>| match m {
        Some(m) => pixels_of(m.counts(), n),
        None => vec![false; n],
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (expand(x), expand(y));
        inter += pixel_and(&x, &y);
        union += pixel_or(&x, &y);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// ---- AP oracle ----

/// Interpolated AP by definition: at each recall level, the best precision reached at any
/// cut-off with at least that recall. Detections are `(score, is_tp)`, already excluding
/// ignored ones.
pub fn brute_force_ap(dets: &[(f64, bool)], n_gt: usize) -> f64 {
    let mut sorted: Vec<(usize, f64, bool)> =
        dets.iter().enumerate().map(|(i, &(s, t))| (i, s, t)).collect();
    // stable: equal scores keep input order
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut cuts = Vec::new();
    let mut tp = 0;
    for (k, &(_, _, is_tp)) in sorted.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        cuts.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = if i == 100 { 1.0 } else { i as f64 * 0.01 };
        let best = cuts
            .iter()
            .filter(|(rc, _)| *rc >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0 * 100.0
}

/// Greedy assignment written as a direct simulation: highest score first (input order on
/// ties), each taking the free ground truth of largest IoU if it reaches the threshold. Equal
/// IoUs go to the later ground truth, as in the COCO reference evaluator.
pub fn greedy_simulator(scores: &[f64], ious: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let n_gt = ious.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && scores[order[j]] > scores[order[j - 1]] {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let mut free = vec![true; n_gt];
    let mut out = vec![None; scores.len()];
    for d in order {
        let mut pick: Option<usize> = None;
        for g in 0..n_gt {
            if free[g] && ious[d][g] >= threshold && pick.map_or(true, |p| ious[d][g] >= ious[d][p]) {
                pick = Some(g);
            }
        }
        if let Some(g) = pick {
            free[g] = false;
            out[d] = Some(g);
        }
    }
    out
}

/// Full-sweep AP@`threshold` for a crowd-free dataset, from scratch: IoUs by stacked volume,
/// greedy simulation per (video, category), brute-force AP per category.
pub fn oracle_ap(d: &Dataset, threshold: f64) -> Option<f64> {
    let mut per_cat = Vec::new();
    for &c in d.categories.keys() {
        let n_gt = d.gt_tracks.iter().filter(|g| g.category_id == c).count();
        if n_gt == 0 {
            continue;
        }
        let mut dets = Vec::new();
        for v in d.videos.values() {
            let gts: Vec<&InstanceTrack> = d
                .gt_tracks
                .iter()
                .filter(|g| g.video_id == v.id && g.category_id == c)
                .collect();
            let preds: Vec<&TrackPrediction> = d
                .predictions
                .iter()
                .filter(|p| p.video_id == v.id && p.category_id == c)
                .collect();
            let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
            let ious: Vec<Vec<f64>> = preds
                .iter()
                .map(|p| {
                    gts.iter()
                        .map(|g| volume_iou(&g.masks, &p.masks, v.height, v.width))
                        .collect()
                })
                .collect();
            let m = greedy_simulator(&scores, &ious, threshold);
            dets.extend(scores.iter().zip(m).map(|(&s, m)| (s, m.is_some())));
        }
        per_cat.push(brute_force_ap(&dets, n_gt));
    }
    (!per_cat.is_empty()).then(|| per_cat.iter().sum::<f64>() / per_cat.len() as f64)
}

// ---- fixture builders ----

pub fn rect(h: u32, w: u32, rows: (u32, u32), cols: (u32, u32)) -> RleMask {
    RleMask::from_intervals(
        h,
        w,
        (cols.0..cols.1).map(|c| {
            let base = (c * h) as u64;
            (base + rows.0 as u64, base + rows.1 as u64)
        }),
    )
    .unwrap()
}

/// First `k` pixels in column-major order.
pub fn prefix(h: u32, w: u32, k: u64) -> RleMask {
    RleMask::from_intervals(h, w, [(0, k)]).unwrap()
}

/// `mask` on the frames in `frames`, empty elsewhere.
pub fn track(len: usize, frames: std::ops::Range<usize>, mask: &RleMask) -> Vec<Option<RleMask>> {
    (0..len).map(|t| frames.contains(&t).then(|| mask.clone())).collect()
}

pub struct Builder {
    pub d: Dataset,
}

impl Builder {
    pub fn new(n_categories: u64) -> Self {
        Builder {
            d: Dataset {
                videos: BTreeMap::new(),
                categories: (1..=n_categories)
                    .map(|c| (CategoryId(c), format!("c{c}")))
                    .collect(),
                gt_tracks: Vec::new(),
                predictions: Vec::new(),
            },
        }
    }

    pub fn video(&mut self, length: usize, height: u32, width: u32) -> VideoId {
        let id = VideoId(self.d.videos.len() as u64 + 1);
        self.d.videos.insert(
            id,
            VideoClip {
                id,
                length,
                height,
                width,
                frame_names: Vec::new(),
            },
        );
        id
    }

    pub fn gt(&mut self, video: VideoId, category: u64, masks: Vec<Option<RleMask>>) -> usize {
        self.d.gt_tracks.push(InstanceTrack {
            id: TrackId(self.d.gt_tracks.len() as u64 + 1),
            video_id: video,
            category_id: CategoryId(category),
            iscrowd: false,
            masks,
        });
        self.d.gt_tracks.len() - 1
    }

    pub fn crowd(&mut self, video: VideoId, category: u64, masks: Vec<Option<RleMask>>) -> usize {
        let g = self.gt(video, category, masks);
        self.d.gt_tracks[g].iscrowd = true;
        g
    }

    pub fn pred(
        &mut self,
        video: VideoId,
        category: u64,
        score: f64,
        masks: Vec<Option<RleMask>>,
    ) -> usize {
        self.d.predictions.push(TrackPrediction {
            video_id: video,
            category_id: CategoryId(category),
            score,
            masks,
        });
        self.d.predictions.len() - 1
    }

    pub fn build(self) -> Dataset {
        self.d
    }
}

/// Ground truth replayed as predictions with score 1.
pub fn replay(d: &Dataset) -> Dataset {
    d.with_predictions(
        d.gt_tracks
            .iter()
            .map(|g| TrackPrediction {
                video_id: g.video_id,
                category_id: g.category_id,
                score: 1.0,
                masks: g.masks.clone(),
            })
            .collect(),
    )
}

/// Twenty hand-built ranked lists `(dets, n_gt)` covering ties, leading false positives,
/// partial recall and recall levels that land exactly on the 101-point grid.
pub fn pr_fixtures() -> Vec<(Vec<(f64, bool)>, usize)> {
    let seq = |pattern: &str| -> Vec<(f64, bool)> {
        let n = pattern.len() as f64;
        pattern
            .chars()
            .enumerate()
            .map(|(i, c)| (1.0 - i as f64 / (n + 1.0), c == 'T'))
            .collect()
    };
    vec![
        (seq("FT"), 1),
        (seq("T"), 1),
        (seq(""), 1),
        (seq("F"), 1),
        (seq("TF"), 1),
        (seq("TT"), 2),
        (seq("T"), 2),
        (seq("FTT"), 2),
        (seq("TFT"), 2),
        (vec![(0.5, false), (0.5, true)], 1),
        (vec![(0.5, true), (0.5, false)], 1),
        (seq("TFTFTF"), 3),
        (seq("FTFTTFFTFT"), 7),
        (seq("FFF"), 3),
        (seq("TFFTFFT"), 3),
        (seq(&"T".repeat(7)), 100),
        (seq(&"TF".repeat(29)), 100),
        (seq("FFFFFFFFFTTT"), 3),
        (seq("TFFFFTTTTT"), 6),
        (
            (0..50)
                .map(|i| ((50 - i) as f64 / 50.0, (i * 7 + 3) % 5 < 2))
                .collect(),
            25,
        ),
    ]
}

/// Three videos, two categories; ground truth are random rectangles and predictions are
/// shifted copies, relabelled copies and noise, all with distinct scores.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let (h, w, len) = (8, 8, 5);
    let mut b = Builder::new(2);
    let mut score_pool: Vec<f64> = (1..=60).map(|i| i as f64 / 61.0).collect();
    let mut next_score = |rng: &mut ChaCha8Rng| score_pool.swap_remove(rng.gen_range(0..score_pool.len()));
    let random_rect = |rng: &mut ChaCha8Rng| {
        let (r0, c0) = (rng.gen_range(0..6), rng.gen_range(0..6));
        rect(h, w, (r0, rng.gen_range(r0 + 1..=h)), (c0, rng.gen_range(c0 + 1..=w)))
    };
    for _ in 0..3 {
        let v = b.video(len, h, w);
        for _ in 0..rng.gen_range(1..4) {
            let cat = rng.gen_range(1..=2);
            let m = random_rect(rng);
            let (s, e) = (rng.gen_range(0..3), rng.gen_range(3..=len));
            b.gt(v, cat, track(len, s..e, &m));
            for _ in 0..rng.gen_range(0..3) {
                let pc = if rng.gen_bool(0.8) { cat } else { 3 - cat };
                let pm = if rng.gen_bool(0.5) { m.clone() } else { random_rect(rng) };
                let (ps, pe) = (rng.gen_range(0..3), rng.gen_range(3..=len));
                let score = next_score(rng);
                b.pred(v, pc, score, track(len, ps..pe, &pm));
            }
        }
        for _ in 0..rng.gen_range(0..2) {
            let m = random_rect(rng);
            let score = next_score(rng);
            b.pred(v, rng.gen_range(1..=2), score, track(len, 0..len, &m));
        }
    }
    b.build()
}
