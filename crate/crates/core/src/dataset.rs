//! Ground-truth and prediction files.
//!
//! Both files use the YouTube-VIS layout. Every per-frame segmentation is either an RLE
//! object (`{"size": [h, w], "counts": ...}` with compressed-string or list counts) or
//! `null`. After loading, every track holds exactly one slot per video frame; `null` and
//! missing trailing frames become empty slots.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TemporalLengthMode;
use crate::rle::{RleError, RleMask};

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(VideoId);
id_type!(CategoryId);
id_type!(TrackId);

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON for this schema: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("video {video}: {reason}")]
    Video { video: String, reason: String },
    #[error("annotation {annotation}: {reason}")]
    Annotation { annotation: String, reason: String },
    #[error("{track}, frame {frame}: {source}")]
    Mask {
        track: String,
        frame: usize,
        source: RleError,
    },
    #[error("ground-truth track {0} has no visible frame")]
    EmptyGroundTruth(TrackId),
    #[error("duplicate ground-truth track id {0}")]
    DuplicateTrack(TrackId),
    #[error("predictions reference unknown videos: {}", .entries.join(", "))]
    UnknownVideo { entries: Vec<String> },
    #[error("entries reference unknown categories: {}", .entries.join(", "))]
    UnknownCategory { entries: Vec<String> },
    #[error("prediction {index}: score {score} outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    pub id: VideoId,
    pub length: usize,
    pub height: u32,
    pub width: u32,
    pub frame_names: Vec<String>,
}

/// Shared view of a padded per-frame mask sequence.
pub trait MaskSequence {
    fn masks(&self) -> &[Option<RleMask>];

    fn is_visible(&self, frame: usize) -> bool {
        matches!(self.masks().get(frame), Some(Some(m)) if !m.is_empty())
    }

    /// First and last frame with a non-empty mask.
    fn temporal_extent(&self) -> Option<(usize, usize)> {
        let first = (0..self.masks().len()).find(|&t| self.is_visible(t))?;
        let last = (0..self.masks().len())
            .rev()
            .find(|&t| self.is_visible(t))?;
        Some((first, last))
    }

    fn visible_frames(&self) -> usize {
        (0..self.masks().len())
            .filter(|&t| self.is_visible(t))
            .count()
    }

    fn temporal_length(&self, mode: TemporalLengthMode) -> usize {
        match mode {
            TemporalLengthMode::Visible => self.visible_frames(),
            TemporalLengthMode::Extent => self
                .temporal_extent()
                .map_or(0, |(first, last)| last - first + 1),
        }
    }
}

impl MaskSequence for [Option<RleMask>] {
    fn masks(&self) -> &[Option<RleMask>] {
        self
    }
}

impl MaskSequence for Vec<Option<RleMask>> {
    fn masks(&self) -> &[Option<RleMask>] {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTrack {
    pub id: TrackId,
    pub video_id: VideoId,
    pub category_id: CategoryId,
    pub iscrowd: bool,
    pub masks: Vec<Option<RleMask>>,
}

impl MaskSequence for InstanceTrack {
    fn masks(&self) -> &[Option<RleMask>] {
        &self.masks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPrediction {
    pub video_id: VideoId,
    pub category_id: CategoryId,
    pub score: f64,
    pub masks: Vec<Option<RleMask>>,
}

impl MaskSequence for TrackPrediction {
    fn masks(&self) -> &[Option<RleMask>] {
        &self.masks
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub videos: BTreeMap<VideoId, VideoClip>,
    pub categories: BTreeMap<CategoryId, String>,
    pub gt_tracks: Vec<InstanceTrack>,
    pub predictions: Vec<TrackPrediction>,
}

impl Dataset {
    pub fn load(gt_path: &Path, pred_path: &Path) -> Result<Self, DatasetError> {
        let (videos, categories, gt_tracks) = load_ground_truth(gt_path)?;
        let predictions = load_predictions(pred_path, &videos, &categories)?;
        Ok(Dataset {
            videos,
            categories,
            gt_tracks,
            predictions,
        })
    }

    /// The same dataset with the predictions swapped out.
    pub fn with_predictions(&self, predictions: Vec<TrackPrediction>) -> Dataset {
        Dataset {
            videos: self.videos.clone(),
            categories: self.categories.clone(),
            gt_tracks: self.gt_tracks.clone(),
            predictions,
        }
    }
}

// ---- file schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Compressed(String),
    Raw(Vec<u32>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RleJson {
    pub size: [u32; 2],
    pub counts: RleCounts,
}

impl RleJson {
    pub fn to_mask(&self) -> Result<RleMask, RleError> {
        let [h, w] = self.size;
        match &self.counts {
            RleCounts::Compressed(s) => RleMask::from_compressed(h, w, s),
            RleCounts::Raw(c) => RleMask::new(h, w, c.clone()),
        }
    }

    pub fn from_mask(mask: &RleMask) -> Self {
        RleJson {
            size: [mask.height(), mask.width()],
            counts: RleCounts::Compressed(mask.to_compressed()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VideoJson {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<usize>,
    #[serde(default)]
    file_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryJson {
    id: u64,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationJson {
    id: u64,
    video_id: u64,
    category_id: u64,
    segmentations: Vec<Option<RleJson>>,
    #[serde(default, deserialize_with = "flag_from_int_or_bool")]
    iscrowd: bool,
}

#[derive(Debug, Deserialize)]
struct GroundTruthJson {
    videos: Vec<VideoJson>,
    annotations: Vec<serde_json::Value>,
    categories: Vec<CategoryJson>,
}

#[derive(Serialize)]
struct GroundTruthOut {
    videos: Vec<VideoJson>,
    annotations: Vec<AnnotationJson>,
    categories: Vec<CategoryJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionJson {
    pub video_id: u64,
    pub category_id: u64,
    pub score: f64,
    pub segmentations: Vec<Option<RleJson>>,
}

fn flag_from_int_or_bool<'de, D>(d: D) -> Result<bool, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        B(bool),
        I(i64),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::B(b) => b,
        Flag::I(i) => i != 0,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn convert_masks(
    segs: &[Option<RleJson>],
    length: usize,
    track: &dyn Fn() -> String,
) -> Result<Vec<Option<RleMask>>, DatasetError> {
    if segs.len() > length {
        return Err(DatasetError::Annotation {
            annotation: track(),
            reason: format!("{} segmentations for a {length}-frame video", segs.len()),
        });
    }
    let mut masks = Vec::with_capacity(length);
    for (frame, seg) in segs.iter().enumerate() {
        let mask = match seg {
            Some(rle) => Some(rle.to_mask().map_err(|source| DatasetError::Mask {
                track: track(),
                frame,
                source,
            })?),
            None => None,
        };
        masks.push(mask);
    }
    masks.resize(length, None);
    Ok(masks)
}

pub type GroundTruth = (
    BTreeMap<VideoId, VideoClip>,
    BTreeMap<CategoryId, String>,
    Vec<InstanceTrack>,
);

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, DatasetError> {
    let file: GroundTruthJson = read_json(path)?;

    let mut videos = BTreeMap::new();
    for v in file.videos {
        let length = v.length.unwrap_or(v.file_names.len());
        let video = v.id.to_string();
        if length == 0 {
            return Err(DatasetError::Video {
                video,
                reason: "has no frames (missing length and file_names)".into(),
            });
        }
        if v.height == 0 || v.width == 0 {
            return Err(DatasetError::Video {
                video,
                reason: format!("invalid size {}x{}", v.height, v.width),
            });
        }
        let clip = VideoClip {
            id: VideoId(v.id),
            length,
            height: v.height,
            width: v.width,
            frame_names: v.file_names,
        };
        if videos.insert(clip.id, clip).is_some() {
            return Err(DatasetError::Video {
                video,
                reason: "duplicate video id".into(),
            });
        }
    }

    let categories: BTreeMap<CategoryId, String> = file
        .categories
        .into_iter()
        .map(|c| (CategoryId(c.id), c.name))
        .collect();

    let mut gt_tracks = Vec::with_capacity(file.annotations.len());
    let mut seen = HashSet::new();
    let mut bad_categories = Vec::new();
    for (index, value) in file.annotations.into_iter().enumerate() {
        let label = value
            .get("id")
            .map(|id| id.to_string())
            .unwrap_or_else(|| format!("#{index}"));
        let ann: AnnotationJson =
            serde_json::from_value(value).map_err(|e| DatasetError::Annotation {
                annotation: label.clone(),
                reason: e.to_string(),
            })?;
        let id = TrackId(ann.id);
        let Some(video) = videos.get(&VideoId(ann.video_id)) else {
            return Err(DatasetError::Annotation {
                annotation: label,
                reason: format!("unknown video_id {}", ann.video_id),
            });
        };
        if !categories.contains_key(&CategoryId(ann.category_id)) {
            bad_categories.push(format!("annotation {label} (category {})", ann.category_id));
            continue;
        }
        let masks = convert_masks(&ann.segmentations, video.length, &|| {
            format!("annotation {}", ann.id)
        })?;
        if !seen.insert(id) {
            return Err(DatasetError::DuplicateTrack(id));
        }
        let track = InstanceTrack {
            id,
            video_id: video.id,
            category_id: CategoryId(ann.category_id),
            iscrowd: ann.iscrowd,
            masks,
        };
        if track.visible_frames() == 0 {
            return Err(DatasetError::EmptyGroundTruth(id));
        }
        gt_tracks.push(track);
    }
    if !bad_categories.is_empty() {
        return Err(DatasetError::UnknownCategory {
            entries: bad_categories,
        });
    }
    Ok((videos, categories, gt_tracks))
}

pub fn load_predictions(
    path: &Path,
    videos: &BTreeMap<VideoId, VideoClip>,
    categories: &BTreeMap<CategoryId, String>,
) -> Result<Vec<TrackPrediction>, DatasetError> {
    let entries: Vec<PredictionJson> = read_json(path)?;
    predictions_from_json(entries, videos, categories)
}

pub fn predictions_from_json(
    entries: Vec<PredictionJson>,
    videos: &BTreeMap<VideoId, VideoClip>,
    categories: &BTreeMap<CategoryId, String>,
) -> Result<Vec<TrackPrediction>, DatasetError> {
    let unknown_videos: Vec<String> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !videos.contains_key(&VideoId(e.video_id)))
        .map(|(i, e)| format!("prediction {i} (video {})", e.video_id))
        .collect();
    if !unknown_videos.is_empty() {
        return Err(DatasetError::UnknownVideo {
            entries: unknown_videos,
        });
    }
    let unknown_categories: Vec<String> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !categories.contains_key(&CategoryId(e.category_id)))
        .map(|(i, e)| format!("prediction {i} (category {})", e.category_id))
        .collect();
    if !unknown_categories.is_empty() {
        return Err(DatasetError::UnknownCategory {
            entries: unknown_categories,
        });
    }

    let mut out = Vec::with_capacity(entries.len());
    for (index, e) in entries.into_iter().enumerate() {
        if !e.score.is_finite() || !(0.0..=1.0).contains(&e.score) {
            return Err(DatasetError::ScoreOutOfRange {
                index,
                score: e.score,
            });
        }
        let video = &videos[&VideoId(e.video_id)];
        let masks = convert_masks(&e.segmentations, video.length, &|| {
            format!("prediction {index}")
        })?;
        out.push(TrackPrediction {
            video_id: video.id,
            category_id: CategoryId(e.category_id),
            score: e.score,
            masks,
        });
    }
    Ok(out)
}

fn masks_to_json(masks: &[Option<RleMask>]) -> Vec<Option<RleJson>> {
    masks
        .iter()
        .map(|m| m.as_ref().map(RleJson::from_mask))
        .collect()
}

pub fn ground_truth_to_json(dataset: &Dataset) -> String {
    let out = GroundTruthOut {
        videos: dataset
            .videos
            .values()
            .map(|v| VideoJson {
                id: v.id.0,
                width: v.width,
                height: v.height,
                length: Some(v.length),
                file_names: v.frame_names.clone(),
            })
            .collect(),
        annotations: dataset
            .gt_tracks
            .iter()
            .map(|t| AnnotationJson {
                id: t.id.0,
                video_id: t.video_id.0,
                category_id: t.category_id.0,
                segmentations: masks_to_json(&t.masks),
                iscrowd: t.iscrowd,
            })
            .collect(),
        categories: dataset
            .categories
            .iter()
            .map(|(id, name)| CategoryJson {
                id: id.0,
                name: name.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&out).expect("ground truth serializes")
}

pub fn predictions_to_json(predictions: &[TrackPrediction]) -> String {
    let out: Vec<PredictionJson> = predictions
        .iter()
        .map(|p| PredictionJson {
            video_id: p.video_id.0,
            category_id: p.category_id.0,
            score: p.score,
            segmentations: masks_to_json(&p.masks),
        })
        .collect();
    serde_json::to_string(&out).expect("predictions serialize")
}

pub fn write_ground_truth(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, ground_truth_to_json(dataset)).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_predictions(predictions: &[TrackPrediction], path: &Path) -> Result<(), DatasetError> {
    fs::write(path, predictions_to_json(predictions)).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---- validation ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, subject: String, message: impl Into<String>) {
        self.errors.push(Issue {
            subject,
            message: message.into(),
        });
    }

    fn warn(&mut self, subject: String, message: impl Into<String>) {
        self.warnings.push(Issue {
            subject,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.errors {
            writeln!(f, "error: {}: {}", i.subject, i.message)?;
        }
        for i in &self.warnings {
            writeln!(f, "warning: {}: {}", i.subject, i.message)?;
        }
        Ok(())
    }
}

fn check_masks(
    report: &mut ValidationReport,
    subject: String,
    masks: &[Option<RleMask>],
    video: &VideoClip,
) {
    if masks.len() != video.length {
        report.error(
            subject.clone(),
            format!(
                "{} mask slots for a {}-frame video",
                masks.len(),
                video.length
            ),
        );
    }
    let mismatch = masks.iter().enumerate().find_map(|(t, m)| {
        m.as_ref()
            .filter(|m| m.height() != video.height || m.width() != video.width)
            .map(|m| (t, m))
    });
    if let Some((frame, m)) = mismatch {
        report.error(
            subject.clone(),
            format!(
                "frame {frame} mask is {}x{}, video is {}x{}",
                m.height(),
                m.width(),
                video.height,
                video.width
            ),
        );
    }
    for (frame, m) in masks.iter().enumerate() {
        if let Some(m) = m {
            if m.is_empty() {
                report.warn(
                    subject.clone(),
                    format!("frame {frame} has a zero-area mask"),
                );
            }
        }
    }
}

/// Collects every structural problem in a loaded dataset without stopping at the first.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for t in &dataset.gt_tracks {
        let subject = format!("ground truth {}", t.id);
        if !seen.insert(t.id) {
            report.error(subject.clone(), "duplicate track id");
        }
        if !dataset.categories.contains_key(&t.category_id) {
            report.error(
                subject.clone(),
                format!("unknown category {}", t.category_id),
            );
        }
        match dataset.videos.get(&t.video_id) {
            Some(video) => check_masks(&mut report, subject.clone(), &t.masks, video),
            None => report.error(subject.clone(), format!("unknown video {}", t.video_id)),
        }
        if t.visible_frames() == 0 {
            report.error(subject, "no visible frame");
        }
    }

    let mut fingerprints: HashMap<(VideoId, CategoryId, u64, &[Option<RleMask>]), usize> =
        HashMap::new();
    for (i, p) in dataset.predictions.iter().enumerate() {
        let subject = format!("prediction {i}");
        if !(0.0..=1.0).contains(&p.score) {
            report.error(subject.clone(), format!("score {} outside [0, 1]", p.score));
        }
        if !dataset.categories.contains_key(&p.category_id) {
            report.error(
                subject.clone(),
                format!("unknown category {}", p.category_id),
            );
        }
        match dataset.videos.get(&p.video_id) {
            Some(video) => check_masks(&mut report, subject.clone(), &p.masks, video),
            None => report.error(subject.clone(), format!("unknown video {}", p.video_id)),
        }
        let key = (
            p.video_id,
            p.category_id,
            p.score.to_bits(),
            p.masks.as_slice(),
        );
        if let Some(first) = fingerprints.insert(key, i) {
            report.warn(subject, format!("duplicate of prediction {first}"));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const GT: &str = r#"{
        "videos": [{"id": 1, "width": 2, "height": 2, "length": 10, "file_names": []}],
        "categories": [{"id": 1, "name": "person"}, {"id": 2, "name": "dog"}],
        "annotations": [
            {"id": 7, "video_id": 1, "category_id": 1, "iscrowd": 0,
             "segmentations": [null, null, null,
                {"size": [2, 2], "counts": [1, 2, 1]},
                {"size": [2, 2], "counts": "112"},
                {"size": [2, 2], "counts": [0, 4]},
                null, null, null, null]}
        ]
    }"#;

    #[test]
    fn ground_truth_is_padded_to_video_length() {
        let f = write_tmp(GT);
        let (videos, cats, tracks) = load_ground_truth(f.path()).unwrap();
        assert_eq!(videos.len(), 1);
        assert_eq!(cats.len(), 2);
        let t = &tracks[0];
        assert_eq!(t.masks.len(), 10);
        assert_eq!(t.masks.iter().filter(|m| m.is_none()).count(), 7);
        assert_eq!(t.temporal_extent(), Some((3, 5)));
        assert_eq!(t.temporal_length(TemporalLengthMode::Visible), 3);
        assert_eq!(t.masks[4].as_ref().unwrap().counts(), &[1, 1, 2]);
    }

    #[test]
    fn short_segmentation_lists_are_padded() {
        let gt = GT.replace(", null, null, null, null]", "]");
        let f = write_tmp(&gt);
        let (_, _, tracks) = load_ground_truth(f.path()).unwrap();
        assert_eq!(tracks[0].masks.len(), 10);
    }

    #[test]
    fn all_null_ground_truth_is_rejected() {
        let gt = r#"{"videos": [{"id": 1, "width": 2, "height": 2, "length": 2}],
            "categories": [{"id": 1, "name": "a"}],
            "annotations": [{"id": 3, "video_id": 1, "category_id": 1, "segmentations": [null, null]}]}"#;
        let f = write_tmp(gt);
        assert!(matches!(
            load_ground_truth(f.path()),
            Err(DatasetError::EmptyGroundTruth(TrackId(3)))
        ));
    }

    #[test]
    fn bad_rle_names_the_annotation() {
        let gt = GT.replace("[1, 2, 1]", "[1, 2, 2]");
        let f = write_tmp(&gt);
        let err = load_ground_truth(f.path()).unwrap_err();
        match err {
            DatasetError::Mask { track, frame, .. } => {
                assert_eq!(track, "annotation 7");
                assert_eq!(frame, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_names_the_annotation() {
        let gt = GT.replace(r#""category_id": 1, "iscrowd""#, r#""iscrowd""#);
        let f = write_tmp(&gt);
        let err = load_ground_truth(f.path()).unwrap_err();
        assert!(
            matches!(&err, DatasetError::Annotation { annotation, .. } if annotation == "7"),
            "{err}"
        );
    }

    #[test]
    fn dangling_video_is_an_error() {
        let gt = GT.replace(r#""video_id": 1"#, r#""video_id": 9"#);
        let f = write_tmp(&gt);
        assert!(matches!(
            load_ground_truth(f.path()),
            Err(DatasetError::Annotation { .. })
        ));
    }

    fn loaded() -> (BTreeMap<VideoId, VideoClip>, BTreeMap<CategoryId, String>) {
        let f = write_tmp(GT);
        let (v, c, _) = load_ground_truth(f.path()).unwrap();
        (v, c)
    }

    #[test]
    fn empty_prediction_file() {
        let (v, c) = loaded();
        let f = write_tmp("[]");
        assert!(load_predictions(f.path(), &v, &c).unwrap().is_empty());
    }

    #[test]
    fn score_out_of_range_is_rejected() {
        let (v, c) = loaded();
        let f = write_tmp(
            r#"[{"video_id": 1, "category_id": 1, "score": 1.2, "segmentations": [null]}]"#,
        );
        assert!(matches!(
            load_predictions(f.path(), &v, &c),
            Err(DatasetError::ScoreOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn unknown_references_list_every_offender() {
        let (v, c) = loaded();
        let f = write_tmp(
            r#"[{"video_id": 4, "category_id": 1, "score": 0.5, "segmentations": []},
                {"video_id": 1, "category_id": 1, "score": 0.5, "segmentations": []},
                {"video_id": 5, "category_id": 1, "score": 0.5, "segmentations": []}]"#,
        );
        match load_predictions(f.path(), &v, &c).unwrap_err() {
            DatasetError::UnknownVideo { entries } => assert_eq!(entries.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        let f =
            write_tmp(r#"[{"video_id": 1, "category_id": 3, "score": 0.5, "segmentations": []}]"#);
        assert!(matches!(
            load_predictions(f.path(), &v, &c),
            Err(DatasetError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn all_empty_prediction_is_kept() {
        let (v, c) = loaded();
        let f = write_tmp(
            r#"[{"video_id": 1, "category_id": 2, "score": 0.3, "segmentations": [null, null]}]"#,
        );
        let p = load_predictions(f.path(), &v, &c).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].masks.len(), 10);
        assert_eq!(p[0].visible_frames(), 0);
    }

    fn dataset() -> Dataset {
        let f = write_tmp(GT);
        let (videos, categories, gt_tracks) = load_ground_truth(f.path()).unwrap();
        Dataset {
            videos,
            categories,
            gt_tracks,
            predictions: Vec::new(),
        }
    }

    #[test]
    fn clean_dataset_validates() {
        let d = dataset();
        assert_eq!(validate(&d), ValidationReport::default());
    }

    #[test]
    fn height_mismatch_is_one_error() {
        let mut d = dataset();
        d.gt_tracks[0].masks[3] = Some(RleMask::new(3, 2, vec![0, 6]).unwrap());
        let r = validate(&d);
        assert_eq!(r.errors.len(), 1, "{r}");
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn zero_area_mask_is_one_warning() {
        let mut d = dataset();
        d.gt_tracks[0].masks[0] = Some(RleMask::empty(2, 2).unwrap());
        let r = validate(&d);
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn duplicate_predictions_warn() {
        let mut d = dataset();
        let p = TrackPrediction {
            video_id: VideoId(1),
            category_id: CategoryId(1),
            score: 0.5,
            masks: d.gt_tracks[0].masks.clone(),
        };
        d.predictions = vec![p.clone(), p];
        let r = validate(&d);
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let mut d = dataset();
        d.predictions.push(TrackPrediction {
            video_id: VideoId(1),
            category_id: CategoryId(2),
            score: 0.25,
            masks: d.gt_tracks[0].masks.clone(),
        });
        let dir = tempfile::tempdir().unwrap();
        let gt = dir.path().join("gt.json");
        let pr = dir.path().join("pred.json");
        write_ground_truth(&d, &gt).unwrap();
        write_predictions(&d.predictions, &pr).unwrap();
        let back = Dataset::load(&gt, &pr).unwrap();
        assert_eq!(back, d);
    }
}
