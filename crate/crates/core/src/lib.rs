//! Error analysis for video instance segmentation.
//!
//! Predictions are matched to ground truth by mask-sequence IoU, scored with COCO-style AP
//! and AR, and every false positive or missed instance is assigned one of seven error kinds.
//! Each kind is weighted by the AP@50 gained when an oracle fixes all of its errors, and all
//! metrics can be restricted to instances of a given temporal length.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod iou;
pub mod matching;
pub mod ranges;
pub mod report;
pub mod rle;
pub mod synth;
pub mod taxonomy;
pub mod weights;

pub use analysis::{analyze, analyze_with, Analysis};
pub use config::{EvalConfig, IouSweep, OverlapUnionMode, TemporalLengthMode};
pub use dataset::{
    CategoryId, Dataset, InstanceTrack, TrackId, TrackPrediction, VideoClip, VideoId,
};
pub use error::EvalError;
pub use matching::{evaluate, EvalResult, EvalView, Evaluator};
pub use ranges::RangeBins;
pub use rle::RleMask;
pub use taxonomy::{ErrorKind, ErrorRecord};
