use thiserror::Error;

use crate::config::ConfigError;
use crate::dataset::{DatasetError, ValidationReport};
use crate::iou::IouError;
use crate::taxonomy::ErrorKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("dataset failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("prediction {pred} vs ground truth {gt}: {source}")]
    Iou {
        pred: usize,
        gt: usize,
        source: IouError,
    },
    #[error("prediction {pred} fits no error type (iou_same={iou_same}, iou_other={iou_other})")]
    Unclassifiable {
        pred: usize,
        iou_same: f64,
        iou_other: f64,
    },
    #[error("fixing {kind} errors lowered AP by {delta}")]
    NegativeWeight { kind: ErrorKind, delta: f64 },
    #[error("AP after fixing every error is {0}, not 100")]
    FixAllIncomplete(f64),
}
