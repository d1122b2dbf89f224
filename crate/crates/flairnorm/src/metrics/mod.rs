//! Segmentation evaluation and histogram-alignment metrics.
//!
//! Overlap (Dice, extra fraction), surface distance (H95), volume
//! difference (AVD), lesion-wise detection (F1/Recall over 26-connected
//! components), KL-divergence alignment against the dataset mean
//! histogram, and stratified summaries with coefficients of variation.

mod alignment;
mod detection;
mod overlap;
mod records;
mod summary;
mod surface;

pub use alignment::{dataset_alignment_report, kl_divergence, AlignmentReport, DEFAULT_KL_EPSILON};
pub use detection::{
    label_components, lesion_detection, lesion_detection_with_threshold, DetectionStats,
};
pub use overlap::{avd, dsc, extra_fraction};
pub use records::{
    evaluate_pair, fmt_g6, read_eval_csv, write_eval_csv, EvalRecord, KlRecord, LesionLoadBin,
    EVAL_CSV_HEADER,
};
pub use summary::{stratified_summary, write_summary_csv, GroupBy, SummaryRow};
pub use surface::h95;

use thiserror::Error;

use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dims mismatch: {left:?} vs {right:?}")]
    DimsMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("ground-truth mask is empty")]
    EmptyGroundTruth,
    #[error("{side} mask is empty, surface distance undefined")]
    EmptyMask { side: &'static str },
    #[error("histogram bin edges differ")]
    EdgesMismatch,
    #[error("histograms must be normalized")]
    NotNormalized,
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("no records supplied")]
    EmptyInput,
    #[error("alignment report needs at least 2 volumes, got {0}")]
    TooFewVolumes(usize),
    #[error("record sets are not paired: {0}")]
    IdMismatch(String),
    #[error("csv i/o: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv field {field} on row {row}: {message}")]
    CsvField {
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub(crate) fn check_mask_dims(
    left: (usize, usize, usize),
    right: (usize, usize, usize),
) -> Result<(), MetricsError> {
    if left == right {
        Ok(())
    } else {
        Err(MetricsError::DimsMismatch { left, right })
    }
}
