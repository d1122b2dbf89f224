//! Voxel-overlap metrics: Dice similarity, extra fraction and absolute
//! volume difference.

use super::{check_mask_dims, MetricsError};
use crate::volume::Mask;

fn overlap_counts(pred: &Mask, gt: &Mask) -> Result<(usize, usize, usize), MetricsError> {
    check_mask_dims(pred.dims(), gt.dims())?;
    let mut p = 0usize;
    let mut g = 0usize;
    let mut inter = 0usize;
    for (&a, &b) in pred.bits().iter().zip(gt.bits().iter()) {
        p += a as usize;
        g += b as usize;
        inter += (a && b) as usize;
    }
    Ok((p, g, inter))
}

/// Dice similarity coefficient `2|P∩G| / (|P|+|G|)`.
///
/// Two empty masks compare as identical (DSC 1) so degenerate cases stay
/// deterministic.
pub fn dsc(pred: &Mask, gt: &Mask) -> Result<f64, MetricsError> {
    let (p, g, inter) = overlap_counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Extra fraction `|P \ G| / |G|`: false-positive volume relative to the
/// ground truth.
pub fn extra_fraction(pred: &Mask, gt: &Mask) -> Result<f64, MetricsError> {
    let (p, g, inter) = overlap_counts(pred, gt)?;
    if g == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    Ok((p - inter) as f64 / g as f64)
}

/// Absolute volume difference as a percentage of the ground-truth volume,
/// with volumes in millilitres.
pub fn avd(pred: &Mask, gt: &Mask, spacing: (f64, f64, f64)) -> Result<f64, MetricsError> {
    check_mask_dims(pred.dims(), gt.dims())?;
    let v_gt = gt.lesion_load_ml(spacing);
    if v_gt == 0.0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let v_pred = pred.lesion_load_ml(spacing);
    Ok(100.0 * (v_pred - v_gt).abs() / v_gt)
}
