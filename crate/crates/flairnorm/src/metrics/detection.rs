//! Lesion-wise detection metrics over 26-connected components.

use super::{check_mask_dims, MetricsError};
use crate::volume::Mask;

/// Label 3D connected components under 26-connectivity (faces, edges and
/// corners all connect). Returns per-voxel labels (0 = background) and
/// the number of components.
pub fn label_components(mask: &Mask) -> (Vec<u32>, usize) {
    let (nx, ny, nz) = mask.dims();
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut next = 0u32;
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !bits[idx] || labels[idx] != 0 {
                    continue;
                }
                next += 1;
                labels[idx] = next;
                stack.push((i, j, k));
                while let Some((ci, cj, ck)) = stack.pop() {
                    for dk in -1i64..=1 {
                        for dj in -1i64..=1 {
                            for di in -1i64..=1 {
                                if di == 0 && dj == 0 && dk == 0 {
                                    continue;
                                }
                                let ni = ci as i64 + di;
                                let nj = cj as i64 + dj;
                                let nk = ck as i64 + dk;
                                if ni < 0
                                    || nj < 0
                                    || nk < 0
                                    || ni >= nx as i64
                                    || nj >= ny as i64
                                    || nk >= nz as i64
                                {
                                    continue;
                                }
                                let nidx = ni as usize + nx * (nj as usize + ny * nk as usize);
                                if bits[nidx] && labels[nidx] == 0 {
                                    labels[nidx] = next;
                                    stack.push((ni as usize, nj as usize, nk as usize));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Lesion-wise detection scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub n_gt_lesions: usize,
    pub n_pred_lesions: usize,
}

/// Lesion detection with the default any-voxel overlap rule.
///
/// A ground-truth lesion counts as detected iff it shares at least one
/// voxel with the predicted mask; a predicted component is a true
/// positive iff it touches any ground-truth voxel. When one side has no
/// lesions its rate is vacuously 1, which makes the both-empty case a
/// perfect (1, 1, 0, 0).
pub fn lesion_detection(pred: &Mask, gt: &Mask) -> Result<DetectionStats, MetricsError> {
    lesion_detection_with_threshold(pred, gt, 0.0)
}

/// Like [`lesion_detection`] but requiring an overlap of at least
/// `min_overlap` of each component's voxels (0 recovers any-voxel).
pub fn lesion_detection_with_threshold(
    pred: &Mask,
    gt: &Mask,
    min_overlap: f64,
) -> Result<DetectionStats, MetricsError> {
    check_mask_dims(pred.dims(), gt.dims())?;
    let (gt_labels, n_gt) = label_components(gt);
    let (pred_labels, n_pred) = label_components(pred);

    let mut gt_size = vec![0usize; n_gt + 1];
    let mut gt_hit = vec![0usize; n_gt + 1];
    let mut pred_size = vec![0usize; n_pred + 1];
    let mut pred_hit = vec![0usize; n_pred + 1];
    for idx in 0..gt_labels.len() {
        let gl = gt_labels[idx] as usize;
        let pl = pred_labels[idx] as usize;
        if gl != 0 {
            gt_size[gl] += 1;
            if pred.bits()[idx] {
                gt_hit[gl] += 1;
            }
        }
        if pl != 0 {
            pred_size[pl] += 1;
            if gt.bits()[idx] {
                pred_hit[pl] += 1;
            }
        }
    }
    let counts = |size: &[usize], hit: &[usize]| -> usize {
        size.iter()
            .zip(hit.iter())
            .skip(1)
            .filter(|(&s, &h)| h > 0 && h as f64 >= min_overlap * s as f64)
            .count()
    };
    let detected = counts(&gt_size, &gt_hit);
    let tp = counts(&pred_size, &pred_hit);

    let recall = if n_gt == 0 {
        1.0
    } else {
        detected as f64 / n_gt as f64
    };
    let precision = if n_pred == 0 {
        1.0
    } else {
        tp as f64 / n_pred as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(DetectionStats {
        f1,
        recall,
        precision,
        n_gt_lesions: n_gt,
        n_pred_lesions: n_pred,
    })
}
