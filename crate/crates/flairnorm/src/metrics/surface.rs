//! 95th-percentile symmetric surface distance (H95).
//!
//! Boundary voxels are foreground voxels with at least one of their six
//! face neighbours background (or outside the volume). Distances between
//! the two boundaries are computed with an exact anisotropic Euclidean
//! distance transform (lower-envelope-of-parabolas, separable per axis),
//! and each directed distance set is reduced to its 95th percentile by
//! linear interpolation. H95 is the larger of the two directed
//! percentiles, which makes it symmetric in its arguments.

use super::{check_mask_dims, MetricsError};
use crate::util::percentile_sorted;
use crate::volume::Mask;

// Finite sentinel keeps the envelope arithmetic NaN-free; any real
// squared distance in a volume is astronomically smaller.
const FAR: f64 = 1e30;

/// Linear indices of the boundary voxels of a mask.
pub(crate) fn boundary_indices(mask: &Mask) -> Vec<usize> {
    let (nx, ny, nz) = mask.dims();
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !mask.is_set(i, j, k) {
                    continue;
                }
                let edge = i == 0
                    || i == nx - 1
                    || j == 0
                    || j == ny - 1
                    || k == 0
                    || k == nz - 1
                    || !mask.is_set(i - 1, j, k)
                    || !mask.is_set(i + 1, j, k)
                    || !mask.is_set(i, j - 1, k)
                    || !mask.is_set(i, j + 1, k)
                    || !mask.is_set(i, j, k - 1)
                    || !mask.is_set(i, j, k + 1);
                if edge {
                    out.push(mask.index(i, j, k));
                }
            }
        }
    }
    out
}

/// 1D squared-distance transform of sampled costs `f` at positions `pos`
/// (Felzenszwalb–Huttenlocher lower envelope).
fn dt_1d(f: &[f64], pos: &[f64], out: &mut [f64]) {
    let n = f.len();
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| -> f64 {
        ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p])) / (2.0 * (pos[q] - pos[p]))
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < pos[q] {
            k += 1;
        }
        let d = pos[q] - pos[v[k]];
        out[q] = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in mm) from every voxel to the
/// nearest of the given site voxels, honouring anisotropic spacing.
fn squared_edt(dims: (usize, usize, usize), spacing: (f64, f64, f64), sites: &[usize]) -> Vec<f64> {
    let (nx, ny, nz) = dims;
    let mut cost = vec![FAR; nx * ny * nz];
    for &s in sites {
        cost[s] = 0.0;
    }
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    let pos_x: Vec<f64> = (0..nx).map(|i| i as f64 * spacing.0).collect();
    let pos_y: Vec<f64> = (0..ny).map(|j| j as f64 * spacing.1).collect();
    let pos_z: Vec<f64> = (0..nz).map(|k| k as f64 * spacing.2).collect();

    let mut line = vec![0.0f64; nx.max(ny).max(nz)];
    let mut out = vec![0.0f64; nx.max(ny).max(nz)];

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                line[i] = cost[idx(i, j, k)];
            }
            dt_1d(&line[..nx], &pos_x, &mut out[..nx]);
            for i in 0..nx {
                cost[idx(i, j, k)] = out[i];
            }
        }
    }
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                line[j] = cost[idx(i, j, k)];
            }
            dt_1d(&line[..ny], &pos_y, &mut out[..ny]);
            for j in 0..ny {
                cost[idx(i, j, k)] = out[j];
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                line[k] = cost[idx(i, j, k)];
            }
            dt_1d(&line[..nz], &pos_z, &mut out[..nz]);
            for k in 0..nz {
                cost[idx(i, j, k)] = out[k];
            }
        }
    }
    cost
}

fn directed_p95(from: &[usize], edt_to_other: &[f64]) -> f64 {
    let mut dists: Vec<f64> = from.iter().map(|&i| edt_to_other[i].sqrt()).collect();
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    percentile_sorted(&dists, 95.0)
}

/// 95th-percentile symmetric surface distance in millimetres.
pub fn h95(pred: &Mask, gt: &Mask, spacing: (f64, f64, f64)) -> Result<f64, MetricsError> {
    check_mask_dims(pred.dims(), gt.dims())?;
    let pb = boundary_indices(pred);
    if pb.is_empty() {
        return Err(MetricsError::EmptyMask { side: "pred" });
    }
    let gb = boundary_indices(gt);
    if gb.is_empty() {
        return Err(MetricsError::EmptyMask { side: "gt" });
    }
    let edt_gt = squared_edt(gt.dims(), spacing, &gb);
    let edt_pred = squared_edt(pred.dims(), spacing, &pb);
    let pg = directed_p95(&pb, &edt_gt);
    let gp = directed_p95(&gb, &edt_pred);
    Ok(pg.max(gp))
}
