//! Denoising and bias-field correction stages of the IAMLAB pipeline.
//!
//! Both stages are pure: they return new volumes and never touch voxels
//! outside the mask (bias correction) or alter geometry.

use thiserror::Error;

use crate::volume::{check_dims, Mask, Volume, VolumeError};

/// Default lowpass standard deviation in millimetres. Bias fields vary
/// over scales much larger than anatomy; override per dataset if needed.
pub const DEFAULT_SIGMA_MM: f64 = 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("in-plane dims {nx}x{ny} too small for a 3x3 filter")]
    TooSmall { nx: usize, ny: usize },
    #[error("in-mask voxel {index} is {value}, log-domain correction needs positive intensities")]
    NonPositiveIntensity { index: usize, value: f64 },
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("lowpass sigma must be positive, got {0} mm")]
    NonPositiveSigma(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// 3x3 median filter applied per axial slice with edge replication.
///
/// Through-plane medians are deliberately avoided: slice thickness is
/// several times the in-plane spacing, so a 3D neighbourhood would mix
/// unrelated anatomy.
pub fn median_filter_3x3(volume: &Volume) -> Result<Volume, PreprocessError> {
    let (nx, ny, nz) = volume.dims();
    if nx < 3 || ny < 3 {
        return Err(PreprocessError::TooSmall { nx, ny });
    }
    let src = volume.voxels();
    let mut out = vec![0.0f64; src.len()];
    let mut window = [0.0f64; 9];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut w = 0;
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let ii = (i as i64 + di).clamp(0, nx as i64 - 1) as usize;
                        let jj = (j as i64 + dj).clamp(0, ny as i64 - 1) as usize;
                        window[w] = src[volume.index(ii, jj, k)];
                        w += 1;
                    }
                }
                window.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                out[volume.index(i, j, k)] = window[4];
            }
        }
    }
    Ok(Volume::with_unit(
        volume.dims(),
        volume.spacing(),
        out,
        volume.intensity_unit(),
    )
    .expect("median preserves finiteness and geometry"))
}

/// Multiplicative bias-field correction by lowpass filtering in the log
/// domain.
///
/// The field is a masked (normalized-convolution) Gaussian smooth of the
/// log-intensities, with the kernel width given in millimetres so
/// anisotropic voxels are handled correctly. The smooth field is
/// subtracted in log space and re-centred on its in-mask mean, so the
/// in-mask geometric mean of the input is preserved and the result is
/// invariant under global positive rescaling. Voxels outside the mask are
/// returned unchanged.
pub fn bias_correct(
    volume: &Volume,
    mask: &Mask,
    sigma_mm: f64,
) -> Result<Volume, PreprocessError> {
    check_dims(volume.dims(), mask.dims())?;
    if !(sigma_mm.is_finite() && sigma_mm > 0.0) {
        return Err(PreprocessError::NonPositiveSigma(sigma_mm));
    }
    if mask.foreground_count() == 0 {
        return Err(PreprocessError::EmptyMask);
    }
    let n = volume.len();
    let src = volume.voxels();

    let mut log_masked = vec![0.0f64; n];
    let mut weight = vec![0.0f64; n];
    for (idx, (&v, &m)) in src.iter().zip(mask.bits().iter()).enumerate() {
        if m {
            if v <= 0.0 {
                return Err(PreprocessError::NonPositiveIntensity {
                    index: idx,
                    value: v,
                });
            }
            log_masked[idx] = v.ln();
            weight[idx] = 1.0;
        }
    }

    let dims = volume.dims();
    let spacing = volume.spacing();
    let sigma_vox = (
        sigma_mm / spacing.0,
        sigma_mm / spacing.1,
        sigma_mm / spacing.2,
    );
    gaussian_smooth_3d(&mut log_masked, dims, sigma_vox);
    gaussian_smooth_3d(&mut weight, dims, sigma_vox);

    // field = smooth(w * log I) / smooth(w), defined on the mask; its
    // in-mask mean is added back so the log-domain mean is untouched.
    let mut field_sum = 0.0;
    let mut count = 0usize;
    let mut field = vec![0.0f64; n];
    for idx in 0..n {
        if mask.bits()[idx] {
            let f = log_masked[idx] / weight[idx];
            field[idx] = f;
            field_sum += f;
            count += 1;
        }
    }
    let field_mean = field_sum / count as f64;

    let mut out = src.to_vec();
    for (idx, o) in out.iter_mut().enumerate() {
        if mask.bits()[idx] {
            *o = (src[idx].ln() - field[idx] + field_mean).exp();
        }
    }
    Ok(
        Volume::with_unit(dims, spacing, out, volume.intensity_unit())
            .expect("corrected intensities stay finite"),
    )
}

/// Separable Gaussian convolution in place, kernel std in voxels per axis.
/// Zero boundary handling: callers pair data with an identically smoothed
/// weight field, so boundaries cancel in the ratio.
fn gaussian_smooth_3d(data: &mut [f64], dims: (usize, usize, usize), sigma: (f64, f64, f64)) {
    let (nx, ny, nz) = dims;
    let kx = gaussian_kernel(sigma.0, nx);
    let ky = gaussian_kernel(sigma.1, ny);
    let kz = gaussian_kernel(sigma.2, nz);

    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    let mut line = vec![0.0f64; nx.max(ny).max(nz)];
    // x lines
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                line[i] = data[idx(i, j, k)];
            }
            for i in 0..nx {
                data[idx(i, j, k)] = convolve_at(&line[..nx], i, &kx);
            }
        }
    }
    // y lines
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                line[j] = data[idx(i, j, k)];
            }
            for j in 0..ny {
                data[idx(i, j, k)] = convolve_at(&line[..ny], j, &ky);
            }
        }
    }
    // z lines
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                line[k] = data[idx(i, j, k)];
            }
            for k in 0..nz {
                data[idx(i, j, k)] = convolve_at(&line[..nz], k, &kz);
            }
        }
    }
}

/// Normalized Gaussian taps out to 3 sigma, radius clamped to the axis.
fn gaussian_kernel(sigma: f64, axis_len: usize) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).clamp(1, axis_len.saturating_sub(1).max(1));
    let mut k = Vec::with_capacity(2 * radius + 1);
    for t in -(radius as i64)..=(radius as i64) {
        let x = t as f64;
        k.push((-x * x / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

#[inline]
fn convolve_at(line: &[f64], center: usize, kernel: &[f64]) -> f64 {
    let radius = kernel.len() / 2;
    let mut acc = 0.0;
    for (t, &kv) in kernel.iter().enumerate() {
        let pos = center as i64 + t as i64 - radius as i64;
        if pos >= 0 && (pos as usize) < line.len() {
            acc += kv * line[pos as usize];
        }
    }
    acc
}
