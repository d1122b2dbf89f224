//! Voxel-grid data model shared by every stage of the toolkit.
//!
//! A [`Volume`] is a dense 3D scalar grid with millimetre spacing, stored
//! x-fastest to match the NIfTI-1 on-disk order. [`Mask`]s are binary grids
//! congruent with a volume (intracranial or lesion semantics). Histogramming,
//! masked statistics, patch geometry and lesion-load conversion live here
//! because everything downstream is built on them.

use thiserror::Error;

/// Default number of histogram bins over a masked intensity range.
pub const DEFAULT_BINS: usize = 256;

/// Errors raised by the voxel-grid data model.
#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("voxel buffer holds {actual} values but dims {dims:?} require {expected}")]
    LengthMismatch {
        dims: (usize, usize, usize),
        expected: usize,
        actual: usize,
    },
    #[error("non-finite voxel value at linear index {0}")]
    NonFiniteVoxel(usize),
    #[error("voxel spacing must be strictly positive, got {0:?} mm")]
    NonPositiveSpacing((f64, f64, f64)),
    #[error("zero-sized dimension in {0:?}")]
    EmptyDims((usize, usize, usize)),
    #[error("dims mismatch: {left:?} vs {right:?}")]
    DimsMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("mask value at index {index} is {value}, expected exactly 0 or 1")]
    NonBinaryValue { index: usize, value: f64 },
    #[error("mask has {actual} foreground voxels, at least {required} required")]
    EmptyMask { required: usize, actual: usize },
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("degenerate intensity range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("bin edges must be strictly increasing")]
    NonMonotoneEdges,
    #[error("counts length {counts} does not fit {edges} edges")]
    CountsEdgesMismatch { counts: usize, edges: usize },
    #[error("negative bin count at index {0}")]
    NegativeCount(usize),
    #[error("histogram bin edges differ between inputs")]
    EdgesMismatch,
    #[error("histogram list is empty")]
    EmptyList,
    #[error("histogram counts are not normalized")]
    NotNormalized,
    #[error("cannot normalize a histogram with zero total count")]
    ZeroTotalCount,
    #[error("patch overlap must lie in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("patch size must be at least 1")]
    InvalidPatchSize,
}

/// Semantics carried by a binary mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Intracranial volume (brain) mask: the region intensity statistics
    /// are computed over.
    Icv,
    /// White matter lesion mask (ground truth or prediction).
    Wml,
}

/// Dense 3D scalar volume with per-axis spacing in millimetres.
///
/// Voxels are stored x-fastest: linear index `i + j*nx + k*nx*ny`. All
/// values are finite and the buffer length always equals `nx*ny*nz`;
/// both are enforced at construction, so downstream code can index
/// without re-validating.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    voxels: Vec<f64>,
    intensity_unit: String,
}

impl Volume {
    /// Build a volume, validating buffer length, finiteness and spacing.
    pub fn new(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        voxels: Vec<f64>,
    ) -> Result<Self, VolumeError> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::EmptyDims(dims));
        }
        let expected = nx * ny * nz;
        if voxels.len() != expected {
            return Err(VolumeError::LengthMismatch {
                dims,
                expected,
                actual: voxels.len(),
            });
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.2 > 0.0) {
            return Err(VolumeError::NonPositiveSpacing(spacing));
        }
        if let Some(bad) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteVoxel(bad));
        }
        Ok(Volume {
            dims,
            spacing,
            voxels,
            intensity_unit: "arbitrary".to_owned(),
        })
    }

    /// Same as [`Volume::new`] with an explicit intensity-unit tag.
    pub fn with_unit(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        voxels: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        let mut v = Self::new(dims, spacing, voxels)?;
        v.intensity_unit = unit.into();
        Ok(v)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Spacing in mm per voxel along (x, y, z).
    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    /// Opaque tag describing the intensity scale ("arbitrary" for raw
    /// scanner units, `standardized:<method>` after normalization).
    pub fn intensity_unit(&self) -> &str {
        &self.intensity_unit
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Linear index of voxel (i, j, k), x-fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.voxels[self.index(i, j, k)]
    }

    /// Apply an intensity map to every voxel, producing a new volume with
    /// the given unit tag. Geometry is preserved; the map must keep values
    /// finite (enforced by construction in debug builds only, callers pass
    /// affine or piecewise-linear maps).
    pub fn map_intensities(&self, unit: impl Into<String>, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            voxels: self.voxels.iter().map(|&v| f(v)).collect(),
            intensity_unit: unit.into(),
        }
    }

    /// In-mask values in linear-index order.
    pub fn masked_values(&self, mask: &Mask) -> Result<Vec<f64>, VolumeError> {
        check_dims(self.dims, mask.dims)?;
        Ok(self
            .voxels
            .iter()
            .zip(mask.bits.iter())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect())
    }

    /// Mean, population standard deviation, min, max and count over the
    /// mask foreground. Requires at least 2 foreground voxels.
    pub fn masked_stats(&self, mask: &Mask) -> Result<MaskedStats, VolumeError> {
        check_dims(self.dims, mask.dims)?;
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (&v, &m) in self.voxels.iter().zip(mask.bits.iter()) {
            if m {
                count += 1;
                sum += v;
                min = min.min(v);
                max = max.max(v);
            }
        }
        if count < 2 {
            return Err(VolumeError::EmptyMask {
                required: 2,
                actual: count,
            });
        }
        let mean = sum / count as f64;
        let mut ssd = 0.0;
        for (&v, &m) in self.voxels.iter().zip(mask.bits.iter()) {
            if m {
                let d = v - mean;
                ssd += d * d;
            }
        }
        Ok(MaskedStats {
            mean,
            std: (ssd / count as f64).sqrt(),
            min,
            max,
            count,
        })
    }

    /// Histogram of in-mask intensities.
    ///
    /// With `range: None` the bin range is the masked min/max. In-mask
    /// values outside an explicit range are not counted; a value exactly at
    /// the upper edge falls in the last bin.
    pub fn histogram(
        &self,
        mask: &Mask,
        bins: usize,
        range: Option<(f64, f64)>,
    ) -> Result<Histogram, VolumeError> {
        check_dims(self.dims, mask.dims)?;
        if bins < 2 {
            return Err(VolumeError::TooFewBins(bins));
        }
        let fg = mask.foreground_count();
        if fg == 0 {
            return Err(VolumeError::EmptyMask {
                required: 1,
                actual: 0,
            });
        }
        let (lo, hi) = match range {
            Some(r) => r,
            None => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (&v, &m) in self.voxels.iter().zip(mask.bits.iter()) {
                    if m {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                (lo, hi)
            }
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(VolumeError::DegenerateRange { lo, hi });
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0f64; bins];
        for (&v, &m) in self.voxels.iter().zip(mask.bits.iter()) {
            if m && v >= lo && v <= hi {
                let mut b = ((v - lo) / width) as usize;
                if b >= bins {
                    b = bins - 1; // value at (or rounding onto) the upper edge
                }
                counts[b] += 1.0;
            }
        }
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + i as f64 * width })
            .collect();
        Histogram::new(edges, counts, false)
    }
}

/// Masked summary statistics; `std` is the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Binary mask congruent with a [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: (usize, usize, usize),
    bits: Vec<bool>,
    kind: MaskKind,
}

impl Mask {
    pub fn new(
        dims: (usize, usize, usize),
        kind: MaskKind,
        bits: Vec<bool>,
    ) -> Result<Self, VolumeError> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::EmptyDims(dims));
        }
        let expected = nx * ny * nz;
        if bits.len() != expected {
            return Err(VolumeError::LengthMismatch {
                dims,
                expected,
                actual: bits.len(),
            });
        }
        Ok(Mask { dims, bits, kind })
    }

    /// Build a mask from scalar values that must be exactly 0 or 1.
    pub fn from_values(
        dims: (usize, usize, usize),
        kind: MaskKind,
        values: &[f64],
    ) -> Result<Self, VolumeError> {
        let mut bits = Vec::with_capacity(values.len());
        for (index, &value) in values.iter().enumerate() {
            if value == 0.0 {
                bits.push(false);
            } else if value == 1.0 {
                bits.push(true);
            } else {
                return Err(VolumeError::NonBinaryValue { index, value });
            }
        }
        Mask::new(dims, kind, bits)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn is_set(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.index(i, j, k)]
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Total foreground volume in millilitres: `count * sx*sy*sz / 1000`.
    ///
    /// Spacing is passed explicitly because masks carry no geometry of
    /// their own. An empty mask is 0 mL.
    pub fn lesion_load_ml(&self, spacing: (f64, f64, f64)) -> f64 {
        self.foreground_count() as f64 * spacing.0 * spacing.1 * spacing.2 / 1000.0
    }
}

pub(crate) fn check_dims(
    left: (usize, usize, usize),
    right: (usize, usize, usize),
) -> Result<(), VolumeError> {
    if left == right {
        Ok(())
    } else {
        Err(VolumeError::DimsMismatch { left, right })
    }
}

/// Binned intensity distribution with explicit edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    normalized: bool,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, counts: Vec<f64>, normalized: bool) -> Result<Self, VolumeError> {
        if edges.len() < 2 || counts.len() != edges.len() - 1 {
            return Err(VolumeError::CountsEdgesMismatch {
                counts: counts.len(),
                edges: edges.len(),
            });
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VolumeError::NonMonotoneEdges);
        }
        if let Some(bad) = counts.iter().position(|&c| c < 0.0 || !c.is_finite()) {
            return Err(VolumeError::NegativeCount(bad));
        }
        if normalized {
            let total: f64 = counts.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(VolumeError::NotNormalized);
            }
        }
        Ok(Histogram {
            edges,
            counts,
            normalized,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Centre of bin `b`.
    pub fn center(&self, b: usize) -> f64 {
        0.5 * (self.edges[b] + self.edges[b + 1])
    }

    /// A copy whose counts sum to 1.
    pub fn normalized(&self) -> Result<Histogram, VolumeError> {
        let total = self.total();
        if total <= 0.0 {
            return Err(VolumeError::ZeroTotalCount);
        }
        Ok(Histogram {
            edges: self.edges.clone(),
            counts: self.counts.iter().map(|&c| c / total).collect(),
            normalized: true,
        })
    }
}

/// Per-bin arithmetic mean of normalized histograms sharing one bin grid.
pub fn mean_histogram(histograms: &[Histogram]) -> Result<Histogram, VolumeError> {
    let first = histograms.first().ok_or(VolumeError::EmptyList)?;
    for h in histograms {
        if h.edges != first.edges {
            return Err(VolumeError::EdgesMismatch);
        }
        if !h.normalized {
            return Err(VolumeError::NotNormalized);
        }
    }
    let n = histograms.len() as f64;
    let mut counts = vec![0.0f64; first.bins()];
    for h in histograms {
        for (acc, &c) in counts.iter_mut().zip(h.counts.iter()) {
            *acc += c;
        }
    }
    for c in counts.iter_mut() {
        *c /= n;
    }
    Histogram::new(first.edges.clone(), counts, true)
}

/// Patch tiling of a 2D slice: origins of every `patch_size` window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: (usize, usize),
    pub stride: (usize, usize),
    /// Top-left (row, col) of each patch, row-major.
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Tile a slice of `(rows, cols)` pixels with square patches.
///
/// The stride is `round(patch_size * (1 - overlap))`, at least 1. Origins
/// run 0, stride, 2*stride, ... and the final origin is clamped so the
/// last patch ends exactly at the slice boundary instead of padding with
/// synthetic values. Slices smaller than the patch get a single origin at
/// 0.
pub fn extract_patches(
    slice_dims: (usize, usize),
    patch_size: usize,
    overlap: f64,
) -> Result<PatchGrid, VolumeError> {
    if patch_size == 0 {
        return Err(VolumeError::InvalidPatchSize);
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(VolumeError::InvalidOverlap(overlap));
    }
    let stride = ((patch_size as f64 * (1.0 - overlap)).round() as usize).max(1);
    let axis = |dim: usize| -> Vec<usize> {
        if dim <= patch_size {
            return vec![0];
        }
        let mut origins = Vec::new();
        let mut o = 0usize;
        loop {
            if o + patch_size >= dim {
                origins.push(dim - patch_size);
                break;
            }
            origins.push(o);
            o += stride;
        }
        origins
    };
    let rows = axis(slice_dims.0);
    let cols = axis(slice_dims.1);
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            origins.push((r, c));
        }
    }
    Ok(PatchGrid {
        patch_size: (patch_size, patch_size),
        stride: (stride, stride),
        origins,
    })
}
