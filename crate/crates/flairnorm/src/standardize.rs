//! The four intensity standardization methods and the pipeline that
//! dispatches them.
//!
//! Every method maps a volume (plus its brain mask) to a standardized
//! volume through a monotone intensity map fitted on in-mask statistics.
//! The map is applied to *all* voxels, in and out of mask, so downstream
//! consumers keep skull/background context; masks stay available to
//! re-exclude it.
//!
//! * z-score: affine map to zero mean / unit variance over the mask.
//! * White Stripe: z-score using only a narrow quantile band around the
//!   dominant tissue mode.
//! * Nyul: piecewise-linear remapping through trained percentile
//!   landmarks on a standard scale.
//! * IAMLAB: median denoise, log-domain bias correction, then a scaling
//!   factor that moves the histogram mode onto a reference mode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::preprocess::DEFAULT_SIGMA_MM;
use crate::preprocess::{bias_correct, median_filter_3x3, PreprocessError};
use crate::util::{percentile_sorted, sort_values};
use crate::volume::{check_dims, Histogram, Mask, Volume, VolumeError, DEFAULT_BINS};

/// White Stripe quantile half-width.
pub const DEFAULT_TAU: f64 = 0.05;
/// Target mode for IAMLAB scaling, on a [0, 1]-style standard range.
pub const DEFAULT_REFERENCE_MODE: f64 = 0.75;
/// Moving-average window (in bins) for histogram mode detection.
pub const DEFAULT_MODE_SMOOTH_BINS: usize = 11;
/// Fraction of the low end of the intensity range ignored by mode
/// detection, guarding against background/CSF spikes.
const MODE_BACKGROUND_GUARD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum StandardizeError {
    #[error("in-mask intensities have zero variance")]
    ZeroVariance,
    #[error("no histogram mode could be detected: {0}")]
    ModeNotFound(String),
    #[error("histogram mode must be positive, got {0}")]
    NonPositiveMode(f64),
    #[error("in-mask intensity spread is zero")]
    ZeroSpread,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("averaged landmarks are not strictly increasing (pathological input)")]
    NonMonotoneLandmarks,
    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),
    #[error("mode smoothing window must be odd and >= 1, got {0}")]
    InvalidSmoothing(usize),
    #[error("tau must lie in (0, 0.5), got {0}")]
    InvalidTau(f64),
    #[error("invalid standard scale: {0}")]
    InvalidScale(String),
    #[error("missing parameter: {0}")]
    MissingParams(&'static str),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Trained Nyul landmark set: percentile positions on the standard scale.
///
/// Serialized as JSON with exactly these field names so scales trained by
/// one run can be applied by any other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScale {
    pub landmark_percentiles: Vec<f64>,
    pub standard_positions: Vec<f64>,
    pub range: (f64, f64),
}

impl StandardScale {
    pub fn validate(&self) -> Result<(), StandardizeError> {
        let err = |msg: &str| Err(StandardizeError::InvalidScale(msg.to_owned()));
        if self.landmark_percentiles.len() < 2 {
            return err("need at least 2 landmarks");
        }
        if self.landmark_percentiles.len() != self.standard_positions.len() {
            return err("landmark and position lists differ in length");
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !finite(&self.landmark_percentiles) || !finite(&self.standard_positions) {
            return err("landmarks and positions must be finite");
        }
        if self.landmark_percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return err("landmark percentiles must be strictly increasing");
        }
        if self.standard_positions.windows(2).any(|w| w[0] >= w[1]) {
            return err("standard positions must be strictly increasing");
        }
        if !(self.range.0.is_finite() && self.range.1.is_finite() && self.range.0 < self.range.1) {
            return err("standard range is empty");
        }
        let eps = 1e-9 * (self.range.1 - self.range.0);
        if self
            .standard_positions
            .iter()
            .any(|&s| s < self.range.0 - eps || s > self.range.1 + eps)
        {
            return err("standard positions fall outside the range");
        }
        Ok(())
    }
}

/// Landmark percentiles and standard range used to train a
/// [`StandardScale`]. The default is the classic configuration: deciles
/// plus p1/p99 mapped onto [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct NyulConfig {
    pub landmark_percentiles: Vec<f64>,
    pub range: (f64, f64),
}

impl Default for NyulConfig {
    fn default() -> Self {
        NyulConfig {
            landmark_percentiles: vec![
                1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 99.0,
            ],
            range: (0.0, 100.0),
        }
    }
}

/// Detected histogram mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEstimate {
    pub mode_intensity: f64,
    pub peak_bin: usize,
    pub smoothing_width: usize,
}

/// Locate the dominant peak of a histogram.
///
/// Counts are smoothed with a centred moving average (window shrinks at
/// the ends), bins whose centre lies in the bottom 2% of the intensity
/// range are excluded, and ties resolve toward the higher-intensity bin.
/// The mode is always computed from the full-volume histogram, never per
/// slice: peak detection on sparse end slices is unreliable.
pub fn find_histogram_mode(
    hist: &Histogram,
    smooth_bins: usize,
) -> Result<ModeEstimate, StandardizeError> {
    if smooth_bins == 0 || smooth_bins.is_multiple_of(2) {
        return Err(StandardizeError::InvalidSmoothing(smooth_bins));
    }
    let bins = hist.bins();
    if bins == 0 {
        return Err(StandardizeError::DegenerateHistogram("no bins".into()));
    }
    if hist.total() <= 0.0 {
        return Err(StandardizeError::DegenerateHistogram(
            "all counts are zero".into(),
        ));
    }
    let radius = smooth_bins / 2;
    let counts = hist.counts();
    let smoothed: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = b.saturating_sub(radius);
            let hi = (b + radius).min(bins - 1);
            counts[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();

    let span = hist.edges()[bins] - hist.edges()[0];
    let guard = hist.edges()[0] + MODE_BACKGROUND_GUARD * span;
    let mut best: Option<usize> = None;
    for b in 0..bins {
        if hist.center(b) < guard {
            continue;
        }
        // >= keeps the higher-intensity bin on ties
        if best
            .map(|prev| smoothed[b] >= smoothed[prev])
            .unwrap_or(true)
        {
            best = Some(b);
        }
    }
    let peak_bin = best.ok_or_else(|| {
        StandardizeError::DegenerateHistogram("no bins above the background guard".into())
    })?;
    Ok(ModeEstimate {
        mode_intensity: hist.center(peak_bin),
        peak_bin,
        smoothing_width: smooth_bins,
    })
}

/// z-score normalization over the mask, applied volume-wide.
pub fn zscore_normalize(volume: &Volume, mask: &Mask) -> Result<Volume, StandardizeError> {
    let stats = volume.masked_stats(mask)?;
    if stats.std == 0.0 {
        return Err(StandardizeError::ZeroVariance);
    }
    let (mean, std) = (stats.mean, stats.std);
    Ok(volume.map_intensities("standardized:zscore", move |v| (v - mean) / std))
}

/// Intensity bounds of the White Stripe: the quantile band of half-width
/// `tau` around the in-mask histogram mode.
pub fn whitestripe_bounds(
    volume: &Volume,
    mask: &Mask,
    tau: f64,
) -> Result<(f64, f64), StandardizeError> {
    if !(tau > 0.0 && tau < 0.5) {
        return Err(StandardizeError::InvalidTau(tau));
    }
    let hist = volume
        .histogram(mask, DEFAULT_BINS, None)
        .map_err(|e| match e {
            VolumeError::DegenerateRange { .. } => {
                StandardizeError::ModeNotFound("constant in-mask intensities".into())
            }
            other => StandardizeError::Volume(other),
        })?;
    let mode = find_histogram_mode(&hist, DEFAULT_MODE_SMOOTH_BINS)
        .map_err(|e| StandardizeError::ModeNotFound(e.to_string()))?;

    let sorted = sort_values(volume.masked_values(mask)?);
    // empirical CDF position of the mode
    let below = sorted.partition_point(|&v| v <= mode.mode_intensity);
    let f_mode = below as f64 / sorted.len() as f64;
    let lo_q = (f_mode - tau).clamp(0.0, 1.0);
    let hi_q = (f_mode + tau).clamp(0.0, 1.0);
    Ok((
        percentile_sorted(&sorted, lo_q * 100.0),
        percentile_sorted(&sorted, hi_q * 100.0),
    ))
}

/// White Stripe normalization: z-score using the statistics of the stripe
/// (the in-mask voxels inside [`whitestripe_bounds`]), applied
/// volume-wide.
pub fn whitestripe_normalize(
    volume: &Volume,
    mask: &Mask,
    tau: f64,
) -> Result<Volume, StandardizeError> {
    let (lo, hi) = whitestripe_bounds(volume, mask, tau)?;
    let stripe: Vec<f64> = volume
        .masked_values(mask)?
        .into_iter()
        .filter(|&v| v >= lo && v <= hi)
        .collect();
    if stripe.len() < 2 {
        return Err(StandardizeError::ZeroVariance);
    }
    let mean = stripe.iter().sum::<f64>() / stripe.len() as f64;
    let var = stripe.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / stripe.len() as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(StandardizeError::ZeroVariance);
    }
    Ok(volume.map_intensities("standardized:whitestripe", move |v| (v - mean) / std))
}

fn volume_landmarks(
    volume: &Volume,
    mask: &Mask,
    percentiles: &[f64],
) -> Result<Vec<f64>, StandardizeError> {
    let sorted = sort_values(volume.masked_values(mask)?);
    if sorted.is_empty() {
        return Err(StandardizeError::Volume(VolumeError::EmptyMask {
            required: 1,
            actual: 0,
        }));
    }
    Ok(percentiles
        .iter()
        .map(|&p| percentile_sorted(&sorted, p))
        .collect())
}

/// Train a Nyul standard scale.
///
/// Each volume's landmark percentiles are mapped affinely so its
/// (first, last) landmark pair spans the standard range, then the mapped
/// positions are averaged across volumes. Averaging is order-free, so the
/// result does not depend on how the training set is listed, and scale
/// factors cancel: training on a globally rescaled copy gives the same
/// scale.
pub fn nyul_train(
    volumes: &[(&Volume, &Mask)],
    config: &NyulConfig,
) -> Result<StandardScale, StandardizeError> {
    if volumes.is_empty() {
        return Err(StandardizeError::EmptyTrainingSet);
    }
    let ps = &config.landmark_percentiles;
    if ps.len() < 2 || ps.iter().any(|p| !p.is_finite()) || ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StandardizeError::InvalidScale(
            "landmark percentiles must be strictly increasing, length >= 2".into(),
        ));
    }
    let (s1, s2) = config.range;
    if !(s1.is_finite() && s2.is_finite() && s1 < s2) {
        return Err(StandardizeError::InvalidScale(
            "empty standard range".into(),
        ));
    }

    let mut mean_positions = vec![0.0f64; ps.len()];
    for (volume, mask) in volumes {
        let marks = volume_landmarks(volume, mask, ps)?;
        let (lo, hi) = (marks[0], marks[ps.len() - 1]);
        if hi <= lo {
            return Err(StandardizeError::NonMonotoneLandmarks);
        }
        let scale = (s2 - s1) / (hi - lo);
        for (acc, &m) in mean_positions.iter_mut().zip(marks.iter()) {
            *acc += s1 + (m - lo) * scale;
        }
    }
    let n = volumes.len() as f64;
    for p in mean_positions.iter_mut() {
        *p /= n;
    }
    if mean_positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StandardizeError::NonMonotoneLandmarks);
    }
    Ok(StandardScale {
        landmark_percentiles: ps.clone(),
        standard_positions: mean_positions,
        range: (s1, s2),
    })
}

/// Apply a trained Nyul scale: continuous piecewise-linear interpolation
/// from the volume's own landmarks to the standard positions, with linear
/// extrapolation beyond the first/last landmark using the end segment
/// slopes.
pub fn nyul_apply(
    volume: &Volume,
    mask: &Mask,
    scale: &StandardScale,
) -> Result<Volume, StandardizeError> {
    scale.validate()?;
    let marks = volume_landmarks(volume, mask, &scale.landmark_percentiles)?;
    let spread = marks[marks.len() - 1] - marks[0];
    if spread <= 0.0 {
        return Err(StandardizeError::ZeroSpread);
    }

    // Collapse plateau landmarks (equal input percentiles) into one
    // breakpoint at the mean of their target positions; the map stays
    // monotone, non-strictly at such plateaus.
    let mut xs: Vec<f64> = Vec::with_capacity(marks.len());
    let mut ys: Vec<f64> = Vec::with_capacity(marks.len());
    let mut i = 0;
    while i < marks.len() {
        let mut j = i;
        let mut ysum = 0.0;
        while j < marks.len() && marks[j] == marks[i] {
            ysum += scale.standard_positions[j];
            j += 1;
        }
        xs.push(marks[i]);
        ys.push(ysum / (j - i) as f64);
        i = j;
    }

    let map = move |v: f64| -> f64 {
        let n = xs.len();
        if v <= xs[0] {
            let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            return ys[0] + (v - xs[0]) * slope;
        }
        if v >= xs[n - 1] {
            let slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
            return ys[n - 1] + (v - xs[n - 1]) * slope;
        }
        let seg = xs.partition_point(|&x| x <= v) - 1;
        let t = (v - xs[seg]) / (xs[seg + 1] - xs[seg]);
        ys[seg] + t * (ys[seg + 1] - ys[seg])
    };
    Ok(volume.map_intensities("standardized:nyul", map))
}

/// IAMLAB mode-alignment scaling: multiply the whole volume by
/// `reference_mode / detected_mode` so the in-mask histogram mode lands on
/// the reference (within one bin width).
pub fn iamlab_normalize(
    volume: &Volume,
    mask: &Mask,
    reference_mode: f64,
) -> Result<Volume, StandardizeError> {
    iamlab_normalize_with(
        volume,
        mask,
        reference_mode,
        DEFAULT_BINS,
        DEFAULT_MODE_SMOOTH_BINS,
    )
}

pub fn iamlab_normalize_with(
    volume: &Volume,
    mask: &Mask,
    reference_mode: f64,
    bins: usize,
    smooth_bins: usize,
) -> Result<Volume, StandardizeError> {
    if !(reference_mode.is_finite() && reference_mode > 0.0) {
        return Err(StandardizeError::NonPositiveMode(reference_mode));
    }
    let hist = volume.histogram(mask, bins, None).map_err(|e| match e {
        VolumeError::DegenerateRange { .. } => {
            StandardizeError::ModeNotFound("constant in-mask intensities".into())
        }
        other => StandardizeError::Volume(other),
    })?;
    let mode = find_histogram_mode(&hist, smooth_bins)
        .map_err(|e| StandardizeError::ModeNotFound(e.to_string()))?;
    if mode.mode_intensity <= 0.0 {
        return Err(StandardizeError::NonPositiveMode(mode.mode_intensity));
    }
    let factor = reference_mode / mode.mode_intensity;
    Ok(volume.map_intensities("standardized:iamlab", move |v| v * factor))
}

/// The five preprocessing variants a segmentation model can be trained
/// on: the original data plus the four standardization methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Original,
    Zscore,
    WhiteStripe,
    Nyul,
    Iamlab,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Original,
        Method::Zscore,
        Method::WhiteStripe,
        Method::Nyul,
        Method::Iamlab,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Zscore => "zscore",
            Method::WhiteStripe => "whitestripe",
            Method::Nyul => "nyul",
            Method::Iamlab => "iamlab",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Method::Original),
            "zscore" | "z-score" => Ok(Method::Zscore),
            "whitestripe" | "white-stripe" => Ok(Method::WhiteStripe),
            "nyul" => Ok(Method::Nyul),
            "iamlab" => Ok(Method::Iamlab),
            other => Err(format!(
                "unknown method '{other}' (expected original, zscore, whitestripe, nyul or iamlab)"
            )),
        }
    }
}

/// Tunable parameters consumed by [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// White Stripe quantile half-width.
    pub tau: f64,
    /// Bias-field lowpass standard deviation in mm (IAMLAB only).
    pub sigma_mm: f64,
    /// Target histogram mode (IAMLAB only).
    pub reference_mode: f64,
    /// Histogram bins for mode detection.
    pub bins: usize,
    /// Moving-average window for mode detection.
    pub mode_smooth_bins: usize,
    /// Trained scale, required by the Nyul method.
    pub nyul_scale: Option<StandardScale>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            tau: DEFAULT_TAU,
            sigma_mm: DEFAULT_SIGMA_MM,
            reference_mode: DEFAULT_REFERENCE_MODE,
            bins: DEFAULT_BINS,
            mode_smooth_bins: DEFAULT_MODE_SMOOTH_BINS,
            nyul_scale: None,
        }
    }
}

/// Run one preprocessing variant on a volume.
///
/// `original` is a pass-through. The IAMLAB variant runs the full
/// pipeline (median denoise, bias correction, mode scaling); the other
/// methods are standalone normalizations without denoise/bias stages.
pub fn run_pipeline(
    volume: &Volume,
    mask: &Mask,
    method: Method,
    params: &PipelineParams,
) -> Result<Volume, StandardizeError> {
    check_dims(volume.dims(), mask.dims()).map_err(StandardizeError::Volume)?;
    match method {
        Method::Original => Ok(volume.clone()),
        Method::Zscore => zscore_normalize(volume, mask),
        Method::WhiteStripe => whitestripe_normalize(volume, mask, params.tau),
        Method::Nyul => {
            let scale = params
                .nyul_scale
                .as_ref()
                .ok_or(StandardizeError::MissingParams(
                    "nyul requires a trained standard scale",
                ))?;
            nyul_apply(volume, mask, scale)
        }
        Method::Iamlab => {
            let denoised = median_filter_3x3(volume)?;
            let corrected = bias_correct(&denoised, mask, params.sigma_mm)?;
            iamlab_normalize_with(
                &corrected,
                mask,
                params.reference_mode,
                params.bins,
                params.mode_smooth_bins,
            )
        }
    }
}
