//! Histogram alignment: KL divergence of each volume against the dataset
//! mean histogram. Low divergence means the method mapped the cohort onto
//! a common intensity distribution.

use super::records::KlRecord;
use super::MetricsError;
use crate::volume::{mean_histogram, Histogram, Mask, Volume};

/// Default smoothing constant added to both distributions before the
/// divergence is evaluated.
pub const DEFAULT_KL_EPSILON: f64 = 1e-9;

/// KL divergence `D(p || q)` between two normalized histograms on the
/// same bin grid.
///
/// Both distributions are epsilon-smoothed and renormalized first, so the
/// result is a true KL divergence: non-negative (up to float rounding)
/// and zero for identical inputs.
pub fn kl_divergence(
    vol_hist: &Histogram,
    ref_hist: &Histogram,
    epsilon: f64,
) -> Result<f64, MetricsError> {
    if vol_hist.edges() != ref_hist.edges() {
        return Err(MetricsError::EdgesMismatch);
    }
    if !vol_hist.is_normalized() || !ref_hist.is_normalized() {
        return Err(MetricsError::NotNormalized);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(MetricsError::NonPositiveEpsilon(epsilon));
    }
    let bins = vol_hist.bins() as f64;
    let p_total = 1.0 + bins * epsilon;
    let q_total = 1.0 + bins * epsilon;
    let mut d = 0.0;
    for (&p, &q) in vol_hist.counts().iter().zip(ref_hist.counts().iter()) {
        let ps = (p + epsilon) / p_total;
        let qs = (q + epsilon) / q_total;
        d += ps * (ps / qs).ln();
    }
    Ok(d)
}

/// Per-volume KL records against the dataset mean histogram.
#[derive(Debug, Clone)]
pub struct AlignmentReport {
    /// One record per volume, sorted by volume id.
    pub records: Vec<KlRecord>,
    /// Mean of the per-volume divergences.
    pub mean_kl: f64,
    /// The dataset mean histogram the divergences were measured against.
    pub mean: Histogram,
    /// Per-volume normalized histograms, in the same order as `records`.
    pub per_volume: Vec<Histogram>,
}

/// Histogram every volume on a shared bin grid (the union of the masked
/// ranges), build the dataset mean histogram, and measure each volume's
/// divergence from it.
pub fn dataset_alignment_report(
    items: &[(&str, &Volume, &Mask)],
    method: &str,
    bins: usize,
    epsilon: f64,
) -> Result<AlignmentReport, MetricsError> {
    if items.len() < 2 {
        return Err(MetricsError::TooFewVolumes(items.len()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, volume, mask) in items {
        let stats = volume.masked_stats(mask)?;
        lo = lo.min(stats.min);
        hi = hi.max(stats.max);
    }

    let mut entries: Vec<(&str, Histogram)> = items
        .iter()
        .map(|(id, volume, mask)| {
            let hist = volume.histogram(mask, bins, Some((lo, hi)))?;
            Ok((*id, hist.normalized()?))
        })
        .collect::<Result<_, MetricsError>>()?;
    entries.sort_by(|a, b| a.0.cmp(b.0));

    let hists: Vec<Histogram> = entries.iter().map(|(_, h)| h.clone()).collect();
    let mean = mean_histogram(&hists)?;

    let mut records = Vec::with_capacity(entries.len());
    for (id, hist) in &entries {
        records.push(KlRecord {
            volume_id: (*id).to_owned(),
            method: method.to_owned(),
            kl_divergence: kl_divergence(hist, &mean, epsilon)?,
        });
    }
    let mean_kl = records.iter().map(|r| r.kl_divergence).sum::<f64>() / records.len() as f64;
    Ok(AlignmentReport {
        records,
        mean_kl,
        mean,
        per_volume: hists,
    })
}
