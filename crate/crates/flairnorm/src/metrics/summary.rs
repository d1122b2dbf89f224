//! Stratified aggregation of evaluation records with coefficients of
//! variation.

use std::collections::BTreeMap;
use std::io::Write;

use super::records::{fmt_g6, EvalRecord};
use super::MetricsError;

/// Grouping key for [`stratified_summary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    /// Lesion-load stratum of the ground truth.
    LlBin,
    /// Scanner tag, taken as the `volume_id` prefix before the first `_`
    /// (ids without an underscore form their own group).
    Scanner,
    /// Normalization method tag.
    Method,
}

/// One (group, metric) aggregate. `cov` is `std/mean` and is absent when
/// the group mean is zero; groups with fewer than 2 values report std 0
/// and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: String,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub cov: Option<f64>,
    pub n: usize,
    pub flagged: bool,
}

type MetricExtractor = fn(&EvalRecord) -> Option<f64>;

const METRICS: [(&str, MetricExtractor); 7] = [
    ("dsc", |r| Some(r.dsc)),
    ("ef", |r| r.ef),
    ("h95_mm", |r| r.h95_mm),
    ("avd_percent", |r| r.avd_percent),
    ("f1_lesion", |r| Some(r.f1_lesion)),
    ("recall_lesion", |r| Some(r.recall_lesion)),
    ("lesion_load_ml", |r| Some(r.lesion_load_ml)),
];

fn group_key(record: &EvalRecord, group_by: GroupBy) -> String {
    match group_by {
        GroupBy::LlBin => record.ll_bin.to_string(),
        GroupBy::Method => record.method.clone(),
        GroupBy::Scanner => record
            .volume_id
            .split('_')
            .next()
            .unwrap_or(&record.volume_id)
            .to_owned(),
    }
}

/// Per-group mean, population std and CoV for every metric.
///
/// Rows come out sorted by (group, metric); metrics with no defined
/// values in a group are omitted.
pub fn stratified_summary(
    records: &[EvalRecord],
    group_by: GroupBy,
) -> Result<Vec<SummaryRow>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut groups: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(group_key(r, group_by)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (group, members) in groups {
        for (metric, extract) in METRICS {
            let values: Vec<f64> = members.iter().filter_map(|r| extract(r)).collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
            };
            let cov = if mean != 0.0 { Some(std / mean) } else { None };
            rows.push(SummaryRow {
                group: group.clone(),
                metric,
                mean,
                std,
                cov,
                n,
                flagged: n < 2,
            });
        }
    }
    Ok(rows)
}

/// CSV serialization of summary rows:
/// `group,metric,mean,std,cov,n,flagged`.
pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "metric", "mean", "std", "cov", "n", "flagged"])?;
    for r in rows {
        w.write_record(&[
            r.group.clone(),
            r.metric.to_owned(),
            fmt_g6(r.mean),
            fmt_g6(r.std),
            r.cov.map(fmt_g6).unwrap_or_else(|| "NA".to_owned()),
            r.n.to_string(),
            r.flagged.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
