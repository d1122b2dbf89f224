//! Evaluation records and their CSV schema.
//!
//! The CSV layout is a stable interface:
//! `volume_id,method,dsc,ef,h95_mm,avd_percent,f1_lesion,recall_lesion,lesion_load_ml,ll_bin`
//! with floats printed to 6 significant digits and undefined metrics
//! (empty ground truth) written as the `NA` sentinel.

use std::io::{Read, Write};
use std::str::FromStr;

use super::detection::lesion_detection;
use super::overlap::{avd, dsc, extra_fraction};
use super::surface::h95;
use super::{check_mask_dims, MetricsError};
use crate::volume::Mask;

pub const EVAL_CSV_HEADER: &str =
    "volume_id,method,dsc,ef,h95_mm,avd_percent,f1_lesion,recall_lesion,lesion_load_ml,ll_bin";

/// Lesion-load stratum. Lower edges are inclusive: exactly 10 mL falls in
/// the middle bin, exactly 25 mL in the top bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LesionLoadBin {
    Lt10,
    TenTo25,
    Ge25,
}

impl LesionLoadBin {
    pub fn from_ml(ml: f64) -> Self {
        if ml < 10.0 {
            LesionLoadBin::Lt10
        } else if ml < 25.0 {
            LesionLoadBin::TenTo25
        } else {
            LesionLoadBin::Ge25
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LesionLoadBin::Lt10 => "LT10",
            LesionLoadBin::TenTo25 => "TEN_TO_25",
            LesionLoadBin::Ge25 => "GE25",
        }
    }
}

impl std::fmt::Display for LesionLoadBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LesionLoadBin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LT10" => Ok(LesionLoadBin::Lt10),
            "TEN_TO_25" => Ok(LesionLoadBin::TenTo25),
            "GE25" => Ok(LesionLoadBin::Ge25),
            other => Err(format!("unknown lesion-load bin '{other}'")),
        }
    }
}

/// One evaluated prediction/ground-truth pair.
///
/// `ef`, `h95_mm` and `avd_percent` are `None` when the ground truth (or,
/// for H95, either mask) is empty; those rows carry the `NA` sentinel in
/// CSV instead of aborting a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub volume_id: String,
    pub method: String,
    pub dsc: f64,
    pub ef: Option<f64>,
    pub h95_mm: Option<f64>,
    pub avd_percent: Option<f64>,
    pub f1_lesion: f64,
    pub recall_lesion: f64,
    pub lesion_load_ml: f64,
    pub ll_bin: LesionLoadBin,
}

/// Per-volume histogram-alignment record.
#[derive(Debug, Clone, PartialEq)]
pub struct KlRecord {
    pub volume_id: String,
    pub method: String,
    pub kl_divergence: f64,
}

/// Run the whole metric suite on one mask pair.
pub fn evaluate_pair(
    volume_id: &str,
    method: &str,
    pred: &Mask,
    gt: &Mask,
    spacing: (f64, f64, f64),
) -> Result<EvalRecord, MetricsError> {
    check_mask_dims(pred.dims(), gt.dims())?;
    let gt_empty = gt.foreground_count() == 0;
    let pred_empty = pred.foreground_count() == 0;

    let detection = lesion_detection(pred, gt)?;
    let lesion_load = gt.lesion_load_ml(spacing);
    Ok(EvalRecord {
        volume_id: volume_id.to_owned(),
        method: method.to_owned(),
        dsc: dsc(pred, gt)?,
        ef: if gt_empty {
            None
        } else {
            Some(extra_fraction(pred, gt)?)
        },
        h95_mm: if gt_empty || pred_empty {
            None
        } else {
            Some(h95(pred, gt, spacing)?)
        },
        avd_percent: if gt_empty {
            None
        } else {
            Some(avd(pred, gt, spacing)?)
        },
        f1_lesion: detection.f1,
        recall_lesion: detection.recall,
        lesion_load_ml: lesion_load,
        ll_bin: LesionLoadBin::from_ml(lesion_load),
    })
}

/// Format a float with 6 significant digits.
///
/// Plain decimal notation inside [1e-5, 1e6), scientific outside, and
/// trailing zeros trimmed, so re-parsing and re-formatting a value is
/// byte-stable.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if x.is_nan() {
        return "NA".to_owned();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_owned();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // round to 6 significant digits, then re-derive the exponent in case
    // rounding crossed a power of ten (e.g. 0.99999995 -> 1)
    let scale = 10f64.powi(5 - exp);
    let rounded = (x * scale).round() / scale;
    exp = rounded.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_trailing_zeros(format!("{rounded:.decimals$}"))
    } else {
        let mantissa = rounded / 10f64.powi(exp);
        format!("{}e{exp}", trim_trailing_zeros(format!("{mantissa:.5}")))
    }
}

fn trim_trailing_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_g6).unwrap_or_else(|| "NA".to_owned())
}

/// Write evaluation records in the stable CSV schema.
pub fn write_eval_csv<W: Write>(writer: W, records: &[EvalRecord]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVAL_CSV_HEADER.split(','))?;
    for r in records {
        w.write_record(&[
            r.volume_id.clone(),
            r.method.clone(),
            fmt_g6(r.dsc),
            opt_field(r.ef),
            opt_field(r.h95_mm),
            opt_field(r.avd_percent),
            fmt_g6(r.f1_lesion),
            fmt_g6(r.recall_lesion),
            fmt_g6(r.lesion_load_ml),
            r.ll_bin.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read records written by [`write_eval_csv`].
pub fn read_eval_csv<R: Read>(reader: R) -> Result<Vec<EvalRecord>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let field = |i: usize, name: &'static str| -> Result<&str, MetricsError> {
            rec.get(i).ok_or(MetricsError::CsvField {
                row,
                field: name,
                message: "missing".to_owned(),
            })
        };
        let float = |i: usize, name: &'static str| -> Result<f64, MetricsError> {
            let s = field(i, name)?;
            s.parse::<f64>().map_err(|e| MetricsError::CsvField {
                row,
                field: name,
                message: e.to_string(),
            })
        };
        let opt_float = |i: usize, name: &'static str| -> Result<Option<f64>, MetricsError> {
            let s = field(i, name)?;
            if s == "NA" {
                Ok(None)
            } else {
                float(i, name).map(Some)
            }
        };
        out.push(EvalRecord {
            volume_id: field(0, "volume_id")?.to_owned(),
            method: field(1, "method")?.to_owned(),
            dsc: float(2, "dsc")?,
            ef: opt_float(3, "ef")?,
            h95_mm: opt_float(4, "h95_mm")?,
            avd_percent: opt_float(5, "avd_percent")?,
            f1_lesion: float(6, "f1_lesion")?,
            recall_lesion: float(7, "recall_lesion")?,
            lesion_load_ml: float(8, "lesion_load_ml")?,
            ll_bin: LesionLoadBin::from_str(field(9, "ll_bin")?).map_err(|message| {
                MetricsError::CsvField {
                    row,
                    field: "ll_bin",
                    message,
                }
            })?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::MaskKind;

    #[test]
    fn ll_bin_edges_are_lower_inclusive() {
        assert_eq!(LesionLoadBin::from_ml(9.999), LesionLoadBin::Lt10);
        assert_eq!(LesionLoadBin::from_ml(10.0), LesionLoadBin::TenTo25);
        assert_eq!(LesionLoadBin::from_ml(24.999), LesionLoadBin::TenTo25);
        assert_eq!(LesionLoadBin::from_ml(25.0), LesionLoadBin::Ge25);
        assert_eq!(LesionLoadBin::from_ml(0.0), LesionLoadBin::Lt10);
    }

    #[test]
    fn fmt_g6_cases() {
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(1.0), "1");
        assert_eq!(fmt_g6(0.5), "0.5");
        assert_eq!(fmt_g6(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_g6(156.98), "156.98");
        assert_eq!(fmt_g6(-156.98), "-156.98");
        assert_eq!(fmt_g6(4.43141016), "4.43141");
        assert_eq!(fmt_g6(1234567.0), "1.23457e6");
        assert_eq!(fmt_g6(0.0000001234), "1.234e-7");
        assert_eq!(fmt_g6(0.99999995), "1");
    }

    #[test]
    fn fmt_g6_is_stable_after_reparse() {
        for &x in &[
            2.0 / 3.0,
            156.98,
            1.0e-7,
            0.05,
            99.99999,
            -4.43141016,
            3.5e8,
        ] {
            let once = fmt_g6(x);
            let twice = fmt_g6(once.parse::<f64>().unwrap());
            assert_eq!(once, twice, "unstable for {x}");
        }
    }

    fn sample_records() -> Vec<EvalRecord> {
        // values already at 6-significant-digit precision: that is the
        // schema's resolution, so these survive the round trip exactly
        vec![
            EvalRecord {
                volume_id: "scanA_001".into(),
                method: "iamlab".into(),
                dsc: 0.666667,
                ef: Some(0.5),
                h95_mm: Some(6.0),
                avd_percent: Some(50.0),
                f1_lesion: 1.0,
                recall_lesion: 1.0,
                lesion_load_ml: 12.5,
                ll_bin: LesionLoadBin::TenTo25,
            },
            EvalRecord {
                volume_id: "scanB_002".into(),
                method: "iamlab".into(),
                dsc: 0.0,
                ef: None,
                h95_mm: None,
                avd_percent: None,
                f1_lesion: 0.0,
                recall_lesion: 1.0,
                lesion_load_ml: 0.0,
                ll_bin: LesionLoadBin::Lt10,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_lossless_and_byte_stable() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(EVAL_CSV_HEADER));
        assert!(text.contains("NA"));

        let back = read_eval_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);

        let mut buf2 = Vec::new();
        write_eval_csv(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn evaluate_pair_flags_empty_ground_truth() {
        let dims = (4, 4, 4);
        let mut bits = vec![false; 64];
        bits[10] = true;
        let pred = Mask::new(dims, MaskKind::Wml, bits).unwrap();
        let gt = Mask::new(dims, MaskKind::Wml, vec![false; 64]).unwrap();
        let rec = evaluate_pair("v1", "zscore", &pred, &gt, (1.0, 1.0, 1.0)).unwrap();
        assert_eq!(rec.ef, None);
        assert_eq!(rec.h95_mm, None);
        assert_eq!(rec.avd_percent, None);
        assert_eq!(rec.dsc, 0.0);
        assert_eq!(rec.lesion_load_ml, 0.0);
        assert_eq!(rec.ll_bin, LesionLoadBin::Lt10);
    }

    #[test]
    fn evaluate_pair_populates_every_metric_once() {
        let dims = (6, 6, 6);
        let mut pred_bits = vec![false; 216];
        let mut gt_bits = vec![false; 216];
        for i in 0..8 {
            gt_bits[i] = true;
            pred_bits[i] = i < 4;
        }
        let pred = Mask::new(dims, MaskKind::Wml, pred_bits).unwrap();
        let gt = Mask::new(dims, MaskKind::Wml, gt_bits).unwrap();
        let rec = evaluate_pair("v2", "nyul", &pred, &gt, (1.0, 1.0, 1.0)).unwrap();
        assert!((rec.dsc - 8.0 / 12.0).abs() < 1e-15);
        assert_eq!(rec.ef, Some(0.0));
        assert!(rec.h95_mm.is_some());
        assert_eq!(rec.avd_percent, Some(50.0));
        assert_eq!(rec.f1_lesion, 1.0);
    }
}
