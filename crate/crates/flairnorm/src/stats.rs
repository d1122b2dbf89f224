//! Statistical machinery: Box-Cox transformation, Welch/paired t-tests
//! and the per-volume DSC improvement analysis.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::metrics::EvalRecord;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("value {value} at index {index} is not positive, Box-Cox requires x > 0")]
    NonPositiveData { index: usize, value: f64 },
    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
    #[error("data is constant, the likelihood is degenerate")]
    DegenerateData,
    #[error("both samples have zero variance")]
    ZeroVarianceBoth,
    #[error("samples have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("record sets are not paired: {0}")]
    IdMismatch(String),
}

fn check_positive(data: &[f64]) -> Result<(), StatsError> {
    for (index, &value) in data.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(StatsError::NonPositiveData { index, value });
        }
    }
    Ok(())
}

/// Box-Cox power transform: `(x^λ - 1)/λ`, or `ln x` at λ = 0.
pub fn box_cox(data: &[f64], lambda: f64) -> Result<Vec<f64>, StatsError> {
    check_positive(data)?;
    Ok(data
        .iter()
        .map(|&x| {
            if lambda == 0.0 {
                x.ln()
            } else {
                (x.powf(lambda) - 1.0) / lambda
            }
        })
        .collect())
}

/// Profile log-likelihood of the Box-Cox model at a given lambda.
fn box_cox_llf(data: &[f64], log_sum: f64, lambda: f64) -> f64 {
    let n = data.len() as f64;
    let y: Vec<f64> = data
        .iter()
        .map(|&x| {
            if lambda == 0.0 {
                x.ln()
            } else {
                (x.powf(lambda) - 1.0) / lambda
            }
        })
        .collect();
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    -0.5 * n * var.ln() + (lambda - 1.0) * log_sum
}

/// Maximum-likelihood lambda: grid search over [-3, 3] in 0.01 steps,
/// refined by golden-section search inside the winning bracket.
/// Deterministic for a given input.
pub fn box_cox_fit(data: &[f64]) -> Result<f64, StatsError> {
    if data.len() < 10 {
        return Err(StatsError::TooFewSamples {
            required: 10,
            actual: data.len(),
        });
    }
    check_positive(data)?;
    let first = data[0];
    if data.iter().all(|&x| x == first) {
        return Err(StatsError::DegenerateData);
    }
    let log_sum: f64 = data.iter().map(|x| x.ln()).sum();

    const STEP: f64 = 0.01;
    let mut best_lambda = -3.0;
    let mut best_llf = f64::NEG_INFINITY;
    let steps = (6.0 / STEP).round() as usize;
    for s in 0..=steps {
        let lambda = -3.0 + s as f64 * STEP;
        let llf = box_cox_llf(data, log_sum, lambda);
        if llf > best_llf {
            best_llf = llf;
            best_lambda = lambda;
        }
    }

    // golden-section refinement in the bracket around the grid winner
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = (best_lambda - STEP).max(-3.0);
    let mut b = (best_lambda + STEP).min(3.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = box_cox_llf(data, log_sum, c);
    let mut fd = box_cox_llf(data, log_sum, d);
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = box_cox_llf(data, log_sum, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = box_cox_llf(data, log_sum, d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Two-sample t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn sample_mean_var(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    // evaluate in the lower tail for accuracy
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test with the Welch–Satterthwaite degrees
/// of freedom and a two-sided p-value.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples {
            required: 2,
            actual: a.len().min(b.len()),
        });
    }
    let (ma, va) = sample_mean_var(a);
    let (mb, vb) = sample_mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::ZeroVarianceBoth);
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest {
        t,
        df,
        p_two_sided: two_sided_p(t, df),
    })
}

/// Paired t-test: one-sample t on the per-pair differences. Identical
/// samples are a degenerate perfect agreement (t = 0, p = 1).
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewSamples {
            required: 2,
            actual: a.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
    let (mean, var) = sample_mean_var(&diffs);
    let n = diffs.len() as f64;
    let df = n - 1.0;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(TTest {
                t: 0.0,
                df,
                p_two_sided: 1.0,
            });
        }
        return Err(StatsError::ZeroVarianceBoth);
    }
    let t = mean / (var / n).sqrt();
    Ok(TTest {
        t,
        df,
        p_two_sided: two_sided_p(t, df),
    })
}

/// Significance report entry, serialized to JSON as
/// `{metric, method, lambda, t, df, p, significant_at_0.05}`.
#[derive(Debug, Clone, Serialize)]
pub struct SignificanceEntry {
    pub metric: String,
    pub method: String,
    /// Fitted Box-Cox lambda, `null` when the transform was skipped
    /// (AVD is exempt; non-positive data cannot be transformed).
    pub lambda: Option<f64>,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    #[serde(rename = "significant_at_0.05")]
    pub significant_at_0_05: bool,
}

/// Compare one metric distribution against the baseline, optionally
/// Box-Cox-transforming both samples with a lambda fitted on the pooled
/// data. The transform is skipped when `apply_box_cox` is false or when
/// the pooled data is not strictly positive or too small to fit.
pub fn significance_test(
    metric: &str,
    method: &str,
    method_values: &[f64],
    baseline_values: &[f64],
    apply_box_cox: bool,
    paired: bool,
) -> Result<SignificanceEntry, StatsError> {
    let mut lambda = None;
    let mut a = method_values.to_vec();
    let mut b = baseline_values.to_vec();
    if apply_box_cox {
        let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        if pooled.iter().all(|&x| x > 0.0) && pooled.len() >= 10 {
            if let Ok(l) = box_cox_fit(&pooled) {
                a = box_cox(&a, l)?;
                b = box_cox(&b, l)?;
                lambda = Some(l);
            }
        }
    }
    let test = if paired {
        paired_ttest(&a, &b)?
    } else {
        welch_ttest(&a, &b)?
    };
    Ok(SignificanceEntry {
        metric: metric.to_owned(),
        method: method.to_owned(),
        lambda,
        t: test.t,
        df: test.df,
        p: test.p_two_sided,
        significant_at_0_05: test.p_two_sided < 0.05,
    })
}

/// Per-volume DSC change of a method against the original-data baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    /// (volume_id, dsc_method - dsc_original), sorted by volume id.
    pub deltas: Vec<(String, f64)>,
    /// Fraction of volumes with a strictly positive change.
    pub fraction_improved: f64,
}

/// Pair records by volume id and report the DSC deltas. Both sets must
/// contain exactly the same ids.
pub fn dsc_improvement(
    method_records: &[EvalRecord],
    original_records: &[EvalRecord],
) -> Result<ImprovementReport, StatsError> {
    use std::collections::BTreeMap;
    let index = |records: &[EvalRecord]| -> Result<BTreeMap<String, f64>, StatsError> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.volume_id.clone(), r.dsc).is_some() {
                return Err(StatsError::IdMismatch(format!(
                    "duplicate volume_id '{}'",
                    r.volume_id
                )));
            }
        }
        Ok(map)
    };
    let by_method = index(method_records)?;
    let by_original = index(original_records)?;
    if by_method.len() != by_original.len() {
        return Err(StatsError::IdMismatch(format!(
            "{} vs {} volumes",
            by_method.len(),
            by_original.len()
        )));
    }
    let mut deltas = Vec::with_capacity(by_method.len());
    for (id, dsc_m) in &by_method {
        let dsc_o = by_original
            .get(id)
            .ok_or_else(|| StatsError::IdMismatch(format!("'{id}' missing from baseline")))?;
        deltas.push((id.clone(), dsc_m - dsc_o));
    }
    let improved = deltas.iter().filter(|(_, d)| *d > 0.0).count();
    let fraction_improved = if deltas.is_empty() {
        0.0
    } else {
        improved as f64 / deltas.len() as f64
    };
    Ok(ImprovementReport {
        deltas,
        fraction_improved,
    })
}
