//! `flairnorm report`: dataset histogram-alignment report across
//! standardization methods, per-volume histogram export for plotting,
//! and Welch t-test significance against the original-data baseline.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use flairnorm::metrics::{
    dataset_alignment_report, fmt_g6, read_eval_csv, AlignmentReport, EvalRecord,
    DEFAULT_KL_EPSILON,
};
use flairnorm::nifti::{read_mask, read_volume};
use flairnorm::standardize::{
    run_pipeline, Method, PipelineParams, DEFAULT_MODE_SMOOTH_BINS, DEFAULT_REFERENCE_MODE,
    DEFAULT_SIGMA_MM, DEFAULT_TAU,
};
use flairnorm::stats::significance_test;
use flairnorm::volume::{Mask, MaskKind, Volume, DEFAULT_BINS};

use crate::manifest::{FileEntry, RunManifest, Status};
use crate::pairing::{pair_inputs, stem, thread_pool};

#[derive(Args)]
pub struct ReportArgs {
    /// Input volumes (.nii/.nii.gz) or directories of them
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding `<stem>_mask.nii[.gz]` brain masks
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// JSON pairs file overriding stem-based mask lookup
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Comma-separated methods to report on (default: original, zscore,
    /// whitestripe, iamlab, plus nyul when --scale is given)
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Trained Nyul scale JSON
    #[arg(long)]
    pub scale: Option<PathBuf>,
    /// Target histogram mode for IAMLAB scaling
    #[arg(long, default_value_t = DEFAULT_REFERENCE_MODE)]
    pub reference_mode: f64,
    /// White Stripe quantile half-width
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Bias-field lowpass standard deviation in mm
    #[arg(long, default_value_t = DEFAULT_SIGMA_MM)]
    pub sigma_mm: f64,
    /// Histogram bins for the alignment report
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Evaluation CSVs for significance testing, as `method=path`;
    /// must include `original=...` as the baseline
    #[arg(long = "eval-csv")]
    pub eval_csv: Vec<String>,
    /// Use a paired t-test (matched by volume id) instead of Welch
    #[arg(long)]
    pub paired: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Omit timestamps so reruns are byte-identical
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Serialize)]
struct ReportParams {
    methods: Vec<String>,
    reference_mode: f64,
    tau: f64,
    sigma_mm: f64,
    bins: usize,
    paired: bool,
}

fn resolve_methods(args: &ReportArgs) -> Result<Vec<Method>> {
    if args.methods.is_empty() {
        let mut methods = vec![
            Method::Original,
            Method::Zscore,
            Method::WhiteStripe,
            Method::Iamlab,
        ];
        if args.scale.is_some() {
            methods.insert(3, Method::Nyul);
        }
        return Ok(methods);
    }
    let mut methods = Vec::new();
    for name in &args.methods {
        let method = Method::from_str(name).map_err(|e| anyhow::anyhow!(e))?;
        if method == Method::Nyul && args.scale.is_none() {
            bail!("--methods includes nyul but no --scale was given");
        }
        methods.push(method);
    }
    Ok(methods)
}

pub fn run(args: ReportArgs) -> Result<i32> {
    let methods = resolve_methods(&args)?;
    let params = PipelineParams {
        tau: args.tau,
        sigma_mm: args.sigma_mm,
        reference_mode: args.reference_mode,
        bins: args.bins,
        mode_smooth_bins: DEFAULT_MODE_SMOOTH_BINS,
        nyul_scale: match &args.scale {
            Some(path) => Some(super::load_scale(path)?),
            None => None,
        },
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let pairing = pair_inputs(&args.inputs, args.masks.as_deref(), args.pairs.as_deref())?;
    if pairing.pairs.len() < 2 {
        bail!(
            "alignment report needs at least 2 paired volumes, found {}",
            pairing.pairs.len()
        );
    }

    let mut manifest = RunManifest::new(
        "report",
        ReportParams {
            methods: methods.iter().map(|m| m.to_string()).collect(),
            reference_mode: args.reference_mode,
            tau: args.tau,
            sigma_mm: args.sigma_mm,
            bins: args.bins,
            paired: args.paired,
        },
        args.reproducible,
    );
    for missing in &pairing.unmatched {
        manifest.files.push(FileEntry {
            input: missing.display().to_string(),
            mask: None,
            method: None,
            output: None,
            status: Status::Failed,
            error: Some("no mask found".to_owned()),
        });
    }

    let pool = thread_pool(args.jobs)?;
    // load every paired volume once
    let loaded: Vec<(String, Result<(Volume, Mask)>)> = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .map(|(volume_path, mask_path)| {
                let id = stem(volume_path);
                let result = (|| -> Result<(Volume, Mask)> {
                    let volume = read_volume(volume_path)
                        .with_context(|| format!("loading {}", volume_path.display()))?;
                    let mask = read_mask(mask_path, MaskKind::Icv)
                        .with_context(|| format!("loading {}", mask_path.display()))?;
                    Ok((volume, mask))
                })();
                (id, result)
            })
            .collect()
    });
    let mut cohort: Vec<(String, Volume, Mask)> = Vec::new();
    for ((volume_path, mask_path), (id, result)) in pairing.pairs.iter().zip(loaded) {
        match result {
            Ok((volume, mask)) => cohort.push((id, volume, mask)),
            Err(err) => manifest.files.push(FileEntry {
                input: volume_path.display().to_string(),
                mask: Some(mask_path.display().to_string()),
                method: None,
                output: None,
                status: Status::Failed,
                error: Some(format!("{err:#}")),
            }),
        }
    }

    // standardize and measure alignment per method
    let mut reports: Vec<(Method, AlignmentReport)> = Vec::new();
    for &method in &methods {
        let standardized: Vec<(String, Result<Volume>)> = pool.install(|| {
            cohort
                .par_iter()
                .map(|(id, volume, mask)| {
                    let out = run_pipeline(volume, mask, method, &params)
                        .with_context(|| format!("{method} on {id}"));
                    (id.clone(), out)
                })
                .collect()
        });
        let mut items: Vec<(String, Volume, &Mask)> = Vec::new();
        for ((id, result), (_, _, mask)) in standardized.into_iter().zip(cohort.iter()) {
            match result {
                Ok(volume) => items.push((id.clone(), volume, mask)),
                Err(err) => manifest.files.push(FileEntry {
                    input: id,
                    mask: None,
                    method: Some(method.to_string()),
                    output: None,
                    status: Status::Failed,
                    error: Some(format!("{err:#}")),
                }),
            }
        }
        if items.len() < 2 {
            log::warn!("{method}: fewer than 2 volumes standardized, skipping alignment");
            continue;
        }
        let borrowed: Vec<(&str, &Volume, &Mask)> = items
            .iter()
            .map(|(id, volume, mask)| (id.as_str(), volume, *mask))
            .collect();
        let report =
            dataset_alignment_report(&borrowed, method.name(), args.bins, DEFAULT_KL_EPSILON)?;
        for (id, _, _) in &items {
            manifest.files.push(FileEntry {
                input: id.clone(),
                mask: None,
                method: Some(method.to_string()),
                output: None,
                status: Status::Ok,
                error: None,
            });
        }
        reports.push((method, report));
    }

    write_alignment_csvs(&args, &reports)?;
    write_histograms_csv(&args, &reports)?;
    if !args.eval_csv.is_empty() {
        write_significance_json(&args)?;
    }
    manifest.write(&args.out.join("manifest.json"))?;

    for (method, report) in &reports {
        println!("report: {method} mean KL = {}", fmt_g6(report.mean_kl));
    }
    Ok(manifest.exit_code())
}

fn write_alignment_csvs(args: &ReportArgs, reports: &[(Method, AlignmentReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(args.out.join("alignment.csv"))?;
    w.write_record(["volume_id", "method", "kl_divergence"])?;
    for (_, report) in reports {
        for record in &report.records {
            w.write_record(&[
                record.volume_id.clone(),
                record.method.clone(),
                fmt_g6(record.kl_divergence),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(args.out.join("alignment_summary.csv"))?;
    w.write_record(["method", "mean_kl", "n"])?;
    for (method, report) in reports {
        w.write_record(&[
            method.to_string(),
            fmt_g6(report.mean_kl),
            report.records.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_histograms_csv(args: &ReportArgs, reports: &[(Method, AlignmentReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(args.out.join("histograms.csv"))?;
    w.write_record([
        "method",
        "volume_id",
        "bin",
        "edge_lo",
        "edge_hi",
        "density",
    ])?;
    for (method, report) in reports {
        for (record, hist) in report.records.iter().zip(&report.per_volume) {
            for b in 0..hist.bins() {
                w.write_record(&[
                    method.to_string(),
                    record.volume_id.clone(),
                    b.to_string(),
                    fmt_g6(hist.edges()[b]),
                    fmt_g6(hist.edges()[b + 1]),
                    fmt_g6(hist.counts()[b]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

type MetricExtractor = fn(&EvalRecord) -> Option<f64>;

/// Metrics tested for significance; AVD is exempt from Box-Cox.
const SIGNIFICANCE_METRICS: [(&str, MetricExtractor, bool); 6] = [
    ("dsc", |r| Some(r.dsc), true),
    ("ef", |r| r.ef, true),
    ("h95_mm", |r| r.h95_mm, true),
    ("avd_percent", |r| r.avd_percent, false),
    ("f1_lesion", |r| Some(r.f1_lesion), true),
    ("recall_lesion", |r| Some(r.recall_lesion), true),
];

fn write_significance_json(args: &ReportArgs) -> Result<()> {
    let mut by_method: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
    for spec in &args.eval_csv {
        let (method, path) = spec
            .split_once('=')
            .with_context(|| format!("--eval-csv '{spec}' is not method=path"))?;
        let file = std::fs::File::open(path).with_context(|| format!("opening {path}"))?;
        by_method.insert(method.to_owned(), read_eval_csv(file)?);
    }
    let baseline = by_method
        .remove("original")
        .context("--eval-csv needs an original=<csv> baseline entry")?;

    let mut entries = Vec::new();
    for (metric, extract, boxcox) in SIGNIFICANCE_METRICS {
        for (method, records) in &by_method {
            let (a, b): (Vec<f64>, Vec<f64>) = if args.paired {
                let base_by_id: BTreeMap<&str, &EvalRecord> =
                    baseline.iter().map(|r| (r.volume_id.as_str(), r)).collect();
                let mut a = Vec::new();
                let mut b = Vec::new();
                for record in records {
                    if let (Some(x), Some(base)) =
                        (extract(record), base_by_id.get(record.volume_id.as_str()))
                    {
                        if let Some(y) = extract(base) {
                            a.push(x);
                            b.push(y);
                        }
                    }
                }
                (a, b)
            } else {
                (
                    records.iter().filter_map(extract).collect(),
                    baseline.iter().filter_map(extract).collect(),
                )
            };
            if a.len() < 2 || b.len() < 2 {
                log::warn!("{method}/{metric}: too few values for a t-test, skipped");
                continue;
            }
            match significance_test(metric, method, &a, &b, boxcox, args.paired) {
                Ok(entry) => entries.push(entry),
                Err(err) => log::warn!("{method}/{metric}: {err}"),
            }
        }
    }
    let mut json = serde_json::to_string_pretty(&entries)?;
    json.push('\n');
    std::fs::write(args.out.join("significance.json"), json)?;
    Ok(())
}
