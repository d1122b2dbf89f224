//! `flairnorm evaluate`: score predicted lesion masks against ground
//! truth, emitting the records CSV plus a lesion-load-stratified summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;

use flairnorm::metrics::{
    evaluate_pair, stratified_summary, write_eval_csv, write_summary_csv, EvalRecord, GroupBy,
};
use flairnorm::nifti::read_mask_with_spacing;
use flairnorm::volume::MaskKind;

use crate::pairing::{expand_inputs, stem, thread_pool};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Predicted lesion masks (.nii/.nii.gz) or directories of them
    #[arg(required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth directory (or single file), matched by filename stem
    #[arg(long)]
    pub gt: PathBuf,
    /// Output CSV path; the stratified summary lands next to it as
    /// `<stem>_summary.csv`
    #[arg(long)]
    pub out: PathBuf,
    /// Method tag recorded in every row
    #[arg(long, default_value = "pred")]
    pub method: String,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "eval".to_owned());
    out.with_file_name(format!("{stem}_summary.csv"))
}

pub fn run(args: EvaluateArgs) -> Result<i32> {
    let preds = expand_inputs(&args.pred, false)?;
    let gts = expand_inputs(std::slice::from_ref(&args.gt), false)?;
    let gt_by_stem: BTreeMap<String, PathBuf> = gts.into_iter().map(|p| (stem(&p), p)).collect();

    let mut pairs: Vec<(String, PathBuf, PathBuf)> = Vec::new();
    let mut unpaired = Vec::new();
    for pred in preds {
        let id = stem(&pred);
        match gt_by_stem.get(&id) {
            Some(gt) => pairs.push((id, pred, gt.clone())),
            None => unpaired.push(pred),
        }
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    for path in &unpaired {
        eprintln!(
            "skipping {}: no ground truth with matching stem",
            path.display()
        );
    }

    let pool = thread_pool(args.jobs)?;
    let results: Vec<(String, Result<EvalRecord>)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(id, pred_path, gt_path)| {
                let record = (|| -> Result<EvalRecord> {
                    let (pred, pred_spacing) = read_mask_with_spacing(pred_path, MaskKind::Wml)
                        .with_context(|| format!("loading {}", pred_path.display()))?;
                    let (gt, gt_spacing) = read_mask_with_spacing(gt_path, MaskKind::Wml)
                        .with_context(|| format!("loading {}", gt_path.display()))?;
                    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * a.max(b);
                    if !(close(pred_spacing.0, gt_spacing.0)
                        && close(pred_spacing.1, gt_spacing.1)
                        && close(pred_spacing.2, gt_spacing.2))
                    {
                        anyhow::bail!(
                            "spacing mismatch: pred {pred_spacing:?} vs gt {gt_spacing:?}"
                        );
                    }
                    if gt.foreground_count() == 0 {
                        log::warn!("{id}: empty ground truth, EF/H95/AVD recorded as NA");
                    }
                    Ok(evaluate_pair(id, &args.method, &pred, &gt, gt_spacing)?)
                })();
                (id.clone(), record)
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failed = unpaired.len();
    for (id, result) in results {
        match result {
            Ok(record) => records.push(record),
            Err(err) => {
                eprintln!("{id}: {err:#}");
                failed += 1;
            }
        }
    }

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_eval_csv(file, &records)?;

    if !records.is_empty() {
        let rows = stratified_summary(&records, GroupBy::LlBin)?;
        let path = summary_path(&args.out);
        let file =
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_summary_csv(file, &rows)?;
    }

    println!(
        "evaluate: {} scored, {} failed -> {}",
        records.len(),
        failed,
        args.out.display()
    );
    Ok(if failed == 0 { 0 } else { 2 })
}
