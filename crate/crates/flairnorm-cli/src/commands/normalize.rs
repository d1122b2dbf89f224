//! `flairnorm normalize`: batch intensity standardization.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use flairnorm::nifti::{read_mask, read_volume, write_volume, Datatype};
use flairnorm::standardize::{
    run_pipeline, Method, PipelineParams, DEFAULT_MODE_SMOOTH_BINS, DEFAULT_REFERENCE_MODE,
    DEFAULT_SIGMA_MM, DEFAULT_TAU,
};
use flairnorm::volume::{MaskKind, DEFAULT_BINS};

use crate::manifest::{FileEntry, RunManifest, Status};
use crate::pairing::{pair_inputs, stem, thread_pool};

#[derive(Args)]
pub struct NormalizeArgs {
    /// Input volumes (.nii/.nii.gz) or directories of them
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Standardization method: original, zscore, whitestripe, nyul, iamlab
    #[arg(long, value_parser = Method::from_str)]
    pub method: Method,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding `<stem>_mask.nii[.gz]` brain masks
    /// (defaults to each volume's directory)
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// JSON pairs file overriding stem-based mask lookup
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Trained Nyul scale JSON (required for --method nyul)
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
    /// Histogram bins for mode detection
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Omit timestamps so reruns are byte-identical
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Serialize)]
struct NormalizeParams {
    method: String,
    reference_mode: f64,
    tau: f64,
    sigma_mm: f64,
    bins: usize,
    scale: Option<String>,
}

pub fn run(args: NormalizeArgs) -> Result<i32> {
    let scale = match &args.scale {
        Some(path) => Some(super::load_scale(path)?),
        None => None,
    };
    if args.method == Method::Nyul && scale.is_none() {
        bail!("--method nyul requires --scale with a trained standard scale");
    }
    let params = PipelineParams {
        tau: args.tau,
        sigma_mm: args.sigma_mm,
        reference_mode: args.reference_mode,
        bins: args.bins,
        mode_smooth_bins: DEFAULT_MODE_SMOOTH_BINS,
        nyul_scale: scale,
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let pairing = pair_inputs(&args.inputs, args.masks.as_deref(), args.pairs.as_deref())?;

    let pool = thread_pool(args.jobs)?;
    let entries: Vec<FileEntry> = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .map(|(volume_path, mask_path)| {
                let output = args
                    .out
                    .join(format!("{}_{}.nii.gz", stem(volume_path), args.method));
                let result = (|| -> Result<()> {
                    let volume = read_volume(volume_path)?;
                    let mask = read_mask(mask_path, MaskKind::Icv)?;
                    let standardized = run_pipeline(&volume, &mask, args.method, &params)?;
                    write_volume(&standardized, &output, Datatype::Float32)?;
                    Ok(())
                })();
                let mut entry = FileEntry {
                    input: volume_path.display().to_string(),
                    mask: Some(mask_path.display().to_string()),
                    method: Some(args.method.to_string()),
                    output: Some(output.display().to_string()),
                    status: Status::Ok,
                    error: None,
                };
                if let Err(err) = result {
                    log::warn!("{} failed: {err:#}", volume_path.display());
                    entry.status = Status::Failed;
                    entry.error = Some(format!("{err:#}"));
                    entry.output = None;
                }
                entry
            })
            .collect()
    });

    let mut manifest = RunManifest::new(
        "normalize",
        NormalizeParams {
            method: args.method.to_string(),
            reference_mode: args.reference_mode,
            tau: args.tau,
            sigma_mm: args.sigma_mm,
            bins: args.bins,
            scale: args.scale.as_ref().map(|p| p.display().to_string()),
        },
        args.reproducible,
    );
    manifest.files = entries;
    for missing in &pairing.unmatched {
        manifest.files.push(FileEntry {
            input: missing.display().to_string(),
            mask: None,
            method: Some(args.method.to_string()),
            output: None,
            status: Status::Failed,
            error: Some("no mask found".to_owned()),
        });
    }
    manifest.write(&args.out.join("manifest.json"))?;

    let failures = manifest.failures();
    let total = manifest.files.len();
    println!(
        "normalize: {}/{} ok ({} failed), method {}",
        total - failures,
        total,
        failures,
        args.method
    );
    Ok(manifest.exit_code())
}
