//! `flairnorm train-nyul`: fit a standard scale from training volumes.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use flairnorm::nifti::{read_mask, read_volume};
use flairnorm::standardize::{nyul_train, NyulConfig};
use flairnorm::volume::{Mask, MaskKind, Volume};

use crate::pairing::{pair_inputs, thread_pool};

#[derive(Args)]
pub struct TrainNyulArgs {
    /// Training volumes (.nii/.nii.gz) or directories of them
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output path for the trained scale JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding `<stem>_mask.nii[.gz]` brain masks
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// JSON pairs file overriding stem-based mask lookup
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(args: TrainNyulArgs) -> Result<i32> {
    let pairing = pair_inputs(&args.inputs, args.masks.as_deref(), args.pairs.as_deref())?;
    for missing in &pairing.unmatched {
        eprintln!("skipping {}: no mask found", missing.display());
    }

    let pool = thread_pool(args.jobs)?;
    let loaded: Vec<Result<(Volume, Mask)>> = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .map(|(volume_path, mask_path)| {
                let volume = read_volume(volume_path)
                    .with_context(|| format!("loading {}", volume_path.display()))?;
                let mask = read_mask(mask_path, MaskKind::Icv)
                    .with_context(|| format!("loading {}", mask_path.display()))?;
                Ok((volume, mask))
            })
            .collect()
    });

    let mut training = Vec::new();
    let mut skipped = pairing.unmatched.len();
    for result in &loaded {
        match result {
            Ok((volume, mask)) => training.push((volume, mask)),
            Err(err) => {
                eprintln!("skipping volume: {err:#}");
                skipped += 1;
            }
        }
    }
    if training.is_empty() {
        bail!("no usable training volumes");
    }

    let scale = nyul_train(&training, &NyulConfig::default())?;
    let mut json = serde_json::to_string_pretty(&scale)?;
    json.push('\n');
    std::fs::write(&args.out, json)
        .with_context(|| format!("writing scale {}", args.out.display()))?;
    println!(
        "train-nyul: fitted {} landmarks from {} volumes -> {}",
        scale.landmark_percentiles.len(),
        training.len(),
        args.out.display()
    );
    Ok(if skipped == 0 { 0 } else { 2 })
}
