//! `flairnorm ensemble`: majority-vote fusion of lesion masks.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use flairnorm::ensemble::majority_vote;
use flairnorm::nifti::{read_mask_with_spacing, write_mask};
use flairnorm::volume::MaskKind;

use crate::pairing::expand_inputs;

#[derive(Args)]
pub struct EnsembleArgs {
    /// 2+ lesion masks to fuse (.nii/.nii.gz) or directories of them
    #[arg(required = true)]
    pub masks: Vec<PathBuf>,
    /// Output path for the fused uint8 mask
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EnsembleArgs) -> Result<i32> {
    let paths = expand_inputs(&args.masks, false)?;
    if paths.len() < 2 {
        bail!("majority vote needs at least 2 masks, got {}", paths.len());
    }
    let mut masks = Vec::with_capacity(paths.len());
    let mut spacing = None;
    for path in &paths {
        let (mask, s) = read_mask_with_spacing(path, MaskKind::Wml)
            .with_context(|| format!("loading {}", path.display()))?;
        spacing.get_or_insert(s);
        masks.push(mask);
    }
    let fused = majority_vote(&masks)?;
    write_mask(&fused, &args.out, spacing.expect("at least two masks"))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "ensemble: fused {} masks ({} foreground voxels) -> {}",
        masks.len(),
        fused.foreground_count(),
        args.out.display()
    );
    Ok(0)
}
