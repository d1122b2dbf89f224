//! Volume/mask pairing and path utilities.
//!
//! Volumes pair with masks by filename stem: `X.nii.gz` matches
//! `X_mask.nii.gz` (or `.nii`) in the mask directory, which defaults to
//! the volume's own directory. A pairs file (JSON array of
//! `{"volume": ..., "mask": ...}`) overrides stem matching entirely.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// Filename without the `.nii` / `.nii.gz` suffix.
pub fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    name.strip_suffix(".nii").unwrap_or(name).to_owned()
}

fn is_nifti(path: &Path) -> bool {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
    matches!(name, Some(n) if n.ends_with(".nii") || n.ends_with(".nii.gz"))
}

/// Expand arguments that may be files or directories into a sorted,
/// deduplicated list of NIfTI files. `exclude_masks` drops `*_mask.nii*`
/// entries when scanning directories for volumes.
pub fn expand_inputs(inputs: &[PathBuf], exclude_masks: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in std::fs::read_dir(input)
                .with_context(|| format!("reading directory {}", input.display()))?
            {
                let path = entry?.path();
                if is_nifti(&path) && !(exclude_masks && stem(&path).ends_with("_mask")) {
                    files.push(path);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

#[derive(Debug, Deserialize)]
struct PairEntry {
    volume: PathBuf,
    mask: PathBuf,
}

#[derive(Debug)]
pub struct Pairing {
    /// (volume, mask) pairs sorted by volume path.
    pub pairs: Vec<(PathBuf, PathBuf)>,
    /// Volumes with no mask found.
    pub unmatched: Vec<PathBuf>,
}

fn find_mask(volume: &Path, masks_dir: Option<&Path>) -> Option<PathBuf> {
    let dir = masks_dir
        .map(Path::to_path_buf)
        .or_else(|| volume.parent().map(Path::to_path_buf))?;
    let base = stem(volume);
    for suffix in ["_mask.nii.gz", "_mask.nii"] {
        let candidate = dir.join(format!("{base}{suffix}"));
        if candidate.exists() {
            return Some(candidate);
        }
    }
    None
}

/// Pair volumes with their masks, either via a pairs file or by stem.
pub fn pair_inputs(
    inputs: &[PathBuf],
    masks_dir: Option<&Path>,
    pairs_file: Option<&Path>,
) -> Result<Pairing> {
    if let Some(file) = pairs_file {
        let text = std::fs::read_to_string(file)
            .with_context(|| format!("reading pairs file {}", file.display()))?;
        let entries: Vec<PairEntry> = serde_json::from_str(&text)
            .with_context(|| format!("parsing pairs file {}", file.display()))?;
        let mut pairs: Vec<(PathBuf, PathBuf)> =
            entries.into_iter().map(|e| (e.volume, e.mask)).collect();
        pairs.sort();
        return Ok(Pairing {
            pairs,
            unmatched: Vec::new(),
        });
    }

    let volumes = expand_inputs(inputs, true)?;
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for volume in volumes {
        match find_mask(&volume, masks_dir) {
            Some(mask) => pairs.push((volume, mask)),
            None => unmatched.push(volume),
        }
    }
    Ok(Pairing { pairs, unmatched })
}

/// Build a rayon thread pool honouring `--jobs` (None = all cores).
pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building thread pool")
}
