//! Shared fixtures for the CLI integration and acceptance suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use flairnorm::nifti::{write_mask, write_volume, Datatype};
use flairnorm::volume::{Mask, MaskKind, Volume};

pub const SPACING: (f64, f64, f64) = (1.0, 1.0, 3.0);

/// Run the flairnorm binary; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_flairnorm"))
        .args(args)
        .env("FLAIRNORM_LOG", "error")
        .output()
        .expect("spawning flairnorm");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

/// Synthetic brain-like phantom: a box "ICV" region holding three tissue
/// classes (dominant bright WM, mid GM, dark CSF) with per-seed noise,
/// all strictly positive.
pub fn tissue_phantom(seed: u64, dims: (usize, usize, usize)) -> (Volume, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // overlapping tails keep the mixture density positive across the
    // whole intensity range, as in real FLAIR
    let wm = Normal::new(300.0f64, 22.0).unwrap();
    let gm = Normal::new(220.0f64, 22.0).unwrap();
    let csf = Normal::new(130.0f64, 22.0).unwrap();
    let (nx, ny, nz) = dims;
    let n = nx * ny * nz;
    let mut voxels = vec![60.0f64; n];
    let mut bits = vec![false; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                let inside = i >= 2 && i + 2 < nx && j >= 2 && j + 2 < ny;
                if inside {
                    bits[idx] = true;
                    // deterministic tissue assignment by position
                    let class = (i * 7 + j * 5 + k * 3) % 20;
                    voxels[idx] = if class < 12 {
                        wm.sample(&mut rng)
                    } else if class < 17 {
                        gm.sample(&mut rng)
                    } else {
                        csf.sample(&mut rng)
                    }
                    .max(80.0);
                } else {
                    // background dim but bright enough to survive any
                    // gain/offset combination this suite applies
                    voxels[idx] = rng.random_range(45.0..75.0);
                }
            }
        }
    }
    (
        Volume::new(dims, SPACING, voxels).unwrap(),
        Mask::new(dims, MaskKind::Icv, bits).unwrap(),
    )
}

/// A lesion mask with a few compact blobs inside the ICV box.
pub fn lesion_phantom(seed: u64, dims: (usize, usize, usize)) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny, nz) = dims;
    let mut bits = vec![false; nx * ny * nz];
    for _ in 0..3 {
        let ci = rng.random_range(4..nx.saturating_sub(4));
        let cj = rng.random_range(4..ny.saturating_sub(4));
        let ck = rng.random_range(1..nz.saturating_sub(1).max(2));
        let r = rng.random_range(1..3usize);
        for k in ck.saturating_sub(1)..(ck + 2).min(nz) {
            for j in cj.saturating_sub(r)..(cj + r + 1).min(ny) {
                for i in ci.saturating_sub(r)..(ci + r + 1).min(nx) {
                    bits[i + nx * (j + ny * k)] = true;
                }
            }
        }
    }
    Mask::new(dims, MaskKind::Wml, bits).unwrap()
}

/// Write `count` phantoms plus ICV masks into `dir` as
/// `scanX_{i:03}.nii.gz` / `scanX_{i:03}_mask.nii.gz`. Returns the
/// volume paths.
pub fn write_phantom_set(dir: &Path, count: usize, dims: (usize, usize, usize)) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    for i in 0..count {
        let (volume, mask) = tissue_phantom(1000 + i as u64, dims);
        let scanner = ["ge", "philips", "siemens"][i % 3];
        let volume_path = dir.join(format!("{scanner}_{i:03}.nii.gz"));
        let mask_path = dir.join(format!("{scanner}_{i:03}_mask.nii.gz"));
        write_volume(&volume, &volume_path, Datatype::Float32).unwrap();
        write_mask(&mask, &mask_path, SPACING).unwrap();
        paths.push(volume_path);
    }
    paths
}

/// Filename without the `.nii` / `.nii.gz` suffix.
pub fn run_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    name.strip_suffix(".nii").unwrap_or(name).to_owned()
}

pub fn read_to_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Recursively collect (relative path, bytes) for every file under dir.
pub fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
