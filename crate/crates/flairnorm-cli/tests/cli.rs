//! End-to-end tests of the flairnorm binary: flag handling, exit codes,
//! pairing behaviour and output schemas.

mod common;

use common::{lesion_phantom, read_to_bytes, run_cli, tissue_phantom, write_phantom_set, SPACING};
use flairnorm::metrics::read_eval_csv;
use flairnorm::nifti::{read_mask, read_volume, write_mask, write_volume, Datatype};
use flairnorm::standardize::{find_histogram_mode, DEFAULT_MODE_SMOOTH_BINS};
use flairnorm::volume::{MaskKind, DEFAULT_BINS};
use tempfile::tempdir;

const DIMS: (usize, usize, usize) = (20, 20, 8);

#[test]
fn normalize_original_is_bit_identical_payload() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let paths = write_phantom_set(&data, 1, DIMS);
    let out = dir.path().join("out");

    let (code, _, _) = run_cli(&[
        "normalize",
        paths[0].to_str().unwrap(),
        "--method",
        "original",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let input = read_volume(&paths[0]).unwrap();
    let output = read_volume(out.join("ge_000_original.nii.gz")).unwrap();
    assert_eq!(input.voxels(), output.voxels());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn normalize_missing_mask_fails_that_file_only() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let paths = write_phantom_set(&data, 2, DIMS);
    // strip the second phantom's mask
    std::fs::remove_file(data.join("philips_001_mask.nii.gz")).unwrap();
    let out = dir.path().join("out");

    let (code, _, _) = run_cli(&[
        "normalize",
        paths[0].to_str().unwrap(),
        paths[1].to_str().unwrap(),
        "--method",
        "zscore",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "partial failure must exit 2");
    assert!(out.join("ge_000_zscore.nii.gz").exists());
    assert!(!out.join("philips_001_zscore.nii.gz").exists());

    let manifest: serde_json::Value =
        serde_json::from_slice(&read_to_bytes(&out.join("manifest.json"))).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    let statuses: Vec<&str> = files
        .iter()
        .map(|f| f["status"].as_str().unwrap())
        .collect();
    assert!(statuses.contains(&"ok") && statuses.contains(&"failed"));
}

#[test]
fn normalize_iamlab_batch_hits_reference_mode() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_phantom_set(&data, 4, DIMS);
    let out = dir.path().join("out");

    let (code, _, stderr) = run_cli(&[
        "normalize",
        data.to_str().unwrap(),
        "--method",
        "iamlab",
        "--reference-mode",
        "0.75",
        "--sigma-mm",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    // every output's detected mode must sit on the reference within a bin
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if !path.to_string_lossy().ends_with(".nii.gz") {
            continue;
        }
        let volume = read_volume(&path).unwrap();
        let stem = common::run_stem(&path);
        let mask_path = data.join(format!("{}_mask.nii.gz", stem.trim_end_matches("_iamlab")));
        let mask = read_mask(&mask_path, MaskKind::Icv).unwrap();
        let hist = volume.histogram(&mask, DEFAULT_BINS, None).unwrap();
        let mode = find_histogram_mode(&hist, DEFAULT_MODE_SMOOTH_BINS).unwrap();
        let bin = (hist.edges()[DEFAULT_BINS] - hist.edges()[0]) / DEFAULT_BINS as f64;
        assert!(
            (mode.mode_intensity - 0.75).abs() <= bin,
            "{}: mode {} (bin {bin})",
            path.display(),
            mode.mode_intensity
        );
    }
}

#[test]
fn normalize_nyul_without_scale_is_fatal() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let paths = write_phantom_set(&data, 1, DIMS);
    let (code, _, stderr) = run_cli(&[
        "normalize",
        paths[0].to_str().unwrap(),
        "--method",
        "nyul",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("scale"), "stderr: {stderr}");
}

#[test]
fn train_nyul_is_deterministic_and_scale_invariant() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_phantom_set(&data, 3, DIMS);

    let scale_a = dir.path().join("a.json");
    let scale_b = dir.path().join("b.json");
    for out in [&scale_a, &scale_b] {
        let (code, _, stderr) = run_cli(&[
            "train-nyul",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {stderr}");
    }
    assert_eq!(
        read_to_bytes(&scale_a),
        read_to_bytes(&scale_b),
        "rerun must be byte-identical"
    );
}

#[test]
fn evaluate_perfect_predictions_score_dice_one() {
    let dir = tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let pred_dir = dir.path().join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    for i in 0..3 {
        let lesions = lesion_phantom(7 + i, DIMS);
        write_mask(&lesions, gt_dir.join(format!("v{i:02}.nii.gz")), SPACING).unwrap();
        write_mask(&lesions, pred_dir.join(format!("v{i:02}.nii.gz")), SPACING).unwrap();
    }
    let out = dir.path().join("eval.csv");
    let (code, _, stderr) = run_cli(&[
        "evaluate",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--method",
        "ensemble",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let records = read_eval_csv(read_to_bytes(&out).as_slice()).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        assert_eq!(r.dsc, 1.0);
        assert_eq!(r.ef, Some(0.0));
        assert_eq!(r.h95_mm, Some(0.0));
        assert_eq!(r.method, "ensemble");
    }
    assert!(dir.path().join("eval_summary.csv").exists());
}

#[test]
fn evaluate_empty_ground_truth_yields_na_row_not_crash() {
    let dir = tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let pred_dir = dir.path().join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    let empty = flairnorm::volume::Mask::new(DIMS, MaskKind::Wml, vec![false; 3200]).unwrap();
    write_mask(&empty, gt_dir.join("v00.nii.gz"), SPACING).unwrap();
    write_mask(
        &lesion_phantom(3, DIMS),
        pred_dir.join("v00.nii.gz"),
        SPACING,
    )
    .unwrap();

    let out = dir.path().join("eval.csv");
    let (code, _, _) = run_cli(&[
        "evaluate",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = String::from_utf8(read_to_bytes(&out)).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.contains("NA"), "row: {row}");
}

#[test]
fn evaluate_unpaired_prediction_exits_two() {
    let dir = tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let pred_dir = dir.path().join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    write_mask(&lesion_phantom(1, DIMS), gt_dir.join("a.nii.gz"), SPACING).unwrap();
    write_mask(&lesion_phantom(2, DIMS), pred_dir.join("a.nii.gz"), SPACING).unwrap();
    write_mask(
        &lesion_phantom(3, DIMS),
        pred_dir.join("orphan.nii.gz"),
        SPACING,
    )
    .unwrap();

    let out = dir.path().join("eval.csv");
    let (code, _, stderr) = run_cli(&[
        "evaluate",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("orphan"));
    let records = read_eval_csv(read_to_bytes(&out).as_slice()).unwrap();
    assert_eq!(records.len(), 1);
}

#[test]
fn ensemble_identical_masks_pass_through_file_round_trip() {
    let dir = tempdir().unwrap();
    let lesions = lesion_phantom(11, DIMS);
    let mut args_owned: Vec<String> = Vec::new();
    for i in 0..3 {
        let path = dir.path().join(format!("m{i}.nii.gz"));
        write_mask(&lesions, &path, SPACING).unwrap();
        args_owned.push(path.display().to_string());
    }
    let out = dir.path().join("fused.nii.gz");
    let mut args = vec!["ensemble"];
    args.extend(args_owned.iter().map(|s| s.as_str()));
    args.extend(["--out", out.to_str().unwrap()]);
    let (code, _, stderr) = run_cli(&args);
    assert_eq!(code, 0, "stderr: {stderr}");
    let fused = read_mask(&out, MaskKind::Wml).unwrap();
    assert_eq!(fused.bits(), lesions.bits());
}

#[test]
fn ensemble_file_round_trip_matches_in_memory_vote() {
    use rand::{Rng, SeedableRng};
    let dir = tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let n = DIMS.0 * DIMS.1 * DIMS.2;
    let stack: Vec<flairnorm::volume::Mask> = (0..5)
        .map(|_| {
            let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            flairnorm::volume::Mask::new(DIMS, MaskKind::Wml, bits).unwrap()
        })
        .collect();
    let mut args_owned = Vec::new();
    for (i, m) in stack.iter().enumerate() {
        let path = dir.path().join(format!("r{i}.nii.gz"));
        write_mask(m, &path, SPACING).unwrap();
        args_owned.push(path.display().to_string());
    }
    let out = dir.path().join("fused.nii.gz");
    let mut args = vec!["ensemble"];
    args.extend(args_owned.iter().map(|s| s.as_str()));
    args.extend(["--out", out.to_str().unwrap()]);
    let (code, _, stderr) = run_cli(&args);
    assert_eq!(code, 0, "stderr: {stderr}");

    let from_file = read_mask(&out, MaskKind::Wml).unwrap();
    let in_memory = flairnorm::ensemble::majority_vote(&stack).unwrap();
    assert_eq!(from_file.bits(), in_memory.bits());
}

#[test]
fn ensemble_single_mask_exits_one() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("m.nii.gz");
    write_mask(&lesion_phantom(5, DIMS), &path, SPACING).unwrap();
    let (code, _, _) = run_cli(&[
        "ensemble",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("out.nii.gz").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn report_identical_volumes_have_zero_kl() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    // two byte-identical volumes under different names
    let (volume, mask) = tissue_phantom(500, DIMS);
    for name in ["ge_000", "ge_001"] {
        write_volume(
            &volume,
            data.join(format!("{name}.nii.gz")),
            Datatype::Float32,
        )
        .unwrap();
        write_mask(&mask, data.join(format!("{name}_mask.nii.gz")), SPACING).unwrap();
    }
    let out = dir.path().join("report");
    let (code, _, stderr) = run_cli(&[
        "report",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--methods",
        "original,zscore",
        "--reproducible",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let summary = String::from_utf8(read_to_bytes(&out.join("alignment_summary.csv"))).unwrap();
    for line in summary.lines().skip(1) {
        let mean_kl: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mean_kl.abs() < 1e-9, "line: {line}");
    }
    // histogram CSV: one row per bin per volume per method
    let hist = String::from_utf8(read_to_bytes(&out.join("histograms.csv"))).unwrap();
    assert_eq!(hist.lines().count(), 1 + 2 * 2 * DEFAULT_BINS);
}

#[test]
fn report_with_eval_csvs_writes_significance_json() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_phantom_set(&data, 3, DIMS);

    // synthesize two evaluation CSVs with differing DSC distributions
    let gt_dir = dir.path().join("gt");
    let pred_a = dir.path().join("pred_a");
    let pred_b = dir.path().join("pred_b");
    for d in [&gt_dir, &pred_a, &pred_b] {
        std::fs::create_dir_all(d).unwrap();
    }
    for i in 0..4 {
        let gt = lesion_phantom(40 + i, DIMS);
        write_mask(&gt, gt_dir.join(format!("v{i:02}.nii.gz")), SPACING).unwrap();
        write_mask(&gt, pred_a.join(format!("v{i:02}.nii.gz")), SPACING).unwrap();
        // degraded prediction: drop roughly half the voxels
        let bits: Vec<bool> = gt
            .bits()
            .iter()
            .enumerate()
            .map(|(n, &b)| b && n % 2 == 0)
            .collect();
        let degraded = flairnorm::volume::Mask::new(DIMS, MaskKind::Wml, bits).unwrap();
        write_mask(&degraded, pred_b.join(format!("v{i:02}.nii.gz")), SPACING).unwrap();
    }
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    for (pred, csv, tag) in [(&pred_a, &csv_a, "iamlab"), (&pred_b, &csv_b, "original")] {
        let (code, _, _) = run_cli(&[
            "evaluate",
            pred.to_str().unwrap(),
            "--gt",
            gt_dir.to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
            "--method",
            tag,
        ]);
        assert_eq!(code, 0);
    }

    let out = dir.path().join("report");
    let (code, _, stderr) = run_cli(&[
        "report",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--methods",
        "original,zscore",
        "--eval-csv",
        &format!("original={}", csv_b.display()),
        "--eval-csv",
        &format!("iamlab={}", csv_a.display()),
        "--reproducible",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let significance: serde_json::Value =
        serde_json::from_slice(&read_to_bytes(&out.join("significance.json"))).unwrap();
    let entries = significance.as_array().unwrap();
    assert!(!entries.is_empty());
    let dsc_entry = entries
        .iter()
        .find(|e| e["metric"] == "dsc" && e["method"] == "iamlab")
        .expect("dsc entry present");
    assert!(dsc_entry["p"].as_f64().unwrap() <= 1.0);
    assert!(dsc_entry.get("significant_at_0.05").is_some());
}
