//! Cross-implementation fixtures: files in tests/fixtures/ were written
//! by an independent generator (see generate.py there) straight from the
//! NIfTI-1 standard, so these tests catch any layout misunderstanding
//! shared between our reader and writer.

use std::path::PathBuf;

use flairnorm::nifti::read_volume;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn scaled_int16_fixture_applies_slope_and_intercept() {
    let v = read_volume(fixture("ref_int16_scaled.nii")).unwrap();
    assert_eq!(v.dims(), (4, 4, 4));
    // raw values are 0..64, scl_slope 2, scl_inter 1
    for (idx, &value) in v.voxels().iter().enumerate() {
        assert_eq!(value, idx as f64 * 2.0 + 1.0);
    }
    // raw value 3 lives at linear index 3
    assert_eq!(v.voxels()[3], 7.0);

    let (sx, sy, sz) = v.spacing();
    assert!((sx - 0.8594).abs() < 1e-4);
    assert!((sy - 0.8594).abs() < 1e-4);
    assert_eq!(sz, 3.0);
}

#[test]
fn gzip_fixture_loads_identically() {
    let plain = read_volume(fixture("ref_int16_scaled.nii")).unwrap();
    let gz = read_volume(fixture("ref_int16_scaled.nii.gz")).unwrap();
    assert_eq!(plain.voxels(), gz.voxels());
    assert_eq!(plain.spacing(), gz.spacing());
}

#[test]
fn big_endian_fixture_is_detected_and_decoded() {
    let le = read_volume(fixture("ref_int16_scaled.nii")).unwrap();
    let be = read_volume(fixture("ref_int16_scaled_be.nii")).unwrap();
    assert_eq!(le.voxels(), be.voxels());
    assert_eq!(le.spacing(), be.spacing());
}
