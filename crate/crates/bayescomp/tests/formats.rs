use std::path::Path;

use bayescomp::features::{decode_bin, decode_csv, encode_bin, encode_csv, read_features, write_features};
use bayescomp::model_file::ModelFile;
use bayescomp_core::compensation::Provenance;
use proptest::prelude::*;

mod common;

fn as_f32(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    frames.iter().map(|f| f.iter().map(|&v| f64::from(v as f32)).collect()).collect()
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1e6f64..1e6, d), 0..12))
}

proptest! {
    #[test]
    fn csv_round_trips_at_f32_precision(frames in matrix()) {
        let d = frames.first().map_or(1, Vec::len);
        let back = decode_csv(&encode_csv(&frames, d), Path::new("m.csv")).unwrap();
        prop_assert_eq!(back, as_f32(&frames));
    }

    #[test]
    fn bin_round_trips_at_f32_precision(frames in matrix()) {
        let d = frames.first().map_or(1, Vec::len);
        let back = decode_bin(&encode_bin(&frames, d), Path::new("m.bncf")).unwrap();
        if frames.is_empty() {
            prop_assert!(back.is_empty());
        } else {
            prop_assert_eq!(back, as_f32(&frames));
        }
    }

    #[test]
    fn f32_values_are_fixed_points(frames in matrix()) {
        let once = as_f32(&frames);
        let d = frames.first().map_or(1, Vec::len);
        let again = decode_csv(&encode_csv(&once, d), Path::new("m.csv")).unwrap();
        prop_assert_eq!(again, once);
    }
}

#[test]
fn files_round_trip_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![vec![0.1, 1e-30, -7.25], vec![1.0 / 3.0, 2.0, f64::from(f32::MIN_POSITIVE)]];
    for name in ["f.csv", "f.bncf"] {
        let p = dir.path().join(name);
        write_features(&p, &frames).unwrap();
        assert_eq!(read_features(&p).unwrap(), as_f32(&frames));
    }
    assert!(write_features(&dir.path().join("f.txt"), &frames).is_err());
    assert!(write_features(&dir.path().join("g.csv"), &[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn model_files_round_trip_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::two_state("m", [[0.1, 1.0 / 3.0], [-2.5e-9, 7.0]], 0.7);
    let f = ModelFile::new(m, Some(Provenance::new("vts").with("note", "x")));
    let p = dir.path().join("m.json");
    f.write(&p).unwrap();
    let back = ModelFile::read(&p).unwrap();
    assert_eq!(back, f);
    assert_eq!(back.to_canonical_json(), std::fs::read_to_string(&p).unwrap());
}
