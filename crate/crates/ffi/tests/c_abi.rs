//! Exercises the C ABI the way a C caller would.

use std::ffi::{CStr, CString};
use std::ptr;

use mtwifi::ap_select::build_mask;
use mtwifi::data::save_csv;
use mtwifi::synthetic::{generate, SyntheticConfig};
use mtwifi::{CoordScaler, ModelKind, TrainedModel};
use mtwifi_ffi::*;
use tempfile::TempDir;

struct Fixture {
    _dir: TempDir,
    csv: CString,
    ckpt: CString,
    expected: TrainedModel,
    data: mtwifi::Dataset,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let data = generate(&SyntheticConfig::new(30, 4)).unwrap();
    let mask = build_mask(&data, None).unwrap();
    let spec = ModelKind::SimoDnn.build(mask.len()).unwrap();
    let scaler = CoordScaler::fit(&data.ground_truth().unwrap(), spec.coord_convention()).unwrap();
    let model = TrainedModel { params: spec.init_params(2).unwrap(), spec, mask, scaler };
    let csv = dir.path().join("data.csv");
    let ckpt = dir.path().join("model.ckpt");
    save_csv(&data, &csv).unwrap();
    model.save(&ckpt).unwrap();
    Fixture {
        csv: CString::new(csv.to_str().unwrap()).unwrap(),
        ckpt: CString::new(ckpt.to_str().unwrap()).unwrap(),
        _dir: dir,
        expected: model,
        data,
    }
}

fn last_error() -> Option<String> {
    let p = mtw_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn load_predict_and_evaluate() {
    let f = fixture();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(mtw_dataset_load(f.csv.as_ptr(), MtwRole::Test, &mut ds), MtwStatus::Ok);
        assert_eq!(mtw_dataset_len(ds), 30);
        let mut model = ptr::null_mut();
        assert_eq!(mtw_model_load(f.ckpt.as_ptr(), &mut model), MtwStatus::Ok);
        assert!(last_error().is_none());
        assert_eq!(mtw_model_input_width(model), f.expected.spec.input_width);

        // Size query, then the real call.
        let mut n = 0usize;
        assert_eq!(mtw_model_predict(model, ds, ptr::null_mut(), 0, &mut n), MtwStatus::BufferTooSmall);
        assert_eq!(n, 30);
        assert!(last_error().unwrap().contains("30"));
        let mut out = vec![MtwPrediction::default(); n];
        assert_eq!(mtw_model_predict(model, ds, out.as_mut_ptr(), out.len(), &mut n), MtwStatus::Ok);
        let want = f.expected.predict(&f.data).unwrap();
        for (got, w) in out.iter().zip(&want) {
            assert_eq!((got.building, got.floor, got.longitude, got.latitude), (w.building, w.floor, w.longitude, w.latitude));
        }

        let mut summary = MtwEvalSummary::default();
        assert_eq!(mtw_model_evaluate(model, ds, &mut summary), MtwStatus::Ok);
        let report = f.expected.evaluate(&f.data).unwrap();
        assert_eq!(summary.evaal_error, report.evaal_error);
        assert_eq!(summary.gamma, report.gamma);
        assert_eq!(summary.n, 30);

        mtw_model_free(model);
        mtw_dataset_free(ds);
    }
}

#[test]
fn improvement_matches_relative_gain() {
    let mut eta = 0.0;
    unsafe {
        assert_eq!(mtw_improvement(11.21, 10.16, &mut eta), MtwStatus::Ok);
        assert!((eta - 9.366636931311329).abs() < 1e-12);
        assert_eq!(mtw_improvement(0.0, 1.0, &mut eta), MtwStatus::Domain);
        assert_eq!(mtw_improvement(1.0, 1.0, ptr::null_mut()), MtwStatus::NullPointer);
    }
    assert!(last_error().unwrap().contains("out_eta"));
}

#[test]
fn errors_map_to_status_codes() {
    let f = fixture();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(mtw_dataset_load(ptr::null(), MtwRole::Labeled, &mut ds), MtwStatus::NullPointer);
        assert_eq!(mtw_dataset_load(f.csv.as_ptr(), MtwRole::Labeled, ptr::null_mut()), MtwStatus::NullPointer);
        let missing = CString::new("/nonexistent/file.csv").unwrap();
        assert_eq!(mtw_dataset_load(missing.as_ptr(), MtwRole::Labeled, &mut ds), MtwStatus::Io);
        assert!(ds.is_null());
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(mtw_dataset_load(bad_utf8.as_ptr().cast(), MtwRole::Labeled, &mut ds), MtwStatus::InvalidUtf8);

        // A CSV is not a checkpoint.
        let mut model = ptr::null_mut();
        assert_eq!(mtw_model_load(f.csv.as_ptr(), &mut model), MtwStatus::Checkpoint);
        assert!(model.is_null());
        assert!(last_error().is_some());

        let mut n = 0;
        assert_eq!(mtw_model_predict(ptr::null(), ptr::null(), ptr::null_mut(), 0, &mut n), MtwStatus::NullPointer);
        assert_eq!(mtw_dataset_len(ptr::null()), 0);
        assert_eq!(mtw_model_input_width(ptr::null()), 0);
        mtw_dataset_free(ptr::null_mut());
        mtw_model_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mtwifi.h")).unwrap();
    for sym in [
        "mtw_last_error",
        "mtw_dataset_load",
        "mtw_dataset_len",
        "mtw_dataset_free",
        "mtw_model_load",
        "mtw_model_input_width",
        "mtw_model_free",
        "mtw_model_predict",
        "mtw_model_evaluate",
        "mtw_improvement",
        "MTW_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}
