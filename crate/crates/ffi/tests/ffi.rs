use std::ffi::{c_char, CStr, CString};
use std::ptr;

use ssdmn::data::{builtin_domain, generate};
use ssdmn::models::{predict_dialog, save_checkpoint, train, TrainConfig};
use ssdmn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ssdmn_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    ssdmn_string_free(s);
    out
}

#[test]
fn tags_like_the_core_library() {
    let dialogs = generate(&builtin_domain("reservation", 0.5).unwrap(), 20, 2).unwrap();
    let config = TrainConfig {
        input_dim: 6,
        hidden_dim: 6,
        max_epochs: 2,
        ..Default::default()
    };
    let params = train(&dialogs, &dialogs, None, &config).unwrap().params;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&params, &path).unwrap();

    unsafe {
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(ssdmn_model_load(cpath.as_ptr(), &mut model), SsdmnStatus::Ok);
        assert!(!model.is_null());
        assert_eq!(last_error(), "");

        let mut info = ptr::null_mut();
        assert_eq!(ssdmn_model_info(model, &mut info), SsdmnStatus::Ok);
        let info: serde_json::Value = serde_json::from_str(&take(info)).unwrap();
        assert_eq!(info["variant"], "ssdmn");
        assert_eq!(info["hidden_dim"], 6);

        for d in &dialogs[..5] {
            let input = CString::new(serde_json::to_string(d).unwrap()).unwrap();
            let mut out = ptr::null_mut();
            assert_eq!(ssdmn_tag_dialog(model, input.as_ptr(), 1, &mut out), SsdmnStatus::Ok);
            let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
            let expected = predict_dialog(&params, &params.prepare(d).unwrap()).unwrap();
            for (turn, p) in v["turns"].as_array().unwrap().iter().zip(&expected) {
                let labels: Vec<String> = serde_json::from_value(turn["labels"].clone()).unwrap();
                assert_eq!(labels, p.labels);
                assert!(turn["attention"]["alpha"].is_array());
            }
        }

        let bad = CString::new("{\"id\":1}").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(ssdmn_tag_dialog(model, bad.as_ptr(), 0, &mut out), SsdmnStatus::Parse);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        ssdmn_model_free(model);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(ssdmn_model_load(ptr::null(), &mut model), SsdmnStatus::NullPointer);
        assert!(last_error().contains("path"));

        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(ssdmn_model_load(missing.as_ptr(), &mut model), SsdmnStatus::Io);
        assert!(model.is_null());

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.ckpt");
        std::fs::write(&junk, "not a checkpoint\n").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(ssdmn_model_load(junk.as_ptr(), &mut model), SsdmnStatus::Checkpoint);

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            ssdmn_model_load(invalid.as_ptr().cast(), &mut model),
            SsdmnStatus::InvalidUtf8
        );

        assert_eq!(ssdmn_model_load(missing.as_ptr(), ptr::null_mut()), SsdmnStatus::NullPointer);
        let mut out = ptr::null_mut();
        assert_eq!(ssdmn_model_info(ptr::null(), &mut out), SsdmnStatus::NullPointer);

        ssdmn_model_free(ptr::null_mut());
        ssdmn_string_free(ptr::null_mut());
    }
}

#[test]
fn chunk_f1_matches_known_values() {
    let gold = CString::new(r#"[["B-a","O","B-b","I-b"]]"#).unwrap();
    let pred = CString::new(r#"[["B-a","O","B-b","O"]]"#).unwrap();
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(ssdmn_chunk_f1(gold.as_ptr(), pred.as_ptr(), &mut p, &mut r, &mut f), SsdmnStatus::Ok);
        assert_eq!((p, r, f), (50.0, 50.0, 50.0));

        let short = CString::new(r#"[["O"]]"#).unwrap();
        assert_ne!(ssdmn_chunk_f1(gold.as_ptr(), short.as_ptr(), &mut p, &mut r, &mut f), SsdmnStatus::Ok);
        let label = CString::new(r#"[["Z-a","O","O","O"]]"#).unwrap();
        assert_eq!(
            ssdmn_chunk_f1(gold.as_ptr(), label.as_ptr(), &mut p, &mut r, &mut f),
            SsdmnStatus::UnknownLabel
        );
        assert_eq!(
            ssdmn_chunk_f1(gold.as_ptr(), pred.as_ptr(), ptr::null_mut(), &mut r, &mut f),
            SsdmnStatus::NullPointer
        );
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ssdmn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ssdmn.h")).unwrap();
    for name in [
        "ssdmn_model_load",
        "ssdmn_model_free",
        "ssdmn_model_info",
        "ssdmn_tag_dialog",
        "ssdmn_chunk_f1",
        "ssdmn_string_free",
        "ssdmn_last_error",
        "ssdmn_version",
        "SSDMN_STATUS_OK",
        "typedef struct SsdmnModel SsdmnModel",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ssdmn.h\"\nint main(void) { SsdmnModel *m = 0; return ssdmn_model_load(\"x\", &m) == SSDMN_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}
