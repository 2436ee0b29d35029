use std::ffi::{CStr, CString};
use std::ptr;

use diet_attn_ffi::*;

fn new_model(scheme: &str, seed: u64) -> *mut DietModel {
    let name = CString::new(scheme).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { diet_model_new(name.as_ptr(), 8, 8, 2, 2, 2, 10, 5, seed, &mut out) };
    assert_eq!(status, DietStatus::Ok, "{}", last_error());
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let p = diet_last_error();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

fn logits(model: *const DietModel, tokens: &[u32]) -> Vec<f64> {
    let mut buf = vec![0.0; tokens.len() * 5];
    let status = unsafe {
        diet_model_forward(
            model,
            tokens.as_ptr(),
            tokens.len(),
            buf.as_mut_ptr(),
            buf.len(),
        )
    };
    assert_eq!(status, DietStatus::Ok, "{}", last_error());
    buf
}

#[test]
fn forward_through_handle() {
    for scheme in [
        "none",
        "input-add",
        "sinusoidal",
        "diet-abs",
        "diet-rel",
        "shaw",
        "t5",
        "linformer-diet-abs",
    ] {
        let m = new_model(scheme, 1);
        unsafe {
            assert_eq!(diet_model_num_classes(m), 5);
            assert_eq!(diet_model_seq_len(m), 8);
        }
        let out = logits(m, &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert!(out.iter().all(|v| v.is_finite()));
        unsafe { diet_model_free(m) };
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
    let m = new_model("diet-rel", 3);
    let tokens = [9, 8, 7, 6, 5, 4, 3, 2];
    let before = logits(m, &tokens);
    assert_eq!(unsafe { diet_model_save(m, path.as_ptr()) }, DietStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { diet_model_load(path.as_ptr(), &mut loaded) },
        DietStatus::Ok
    );
    assert_eq!(before, logits(loaded, &tokens));
    unsafe {
        diet_model_free(m);
        diet_model_free(loaded);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let bad = CString::new("rope").unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { diet_model_new(bad.as_ptr(), 8, 8, 2, 2, 2, 10, 5, 0, &mut out) };
    assert_eq!(status, DietStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("rope"));

    let m = new_model("t5", 0);
    let tokens = [0u32; 8];
    let mut small = vec![0.0; 3];
    let status =
        unsafe { diet_model_forward(m, tokens.as_ptr(), 8, small.as_mut_ptr(), small.len()) };
    assert_eq!(status, DietStatus::BufferTooSmall);

    let mut buf = vec![0.0; 40];
    let status =
        unsafe { diet_model_forward(m, [99u32; 8].as_ptr(), 8, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(status, DietStatus::InvalidArgument);
    assert_eq!(
        unsafe { diet_model_forward(ptr::null(), tokens.as_ptr(), 8, buf.as_mut_ptr(), 40) },
        DietStatus::NullPointer
    );

    let missing = CString::new("/nonexistent/dir/model.bin").unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { diet_model_load(missing.as_ptr(), &mut loaded) },
        DietStatus::Io
    );
    unsafe {
        diet_model_free(m);
        diet_model_free(ptr::null_mut());
    }
}

#[test]
fn numerical_rank_of_outer_product() {
    let u = [1.0, 2.0, 3.0];
    let v = [1.0, -1.0, 0.5, 2.0];
    let data: Vec<f64> = u
        .iter()
        .flat_map(|a| v.iter().map(move |b| a * b))
        .collect();
    let mut rank = 0usize;
    assert_eq!(
        unsafe { diet_numerical_rank(data.as_ptr(), 3, 4, 1e-8, &mut rank) },
        DietStatus::Ok
    );
    assert_eq!(rank, 1);
    assert_eq!(
        unsafe { diet_numerical_rank(data.as_ptr(), 3, 4, 1e-8, ptr::null_mut()) },
        DietStatus::NullPointer
    );
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/diet_attn.h"))
            .unwrap();
    let source =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 10);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("typedef struct DietModel DietModel;"));
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(diet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
