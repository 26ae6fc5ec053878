use std::ffi::{CStr, CString};
use std::ptr;

use serde_json::Value;
use sprover::samples::DECIDABLE;
use sprover_ffi::*;

fn last_error() -> String {
    let p = sprover_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    sprover_string_free(p);
    s
}

#[test]
fn session_lifecycle() {
    for workers in [0, 2] {
        unsafe {
            let mut s = ptr::null_mut();
            assert_eq!(sprover_session_new(workers, &mut s), SproverCode::Ok);
            let text = CString::new(DECIDABLE).unwrap();
            assert_eq!(sprover_session_set_text(s, text.as_ptr()), SproverCode::Ok);
            assert_eq!(sprover_session_span_count(s), 6);
            let mut ids = Vec::new();
            for i in 0..6 {
                let mut span = SproverSpan { id: 0, offset: 0, length: 0, state: SproverSpanState::Failed };
                assert_eq!(sprover_session_span(s, i, &mut span), SproverCode::Ok);
                assert_eq!(span.state, SproverSpanState::Unknown);
                ids.push(span.id);
            }
            assert_eq!(sprover_session_run(s, ids.as_ptr(), ids.len(), 10_000), SproverCode::Ok);
            for i in 0..6 {
                let mut span = SproverSpan { id: 0, offset: 0, length: 0, state: SproverSpanState::Unknown };
                sprover_session_span(s, i, &mut span);
                assert_eq!(span.state, SproverSpanState::Processed, "span {i}, workers {workers}");
            }
            let mut json = ptr::null_mut();
            assert_eq!(sprover_session_feedback_json(s, &mut json), SproverCode::Ok);
            let feedback: Vec<Value> = serde_json::from_str(&take(json)).unwrap();
            assert!(feedback.iter().all(|f| f["type"] == "feedback" && f["revision"] == 1));
            assert!(feedback.iter().any(|f| f["kind"] == "goals"));

            let q = CString::new("Print decidable.").unwrap();
            let mut answer = ptr::null_mut();
            assert_eq!(sprover_session_query(s, ids[5], q.as_ptr(), &mut answer), SproverCode::Ok);
            assert!(take(answer).contains("decidable"));
            let bad = CString::new("Print nothing.").unwrap();
            assert_eq!(sprover_session_query(s, ids[5], bad.as_ptr(), &mut answer), SproverCode::Document);
            assert_eq!(take(answer), last_error());

            let mut span = SproverSpan { id: 0, offset: 0, length: 0, state: SproverSpanState::Unknown };
            assert_eq!(sprover_session_span(s, 6, &mut span), SproverCode::OutOfRange);
            sprover_session_free(s);
        }
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        assert_eq!(sprover_session_new(0, ptr::null_mut()), SproverCode::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(sprover_session_set_text(ptr::null_mut(), c"x".as_ptr()), SproverCode::NullPointer);
        let mut s = ptr::null_mut();
        sprover_session_new(0, &mut s);
        assert_eq!(sprover_session_set_text(s, ptr::null()), SproverCode::NullPointer);
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(sprover_session_set_text(s, invalid.as_ptr().cast()), SproverCode::InvalidUtf8);
        assert_eq!(sprover_session_run(s, ptr::null(), 3, 0), SproverCode::NullPointer);
        assert_eq!(sprover_session_run(s, ptr::null(), 0, 0), SproverCode::Ok);
        assert!(sprover_last_error().is_null());
        assert_eq!(sprover_session_span_count(ptr::null()), 0);
        sprover_session_free(s);
        sprover_session_free(ptr::null_mut());
        sprover_string_free(ptr::null_mut());
        assert!(!CStr::from_ptr(sprover_version()).to_bytes().is_empty());
    }
}

#[test]
fn compile_entry_points() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.v");
    std::fs::write(&ok, DECIDABLE).unwrap();
    let bad = dir.path().join("bad.v");
    std::fs::write(&bad, "Theorem f : False.\nProof. auto. Qed.\n").unwrap();
    let doc = dir.path().join("doc.v");
    std::fs::write(&doc, "Axiom a : A.\nAxiom a : A.\n").unwrap();
    let c = |p: &std::path::Path| CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut exit = -1;
        assert_eq!(sprover_compile(c(&ok).as_ptr(), 1, true, ptr::null(), &mut exit), SproverCode::Ok);
        assert_eq!(exit, 0);
        assert_eq!(sprover_vio2vo(c(&ok.with_extension("vio")).as_ptr(), 2, &mut exit), SproverCode::Ok);
        assert!(ok.with_extension("vo").exists());
        assert_eq!(sprover_compile(c(&bad).as_ptr(), 0, false, ptr::null(), &mut exit), SproverCode::Proof);
        assert_eq!(exit, 2);
        assert!(last_error().contains('f'));
        assert_eq!(sprover_compile(c(&doc).as_ptr(), 0, false, ptr::null(), &mut exit), SproverCode::Document);
        assert_eq!(exit, 1);
        assert!(last_error().starts_with("2:1:"));
        let missing = c(&dir.path().join("missing.v"));
        assert_eq!(sprover_compile(missing.as_ptr(), 0, false, ptr::null(), ptr::null_mut()), SproverCode::Io);
        let user = dir.path().join("user.v");
        std::fs::write(&user, "Require ok.\nCheck dec_False.\n").unwrap();
        let inc = c(dir.path());
        assert_eq!(sprover_compile(c(&user).as_ptr(), 0, false, inc.as_ptr(), &mut exit), SproverCode::Ok);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sprover.h")).unwrap();
    for name in [
        "sprover_version",
        "sprover_last_error",
        "sprover_string_free",
        "sprover_session_new",
        "sprover_session_free",
        "sprover_session_set_text",
        "sprover_session_run",
        "sprover_session_span_count",
        "sprover_session_span",
        "sprover_session_feedback_json",
        "sprover_session_query",
        "sprover_compile",
        "sprover_vio2vo",
        "typedef struct SproverSession SproverSession;",
        "SPROVER_CODE_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
