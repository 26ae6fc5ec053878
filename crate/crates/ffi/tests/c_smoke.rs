//! Builds and runs a C program against the header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "sprover.h"

int main(void) {
    SproverSession *s = NULL;
    if (sprover_session_new(0, &s) != SPROVER_CODE_OK) return 10;
    const char *text = "Axiom a : A.\nTheorem t : A /\\ True.\nProof. split. exact a. auto. Qed.\n";
    if (sprover_session_set_text(s, text) != SPROVER_CODE_OK) return 11;
    if (sprover_session_run(s, NULL, 0, 5000) != SPROVER_CODE_OK) return 12;
    size_t n = sprover_session_span_count(s);
    for (size_t i = 0; i < n; i++) {
        SproverSpan span;
        if (sprover_session_span(s, i, &span) != SPROVER_CODE_OK) return 13;
        if (span.state != SPROVER_SPAN_STATE_PROCESSED) return 14;
    }
    char *answer = NULL;
    if (sprover_session_query(s, -1, "Print t.", &answer) != SPROVER_CODE_OK) return 15;
    printf("%zu %s\n", n, answer);
    sprover_string_free(answer);
    if (sprover_session_set_text(NULL, text) != SPROVER_CODE_NULL_POINTER) return 16;
    if (sprover_last_error() == NULL) return 17;
    sprover_session_free(s);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests live in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libsprover_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("7 "), "{stdout}");
    assert!(stdout.contains("t : A /\\ True"), "{stdout}");
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).arg("--version").output() {
        Ok(o) if o.status.success() => Ok(cc),
        _ => Err(()),
    }
}
