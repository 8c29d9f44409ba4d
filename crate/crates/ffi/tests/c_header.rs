//! Compiles a small C program against the generated header and, when the
//! static library is present, links and runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "bssanova.h"

int main(void) {
    BssBasis *b = NULL;
    if (bss_basis_create(4, 101, &b) != BSS_STATUS_OK) return 1;
    double v = 0.0;
    if (bss_basis_eval(b, 1, 0.25, &v) != BSS_STATUS_OK) return 2;
    if (bss_basis_eval(b, 9, 0.25, &v) != BSS_STATUS_INVALID_ARGUMENT) return 3;
    if (bss_last_error_message() == NULL) return 4;
    bss_basis_free(b);
    BssFitOptions o = bss_fit_options_default();
    if (o.criterion != BSS_CRITERION_BIC) return 5;
    printf("%s\n", bss_version());
    return 0;
}
"#;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(str::to_string)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = manifest_dir().join("include");

    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "generated header does not compile");

    // Integration tests run from target/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|d| d.parent()).map(|d| d.join("libbssanova_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not found next to the test binary; link step skipped");
        return;
    };
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link against the static library failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
