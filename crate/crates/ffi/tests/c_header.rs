//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "cstirap.h"

int main(void) {
    CstirapScenario *s = NULL;
    CstirapRun *r = NULL;
    double eff = 0.0;
    if (cstirap_scenario_from_preset("rb2-seven", &s) != CSTIRAP_STATUS_OK) return 10;
    if (cstirap_scenario_levels(s) != 7) return 11;
    if (cstirap_simulate(s, &r) != CSTIRAP_STATUS_OK) return 12;
    if (cstirap_run_efficiency(r, &eff) != CSTIRAP_STATUS_OK) return 13;
    if (cstirap_scenario_from_preset("missing", &s) != CSTIRAP_STATUS_CONFIG) return 14;
    if (cstirap_last_error()[0] == '\0') return 15;
    printf("%.6f\n", eff);
    cstirap_run_free(r);
    cstirap_scenario_free(s);
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/c_header-<hash> -> target/<profile>/libcstirap_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libcstirap_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "C program exited with {:?}",
        out.status.code()
    );
    let eff: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(eff > 0.0 && eff <= 1.0);
}
