//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // Test binaries live in <target>/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c_and_cxx() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, flag) in [("cc", "-std=c99"), ("c++", "-std=c++17")] {
        let status = Command::new(compiler)
            .args([flag, "-Wall", "-Werror", "-fsyntax-only", "-x"])
            .arg(if compiler == "cc" { "c" } else { "c++" })
            .arg("-I")
            .arg(&include)
            .arg("-")
            .stdin(std::process::Stdio::piped())
            .spawn()
            .and_then(|mut child| {
                use std::io::Write;
                child.stdin.take().unwrap().write_all(b"#include \"gridlet.h\"\nint main(void) { return 0; }\n")?;
                child.wait()
            })
            .unwrap();
        assert!(status.success(), "{compiler} rejected gridlet.h");
    }
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libgridlet_ffi.a");
    assert!(lib.is_file(), "static library not found at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("c_api");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(manifest.join("tests/c_api.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C test program failed to build");

    let pss = manifest.join("../../samples/pi/problem.xml");
    let run = Command::new(&exe).arg(&pss).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("pi:"), "{stdout}");
    assert_eq!(stdout.split_whitespace().count(), 9);
}
