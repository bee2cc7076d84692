#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process with `args` (without the program name).
pub fn cli(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("currikg").chain(args.iter().copied());
    let code = currikg_app::cli::run(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn ok(args: &[&str]) -> String {
    let o = cli(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Initialized project with the mock provider reading `fixture`'s responses.
pub fn init(dir: &Path, fixture: &str) {
    let llm = fixtures().join(fixture).join("llm");
    ok(&[
        "-p",
        path(dir),
        "init",
        "--chat-provider",
        "mock",
        "--fixtures",
        path(&llm),
    ]);
}

/// The single-session project with extracted, still pending candidates.
pub fn mini_extracted(dir: &Path) {
    init(dir, "mini");
    let manifest = fixtures().join("mini/manifest.json");
    ok(&["-p", path(dir), "ingest", path(&manifest)]);
    ok(&["-p", path(dir), "extract"]);
}

/// The two-module project run through linking.
pub fn two_module_linked(dir: &Path) {
    init(dir, "two_module");
    let p = path(dir);
    for module in ["es", "fpga"] {
        let manifest = fixtures().join("two_module").join(module).join("manifest.json");
        ok(&["-p", p, "ingest", path(&manifest)]);
    }
    ok(&["-p", p, "extract"]);
    ok(&["-p", p, "decide", "--accept-all"]);
    ok(&["-p", p, "promote"]);
    ok(&["-p", p, "link", "--threshold", "0.85"]);
}
