use std::process::Command;

// Embed a `git describe`-style version; fall back to the crate version
// outside a git checkout.
fn main() {
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let pkg = std::env::var("CARGO_PKG_VERSION").unwrap_or_default();
    let version = match describe {
        Some(d) => format!("{pkg}+{d}"),
        None => pkg,
    };
    println!("cargo:rustc-env=NPIV_BUILD_VERSION={version}");
    println!("cargo:rerun-if-changed=build.rs");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
