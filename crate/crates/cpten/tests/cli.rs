//! End-to-end runs of the installed binary: generate an instance, list
//! its cliques, decompose it, and check exit codes on the failure paths.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpten"))
}

#[test]
fn gen_cliques_decompose_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = dir.path().join("a.txt");
    let witness = dir.path().join("w.txt");
    let decomp = dir.path().join("d.txt");

    let out = bin()
        .args([
            "gen",
            "cp",
            "--dim",
            "6",
            "--order",
            "3",
            "--atoms",
            "3",
            "--max-support",
            "3",
            "--seed",
            "11",
        ])
        .arg("--witness")
        .arg(&witness)
        .output()
        .unwrap();
    assert!(out.status.success(), "gen failed: {out:?}");
    std::fs::write(&tensor, &out.stdout).unwrap();
    assert!(witness.exists());

    let out = bin().arg("cliques").arg(&tensor).output().unwrap();
    assert!(out.status.success(), "cliques failed: {out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.trim().is_empty(), "no cliques printed");

    let out = bin()
        .arg("decompose")
        .arg(&tensor)
        .arg("--output")
        .arg(&decomp)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "decompose failed: stderr {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let d = std::fs::read_to_string(&decomp).unwrap();
    assert!(d.lines().next().unwrap().starts_with("3 6"), "header: {d}");
}

#[test]
fn decompose_rejects_non_cp_input() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = dir.path().join("bad.txt");
    // only the mixed entry is positive: no clique can host it, so the
    // coverage screen certifies the tensor is not completely positive
    std::fs::write(&tensor, "3 3\n1 2 3 1.0\n").unwrap();
    let out = bin().arg("decompose").arg(&tensor).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = dir.path().join("bad.txt");
    std::fs::write(&tensor, "3 3\n1 2 oops 1.0\n").unwrap();
    let out = bin().arg("decompose").arg(&tensor).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}
