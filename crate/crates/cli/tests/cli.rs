use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn curves() -> PathBuf {
    fixtures().join("curves.txt")
}

fn perindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perindex")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_to(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let fx = curves();
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--fixture", fx.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let o = perindex(&full);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    out
}

fn verify(path: &Path) -> Output {
    perindex(&["verify-certificate", "--fixture", curves().to_str().unwrap(), path.to_str().unwrap()])
}

/// Applies `f` to a document and reseals it with the library's digest.
/// Returns `false` when the edit no longer parses as a document at all.
fn tamper(src: &Path, dst: &Path, f: impl FnOnce(&mut Value)) -> bool {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(src).unwrap()).unwrap();
    f(&mut v);
    match perindex::certificate::reseal(&serde_json::to_string_pretty(&v).unwrap()) {
        Ok(sealed) => {
            fs::write(dst, sealed).unwrap();
            true
        }
        Err(_) => false,
    }
}

#[test]
fn verify_theta_exit_codes() {
    let o = perindex(&["verify-theta", "--n", "3", "--gamma", "3x3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mismatches"], 0);
    assert_eq!(code(&perindex(&["verify-theta", "--n", "2", "--gamma", "2x0"])), 2);
    assert_eq!(code(&perindex(&["verify-theta", "--n", "2", "--gamma", "4x4"])), 2);
    assert_eq!(code(&perindex(&["verify-theta", "--n", "5", "--gamma", "2"])), 2);
}

#[test]
fn usage_errors_exit_2() {
    let fx = curves();
    let fx = fx.to_str().unwrap();
    assert_eq!(code(&perindex(&[])), 2);
    assert_eq!(code(&perindex(&["forge", "--fixture", fx, "--curve", "nope", "--r", "1"])), 2);
    assert_eq!(code(&perindex(&["forge", "--fixture", "/nonexistent", "--curve", "cn1", "--r", "1"])), 2);
    assert_eq!(code(&perindex(&["grow-sha", "--fixture", fx, "--curve", "cn1", "--r", "0"])), 2);
    assert_eq!(code(&perindex(&["fit-constants", "--fixture", fx, "--curve", "cn1", "--probe", "7"])), 2);
    let bad = fixtures().join("degenerate.txt");
    let o = perindex(&["fit-constants", "--fixture", bad.to_str().unwrap(), "--curve", "cn5bad"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn tight_bounds_exit_3() {
    let fx = curves();
    let o = perindex(&["forge", "--fixture", fx.to_str().unwrap(), "--curve", "cn1", "--r", "2", "--bound-prime-search", "20"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("--bound-"));
}

#[test]
fn fit_constants_reports_truncated_probes() {
    let dir = TempDir::new().unwrap();
    let full = run_to(&dir, "full.json", &["fit-constants", "--curve", "cn1"]);
    let fx = curves();
    let o = perindex(&["fit-constants", "--fixture", fx.to_str().unwrap(), "--curve", "cn1", "--probe", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let fitted: Value = serde_json::from_str(&fs::read_to_string(&full).unwrap()).unwrap();
    let n_probe = v["constants"]["surviving_candidates"].as_array().unwrap().len();
    let n_full = fitted["constants"]["surviving_candidates"].as_array().unwrap().len();
    assert!(n_probe >= n_full);
    assert_eq!(code(&verify(&full)), 0);
}

#[test]
fn forge_documents_verify() {
    let dir = TempDir::new().unwrap();
    for r in ["0", "1", "2"] {
        let out = run_to(&dir, &format!("forge{r}.json"), &["forge", "--curve", "cn1", "--r", r]);
        let o = verify(&out);
        assert_eq!(code(&o), 0, "r = {r}: {}", String::from_utf8_lossy(&o.stdout));
        let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let r: usize = r.parse().unwrap();
        assert_eq!(v["certificates"].as_array().unwrap().len(), (1 << r) - 1);
    }
}

#[test]
fn grow_sha_round_trip_and_tampering() {
    let dir = TempDir::new().unwrap();
    let out = run_to(&dir, "sha.json", &["grow-sha", "--curve", "cn1", "--r", "1", "--audit"]);
    let o = verify(&out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("accept"));

    let bad = dir.path().join("bad.json");
    assert!(tamper(&out, &bad, |v| {
        let w = v["certificate"]["classes"][0]["trivialization"].as_array_mut().unwrap();
        let item = w.iter_mut().find(|x| x["evidence"].get("hensel").is_some()).unwrap();
        let z = &mut item["evidence"]["hensel"]["z"][1]["x"];
        *z = Value::from(z.as_i64().unwrap() + 3);
    }));
    let o = verify(&bad);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("reject"));

    // an odd Brauer support is refused while parsing, before any digest check
    let parses = tamper(&out, &bad, |v| {
        let lifts = v["certificate"]["span"][0]["lifts"].as_array_mut().unwrap();
        let entry = lifts.iter_mut().find(|l| !l["delta"].as_array().unwrap().is_empty()).unwrap();
        entry["delta"].as_array_mut().unwrap().pop();
    });
    assert!(!parses);

    // an unsealed edit fails on the digest
    let mut text = fs::read_to_string(&out).unwrap();
    text = text.replacen("\"seed\": 0", "\"seed\": 5", 1);
    fs::write(&bad, text).unwrap();
    assert_eq!(code(&verify(&bad)), 1);

    fs::write(&bad, "{\"schema_version\": 7}").unwrap();
    assert_eq!(code(&verify(&bad)), 2);
}

#[test]
fn grow_sha_rank_one_two_classes() {
    let dir = TempDir::new().unwrap();
    let out = run_to(&dir, "sha.json", &["grow-sha", "--curve", "cn5", "--r", "2"]);
    let o = verify(&out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for (i, args) in [
        vec!["fit-constants", "--curve", "cn6"],
        vec!["forge", "--curve", "cn5", "--r", "2"],
        vec!["grow-sha", "--curve", "cn1", "--r", "2", "--seed", "3"],
    ]
    .iter()
    .enumerate()
    {
        let a = run_to(&dir, &format!("a{i}.json"), args);
        let b = run_to(&dir, &format!("b{i}.json"), args);
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{args:?}");
    }
}
