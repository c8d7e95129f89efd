use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_wfefc");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn wfefc(args: &[&str]) -> (i32, String, String) {
    let o = Command::new(BIN).args(args).output().unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const NEUTRAL: &str = "[simulation]\nseed = 7\npaths = 1000\n[duality]\nidentity = duality_i\nxs = 0.3, 0.7\nns = 1, 2\nts = 0.5\n";

const CLASSIFY: &str = "[simulation]\nseed = 1\n[classify]\nalpha = 0.5\nbeta = 0.5\nsigma = 1.7\nrho = 1.0\n[sweep]\nalphas = 0.3, 0.5\nratios = 0.5, 1.7, 4.0\n";

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(wfefc(&["--help"]).0, 0);
    assert_eq!(wfefc(&["--version"]).0, 0);
    assert_eq!(wfefc(&["classify", "--help"]).0, 0);
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = wfefc(&["bogus"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    assert_eq!(wfefc(&[]).0, 1);
    assert_eq!(wfefc(&["rates"]).0, 1);
    assert_eq!(wfefc(&["rates", "--config", "x", "--format", "xml"]).0, 1);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wfefc(&["rates", "--config", dir.path().join("missing.cfg").to_str().unwrap()]).0, 1);
    let bad = write(dir.path(), "bad.cfg", "[simulation]\nseed = 1\n[coalescence]\nkind = power\nbeta = 1.5\n");
    let (code, _, err) = wfefc(&["rates", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("E008"), "{err}");
    let noseed = write(dir.path(), "noseed.cfg", "[simulation]\npaths = 10\n");
    let out = dir.path().join("o");
    assert_eq!(wfefc(&["classify", "--config", noseed.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 1);
    // --seed supplies the missing seed
    let ok = wfefc(&["classify", "--config", noseed.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(ok.0, 0, "{}", ok.2);
}

#[test]
fn classify_regular_reflecting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", CLASSIFY);
    let out = dir.path().join("out");
    let (code, _, err) = wfefc(&["classify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out.join("classify.json"));
    assert_eq!(v["x_at_1"]["verdict"], "RegularReflecting");
    assert_eq!(v["n_at_infinity"]["verdict"], "RegularForItself");
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["subcommand"], "classify");
    assert_eq!(m["files"][0]["path"], "classify.json");
}

#[test]
fn sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", CLASSIFY);
    let out = dir.path().join("out");
    assert_eq!(wfefc(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "alpha,beta,sigma_over_rho,x_verdict,x_code,n_verdict,n_code");
    assert_eq!(lines.len(), 7);
    assert!(lines.contains(&"0.5,0.5,1.7,RegularReflecting,3,RegularForItself,4"));
    assert!(lines.contains(&"0.3,0.7,0.5,Exit,1,Entrance,2"));
}

#[test]
fn neutral_duality_passes_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.cfg", NEUTRAL);
    let mut outputs = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        let (code, _, err) =
            wfefc(&["verify-duality", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w]);
        assert_eq!(code, 0, "{err}");
        outputs.push(std::fs::read(out.join("duality.json")).unwrap());
        let m = json(&out.join("manifest.json"));
        assert_eq!(m["workers"].as_u64().unwrap().to_string(), w);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn simulations_write_declared_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.cfg",
        "[simulation]\nseed = 3\npaths = 50\nn0 = 2\nn_cap = 1000\nx0 = 0.4\nt_grid = 0.5, 1.0\n[splitting]\nkind = point_mass\nk = 2\n[rates]\nn_max = 30\n",
    );
    let out = dir.path().join("out");
    for (cmd, file) in [("rates", "rates.json"), ("simulate-efc", "efc.json"), ("simulate-wf", "wf.json")] {
        let (code, _, err) = wfefc(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{cmd}: {err}");
        let m = json(&out.join("manifest.json"));
        let f = &m["files"][0];
        assert_eq!(f["path"], file);
        let bytes = std::fs::read(out.join(file)).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains("wall_time") && !text.contains("workers"));
    }
    let (code, _, _) = wfefc(&["simulate-wf", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("wf.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 50 * 2);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "[simulation]\nseed = 3\npaths = 20\nn0 = 2\nn_cap = 1000\nt_grid = 0.5\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    wfefc(&["simulate-efc", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    wfefc(&["simulate-efc", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "4"]);
    assert_ne!(std::fs::read(a.join("efc.json")).unwrap(), std::fs::read(b.join("efc.json")).unwrap());
    assert_eq!(json(&b.join("manifest.json"))["seed"], 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn classify_cli_matches_library(alpha in 0.05f64..0.95, ratio in 0.1f64..10.0) {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("[simulation]\nseed = 1\n[classify]\nalpha = {alpha}\nbeta = {}\nsigma = {ratio}\nrho = 1\n", 1.0 - alpha);
        let cfg = write(dir.path(), "c.cfg", &text);
        let out = dir.path().join("out");
        let (code, _, _) = wfefc(&["classify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        prop_assert_eq!(code, 0);
        let v = json(&out.join("classify.json"));
        let want = wfefc::boundary::classify_rv(alpha, 1.0 - alpha, ratio, 1.0).unwrap();
        prop_assert_eq!(v["x_at_1"]["verdict"].as_str().unwrap(), format!("{:?}", want.verdict));
    }
}
