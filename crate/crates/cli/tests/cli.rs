use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseless")).args(args).output().expect("spawn phaseless")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["simulate", "--seed", "7", "--set", "n=5", "--out", s(d)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["signal.json", "signal.csv", "measurements.json", "measurements.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oversized_window_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--set", "model=stft", "--set", "n=5", "--set", "w=7", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.cfg");
    std::fs::write(&cfg, "# stft fixture\nmodel = stft\nn = 23  # prime\nw = 12\nseed = 4\n").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    let desc = std::fs::read_to_string(out.join("measurements.json")).unwrap();
    assert!(desc.contains("\"stft\""));

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["simulate", "--config", s(&tmp.path().join("missing.cfg"))])), 2);
}

#[test]
fn stft_ls_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "11", "--set", "model=stft", "--set", "n=23", "--set", "w=12", "--out", s(d)]);
    let truth = d.join("signal.json");
    let o = run(&["recover", "--set", "method=stft-ls", "--set", &format!("truth={}", s(&truth)), "--out", s(d)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d);
    assert!(r["relative_error"].as_f64().unwrap() < 1e-8, "{r}");
    assert!(d.join("recovered.csv").exists());
}

#[test]
fn kolmogorov_on_minimum_phase_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "2", "--set", "n=10", "--set", "min_phase=true", "--out", s(d)]);
    let truth = format!("truth={}", s(&d.join("signal.json")));
    assert_eq!(code(&run(&["recover", "--set", "method=kolmogorov", "--set", &truth, "--out", s(d)])), 0);
    assert!(report(d)["relative_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn mismatched_model_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--set", "n=6", "--out", s(d)]);
    for m in ["gla", "sdp-stft", "stft-ls"] {
        let o = run(&["recover", "--set", &format!("method={m}"), "--out", s(d)]);
        assert_eq!(code(&o), 3, "{m}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&run(&["recover", "--set", "method=nonsense", "--out", s(d)])), 2);
}

#[test]
fn unconverged_sdp_exits_4_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "5", "--set", "model=stft", "--set", "n=8", "--set", "w=4", "--out", s(d)]);
    let o = run(&["recover", "--set", "method=sdp-stft", "--set", "sdp_max_iter=3", "--out", s(d)]);
    assert_eq!(code(&o), 4);
    let r = report(d);
    assert_eq!(r["converged"], Value::Bool(false));
    assert_eq!(r["sdp"]["iterations"].as_u64(), Some(3));
    assert!(d.join("sdp_trace.csv").exists());
}

#[test]
fn iterative_methods_write_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "9", "--set", "model=stft", "--set", "n=13", "--set", "w=6", "--out", s(d)]);
    let truth = format!("truth={}", s(&d.join("signal.json")));
    let c = tmp.path().join("classical");
    run(&["simulate", "--seed", "9", "--set", "n=8", "--set", "signal=real", "--out", s(&c)]);
    let ctruth = format!("truth={}", s(&c.join("signal.json")));
    for (m, dir, t) in [("gla", d, &truth), ("gd", d, &truth), ("er", &c, &ctruth), ("hio", &c, &ctruth)] {
        let o = run(&["recover", "--set", &format!("method={m}"), "--set", "max_iter=20", "--set", t, "--out", s(dir)]);
        assert_eq!(code(&o), 0, "{m}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
        assert!(csv.starts_with("iteration,error\n"));
        assert!(report(dir)["relative_error"].is_number());
    }
    let o = run(&["recover", "--set", "method=gd", "--set", "init=stft", "--set", &truth, "--out", s(d)]);
    assert_eq!(code(&o), 0);
    assert!(report(d)["relative_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn gespar_recovers_sparse_signal() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "3", "--set", "n=16", "--set", "signal=sparse:2", "--out", s(d)]);
    let truth_file = d.join("signal.json");
    let o = run(&[
        "recover", "--method", "gespar", "--sparsity", "2", "--jobs", "1", "--set", "restarts=20",
        "--truth", s(&truth_file), "--input", s(d), "--out", s(&d.join("rec")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&d.join("rec"));
    assert_eq!(r["gespar"]["support"].as_array().unwrap().len(), 2);
    assert!(r["relative_error"].as_f64().unwrap() < 1e-6, "{r}");
}

#[test]
fn ambiguities_lists_solutions() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(&["simulate", "--seed", "1", "--set", "n=5", "--out", s(d)]);
    assert_eq!(code(&run(&["ambiguities", "--out", s(d)])), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("ambiguities.json")).unwrap()).unwrap();
    assert_eq!(v["count"], v["predicted_count"]);
    assert_eq!(v["solutions"].as_array().unwrap().len() as u64, v["count"].as_u64().unwrap());
}

#[test]
fn bench_writes_csv_with_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = ["bench", "fig4", "--seed", "3", "--jobs", "1", "--set", "n=9", "--set", "windows=3,5", "--set", "trials=3", "--set", "max_iter=30", "--out", s(d)];
    assert_eq!(code(&run(&args)), 0);
    let first = std::fs::read_to_string(d.join("fig4.csv")).unwrap();
    assert!(first.contains("# seed = 3"));
    assert!(first.contains("W,method,success_rate"));
    run(&args);
    assert_eq!(first, std::fs::read_to_string(d.join("fig4.csv")).unwrap());

    assert_eq!(code(&run(&["bench", "fig5", "--set", "trials=0", "--out", s(d)])), 2);
    assert_eq!(code(&run(&["bench", "fig9"])), 2);
}
