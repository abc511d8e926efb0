use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_backtest-verify");

fn run(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn enumerate_prints_n0() {
    let (code, out) = run(&["enumerate", "--naive"]);
    assert_eq!(code, Some(0));
    assert!(out.contains("n0: 11"), "{out}");
}

#[test]
fn selftest_is_green() {
    let (code, out) = run(&["selftest"]);
    assert_eq!(code, Some(0), "{out}");
    assert!(!out.contains("[FAIL]"));
}

#[test]
fn subprocess_reference_passes() {
    let adapter = format!("{BIN} serve --engine reference");
    let (code, out) = run(&[
        "verify",
        "--adapter",
        &adapter,
        "--stability-samples",
        "2",
        "--jobs",
        "2",
    ]);
    assert_eq!(code, Some(0), "{out}");
}

#[test]
fn subprocess_mutant_fails() {
    let adapter = format!("{BIN} serve --engine always-worst");
    let (code, _) = run(&["verify", "--adapter", &adapter, "--modes", "best", "--stability-samples", "0"]);
    assert_eq!(code, Some(1));
}

#[test]
fn dead_engine_is_a_protocol_error() {
    let (code, _) = run(&["verify", "--adapter", "exit 0", "--modes", "worst", "--stability-samples", "0"]);
    assert_eq!(code, Some(2));
}

#[test]
fn bad_input_is_internal_error() {
    assert_eq!(run(&["verify", "--adapter", "builtin:nope"]).0, Some(3));
    assert_eq!(run(&["enumerate", "--setup", "flat:Nothing"]).0, Some(3));
    assert_eq!(run(&["export-vectors", "--modes", "sideways"]).0, Some(3));
}

#[test]
fn oracle_one_shot() {
    let (code, out) = run(&[
        "oracle",
        "--format",
        "json",
        "--setup",
        r#"{"p":0,"orders":[{"kind":"StopLoss","level":"51.00"},{"kind":"EnterLongStop","level":"53.00"}]}"#,
        "--candle",
        r#"{"open":"52.00","close":"53.00","high":"53.00","low":"51.00"}"#,
    ]);
    assert_eq!(code, Some(0));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 2);
    assert_eq!(v["picks"][1][1]["exit"], "51.00");
}

#[test]
fn gen_candles_json_counts() {
    let (code, out) = run(&["gen-candles", "--m", "1", "--format", "json"]);
    assert_eq!(code, Some(0));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["candles"].as_array().unwrap().len(), 76);
}

#[test]
fn grid_file_restricts_setups() {
    let dir = std::env::temp_dir().join(format!("backtest-verify-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let grid = dir.join("grid.json");
    let layout = run(&["gen-candles", "--m", "1", "--format", "json"]).1;
    let v: serde_json::Value = serde_json::from_str(&layout).unwrap();
    std::fs::write(&grid, v["layout"].to_string()).unwrap();
    let out = Command::new(BIN)
        .args(["export-vectors", "--modes", "best", "--grid"])
        .arg(&grid)
        .output()
        .unwrap();
    assert!(out.status.success());
    // header plus 8 one-order setups times 76 candles
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 8 * 76);
    std::fs::remove_dir_all(&dir).unwrap();
}
