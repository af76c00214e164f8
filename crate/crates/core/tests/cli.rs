use std::fs;
use std::process::{Command, Output};

use serde_json::Value;
use submax::io::read_matrix;
use submax::search::exhaustive_max_average;
use submax::thresholds::{rect_avg_threshold, ThresholdQuery};

fn submax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_submax"))
        .args(args)
        .env_remove("SUBMAX_THREADS")
        .output()
        .expect("run submax")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn threshold_square() {
    let out = submax(&["threshold", "--n", "200", "--tau", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let s = v["s_root"].as_f64().unwrap();
    assert!(10.597 < s && s < 21.195);
    for key in ["s_asymptotic", "interval_lower", "interval_upper"] {
        assert!(v[key].is_f64(), "{key}");
    }
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("provenance: {"));
}

#[test]
fn threshold_rect_matches_library_bits() {
    let out = submax(&[
        "threshold",
        "--n",
        "1000",
        "--tau",
        "0.5",
        "--beta",
        "5",
        "--alpha",
        "100",
    ]);
    let got = json(&out)["rect_threshold"].as_f64().unwrap();
    let q = ThresholdQuery::new(1000, 0.5).alpha(100.0).beta(5.0);
    assert_eq!(
        got.to_bits(),
        rect_avg_threshold(&q, 0.0).unwrap().to_bits()
    );
}

#[test]
fn threshold_exit_codes() {
    assert_eq!(
        submax(&["threshold", "--n", "200", "--tau", "1", "--anova"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(submax(&["threshold", "--n", "200"]).status.code(), Some(64));
    assert_eq!(
        submax(&["threshold", "--n", "200", "--tau", "abc"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(submax(&["bogus"]).status.code(), Some(64));
    // No root in the bracket at n = 100, τ = 0.5 unless widened.
    assert_eq!(
        submax(&["threshold", "--n", "100", "--tau", "0.5"])
            .status
            .code(),
        Some(2)
    );
    let widened = submax(&["threshold", "--n", "100", "--tau", "0.5", "--widen"]);
    assert_eq!(widened.status.code(), Some(0));
    assert_eq!(json(&widened)["root_regime"], "Widened");
    assert_eq!(submax(&["--version"]).status.code(), Some(0));
}

#[test]
fn threshold_anova_csv() {
    let out = submax(&[
        "threshold",
        "--n",
        "500",
        "--tau",
        "0.5",
        "--anova",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let t = values[header.iter().position(|h| *h == "t").unwrap()]
        .parse::<f64>()
        .unwrap();
    assert!((t - 71.50342894853794).abs() < 1e-9);
}

#[test]
fn significance_examples() {
    let v = json(&submax(&[
        "significance",
        "--n",
        "10",
        "--k",
        "1",
        "--avg",
        "0",
    ]));
    assert_eq!(v["bound"], 1.0);
    assert_eq!(v["significant"], false);
    let v = json(&submax(&[
        "significance",
        "--n",
        "200",
        "--k",
        "10",
        "--avg",
        "1.5",
    ]));
    assert_eq!(v["significant"], true);
    let v = json(&submax(&[
        "significance",
        "--n",
        "200",
        "--k",
        "10",
        "--anova-residual",
        "0.3",
    ]));
    assert!(v["log_per_block"].as_f64().unwrap() < 0.0);
    assert_eq!(
        submax(&["significance", "--n", "5", "--k", "6", "--avg", "1"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        submax(&["significance", "--n", "5", "--k", "2"])
            .status
            .code(),
        Some(64)
    );
}

#[test]
fn search_recovers_generated_block() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("planted.csv");
    let file = file.to_str().unwrap();
    let gen = submax(&[
        "generate",
        "--m",
        "40",
        "--n",
        "40",
        "--k",
        "5",
        "--amplitude",
        "10",
        "--seed",
        "11",
        "--out",
        file,
    ]);
    assert_eq!(gen.status.code(), Some(0));
    let planted: Value = {
        let err = String::from_utf8(gen.stderr).unwrap();
        let body: String = err
            .lines()
            .take_while(|l| !l.starts_with("provenance"))
            .collect::<Vec<_>>()
            .join("\n");
        serde_json::from_str(&body).unwrap()
    };
    assert!(dir.path().join("planted.csv.provenance.json").exists());

    let out = submax(&[
        "search",
        "--input",
        file,
        "--k",
        "5",
        "--restarts",
        "20",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["rows"], planted["planted"]["rows"]);
    assert_eq!(v["cols"], planted["planted"]["cols"]);
    assert_eq!(v["significance"]["significant"], true);

    let again = submax(&[
        "search",
        "--input",
        file,
        "--k",
        "5",
        "--restarts",
        "1",
        "--seed",
        "7",
    ]);
    let again2 = submax(&[
        "search",
        "--input",
        file,
        "--k",
        "5",
        "--restarts",
        "1",
        "--seed",
        "7",
    ]);
    assert_eq!(again.stdout, again2.stdout);
}

#[test]
fn search_exact_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("small.bin");
    let file = file.to_str().unwrap();
    assert!(
        submax(&["generate", "--m", "7", "--n", "6", "--seed", "3", "--out", file])
            .status
            .success()
    );
    let w = read_matrix(file.as_ref(), false).unwrap();
    let (index, avg) = exhaustive_max_average(&w, 3, 2).unwrap();
    let v = json(&submax(&[
        "search", "--input", file, "--k", "3", "--l", "2", "--exact",
    ]));
    assert_eq!(v["method"], "exhaustive");
    assert_eq!(v["average"].as_f64().unwrap(), avg);
    assert_eq!(v["rows"], serde_json::json!(index.rows()));
}

#[test]
fn search_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3\n").unwrap();
    let bad = bad.to_str().unwrap();
    assert_eq!(
        submax(&["search", "--input", bad, "--k", "1"])
            .status
            .code(),
        Some(65)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        submax(&["search", "--input", missing.to_str().unwrap(), "--k", "1"])
            .status
            .code(),
        Some(65)
    );
    let good = dir.path().join("good.csv");
    fs::write(&good, "1,2\n3,4\n").unwrap();
    assert_eq!(
        submax(&["search", "--input", good.to_str().unwrap(), "--k", "3"])
            .status
            .code(),
        Some(64)
    );
}

#[test]
fn simulate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.csv");
    let plot = dir.path().join("plot.csv");
    let out = submax(&[
        "simulate",
        "--n",
        "40",
        "--k",
        "1..8",
        "--restarts",
        "30",
        "--seed",
        "1",
        "--out",
        run.to_str().unwrap(),
        "--plot-data",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&run).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(fs::read_to_string(&plot)
        .unwrap()
        .starts_with("tau,k,series\n"));
    let prov: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("run.csv.provenance.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(prov["seed"], 1);
    assert_eq!(prov["derived_seeds"].as_object().unwrap().len(), 8);

    let replay = submax(&["replay", run.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(0));
    assert_eq!(json(&replay)["matched"], 8);

    // A tampered row no longer replays.
    let tampered = dir.path().join("tampered.csv");
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(String::from).collect();
    fields[5] = "9.5".into();
    lines[3] = fields.join(",");
    fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let replay = submax(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(1));
    assert_eq!(json(&replay)["mismatches"].as_array().unwrap().len(), 1);
}

#[test]
fn simulate_list_syntax_and_json() {
    let v = json(&submax(&[
        "simulate",
        "--n",
        "30",
        "--k",
        "5,2,9",
        "--restarts",
        "5",
        "--format",
        "json",
    ]));
    let ks: Vec<u64> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, vec![2, 5, 9]);
    assert_eq!(
        submax(&["simulate", "--n", "30", "--k", "0..3"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        submax(&["simulate", "--n", "30", "--k", "31"])
            .status
            .code(),
        Some(64)
    );
}

#[test]
fn validate_bounds_and_spectral_and_chi2() {
    let v = json(&submax(&[
        "simulate",
        "--validate-bounds",
        "--n",
        "6",
        "--tau",
        "2",
        "--trials",
        "40",
        "--format",
        "json",
    ]));
    assert!(v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["ok"] == true));

    let out = submax(&[
        "spectral",
        "--n",
        "80",
        "--k",
        "5",
        "--l",
        "5",
        "--amplitude",
        "2",
        "--trials",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let ok = header.iter().position(|h| *h == "ok").unwrap();
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(ok) == Some("true")));

    let out = submax(&["chi2check", "--ell-max", "50"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("0 violations"));
}

#[test]
fn threads_flag_and_env() {
    let args = [
        "simulate",
        "--n",
        "30",
        "--k",
        "1..4",
        "--restarts",
        "10",
        "--seed",
        "3",
    ];
    let base = submax(&args).stdout;
    let with_flag = submax(&[&args[..], &["--threads", "3"]].concat()).stdout;
    let with_env = Command::new(env!("CARGO_BIN_EXE_submax"))
        .args(args)
        .env("SUBMAX_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(base, with_flag);
    assert_eq!(base, with_env.stdout);
    assert_eq!(
        submax(&[&args[..], &["--threads", "0"]].concat())
            .status
            .code(),
        Some(64)
    );
}
