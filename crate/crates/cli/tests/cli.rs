use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

/// Small approximation settings that keep map builds fast.
const APPROX: [&str; 12] = [
    "--v",
    "2",
    "--w",
    "2",
    "--l",
    "4",
    "--grid-lo",
    "0.8",
    "--grid-hi",
    "1.8",
    "--grid-points",
    "6",
];

fn cache_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("fracuc-map-cache")
}

fn run_with_cache(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracuc"))
        .args(args)
        .env("FRACUC_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn run(args: &[&str]) -> Output {
    run_with_cache(args, &cache_dir())
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn read_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

/// Writes a parameter document and simulates `n` quarters from 1961Q1.
fn simulated_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let params = dir.join("truth.json");
    std::fs::write(
        &params,
        r#"{
  "params": {"d": 1.3, "phi": [0.5], "sigma_eta2": 0.4, "sigma_eta_eps": -0.3,
             "sigma_eps2": 1.0, "mu0": 2.0, "mu1": 0.5},
  "spec": {"p": 1, "d_mode": "free", "deterministic": {"break_at": null},
           "v": 2, "w": 2, "l": 4, "n": 80}
}"#,
    )
    .unwrap();
    let out = dir.join("sim.csv");
    let n = n.to_string();
    let seed = seed.to_string();
    ok(&run(&[
        "simulate",
        "--params",
        s(&params),
        "--n",
        &n,
        "--seed",
        &seed,
        "--start",
        "1961Q1",
        "--out",
        s(&out),
    ]));
    out
}

fn fit_args<'a>(input: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec![
        "fit",
        "--input",
        s(input),
        "--column",
        "y",
        "--starts",
        "3",
        "--seed",
        "5",
        "--out",
        s(out),
    ];
    a.extend(APPROX);
    a.extend(extra);
    a
}

#[test]
fn simulate_writes_an_ingestible_reproducible_path() {
    let dir = TempDir::new().unwrap();
    let csv = simulated_csv(dir.path(), 64, 7);
    let (head, rows) = read_rows(&csv);
    assert_eq!(head, ["date", "y", "x", "c", "eta", "eps"]);
    assert_eq!(rows.len(), 64);
    assert_eq!(rows[0][0], "1961-01-01");
    assert_eq!(rows[63][0], "1976-10-01");
    for (i, r) in rows.iter().enumerate() {
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        let t = i as f64 + 1.0;
        assert!((v[0] - (2.0 + 0.5 * t + v[1] + v[2])).abs() < 1e-9);
    }
    let doc = read_json(&dir.path().join("sim.json"));
    assert_eq!(doc["metadata"]["seed"], 7);
    assert!(doc["metadata"]["generator"]
        .as_str()
        .unwrap()
        .contains("ChaCha20"));
    assert_eq!(doc["spec"]["n"], 64);

    let again = dir.path().join("again.csv");
    ok(&run(&[
        "simulate",
        "--params",
        s(&dir.path().join("truth.json")),
        "--n",
        "64",
        "--seed",
        "7",
        "--start",
        "1961Q1",
        "--out",
        s(&again),
    ]));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn fit_then_decompose_satisfies_the_identity() {
    let dir = TempDir::new().unwrap();
    let csv = simulated_csv(dir.path(), 60, 3);
    let fit = dir.path().join("fit.json");
    ok(&run(&fit_args(
        &csv,
        &fit,
        &["--p", "1", "--break", "1970Q1"],
    )));

    let doc = read_json(&fit);
    assert_eq!(doc["dataset"]["n"], 60);
    assert_eq!(doc["dataset"]["start"], "1961Q1");
    assert_eq!(doc["break_period"], "1970Q1");
    assert_eq!(doc["fit"]["spec"]["deterministic"]["break_at"], 37);
    assert!(doc["fit"]["params"]["mu_break"].is_number());
    let meta = &doc["metadata"];
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["estimation"]["starts"], 3);
    assert!(meta["estimation"]["stage2"]["f_rel_tol"].is_number());
    assert_eq!(meta["approximation"]["v"], 2);
    assert_eq!(meta["approximation"]["l"], 4);
    assert_eq!(meta["approximation"]["grid"]["lo"], 0.8);
    assert_eq!(meta["approximation"]["grid"]["points"], 6);

    let table = dir.path().join("decomp.csv");
    ok(&run(&[
        "decompose",
        "--fit",
        s(&fit),
        "--input",
        s(&csv),
        "--out",
        s(&table),
    ]));
    let (head, rows) = read_rows(&table);
    assert_eq!(
        head,
        [
            "date",
            "y",
            "trend",
            "cycle",
            "correction_x",
            "correction_c"
        ]
    );
    assert_eq!(rows.len(), 60);
    let (_, sim) = read_rows(&csv);
    for (r, q) in rows.iter().zip(&sim) {
        assert_eq!(r[0], q[0]);
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], q[1].parse::<f64>().unwrap());
        assert!((v[0] - v[1] - v[2]).abs() <= 1e-8, "row {}", r[0]);
    }
    let (tidy_head, tidy) = read_rows(&dir.path().join("decomp_tidy.csv"));
    assert_eq!(tidy_head, ["date", "series", "value"]);
    assert_eq!(tidy.len(), 5 * 60);
    assert_eq!(tidy[1][1], "trend");
    let summary = read_json(&dir.path().join("decomp.json"));
    assert!(summary["max_identity_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(summary["metadata"]["identity_tolerance"], 1e-8);
    let ll = summary["loglik"].as_f64().unwrap();
    assert!((ll - doc["fit"]["loglik"].as_f64().unwrap()).abs() < 1e-6);
}

#[test]
fn unit_root_model_equals_fixed_d_of_one() {
    let dir = TempDir::new().unwrap();
    let csv = simulated_csv(dir.path(), 60, 11);
    let (a, b) = (dir.path().join("tc.json"), dir.path().join("fixed.json"));
    ok(&run(&fit_args(
        &csv,
        &a,
        &["--p", "auto", "--pmax", "1", "--model", "tc"],
    )));
    ok(&run(&fit_args(
        &csv,
        &b,
        &["--p", "auto", "--pmax", "1", "--d", "fixed=1"],
    )));
    let (mut ja, mut jb) = (read_json(&a), read_json(&b));
    assert_ne!(ja["metadata"]["command"], jb["metadata"]["command"]);
    ja.as_object_mut().unwrap().remove("metadata");
    jb.as_object_mut().unwrap().remove("metadata");
    assert_eq!(ja, jb);
    assert_eq!(ja["fit"]["spec"]["d_mode"]["fixed"], 1.0);
    assert_eq!(ja["selection"]["bic"].as_array().unwrap().len(), 2);
}

#[test]
fn conflicting_model_and_d_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let csv = simulated_csv(dir.path(), 40, 1);
    let out = run(&fit_args(
        &csv,
        &dir.path().join("f.json"),
        &["--model", "tc", "--d", "free"],
    ));
    assert_eq!(out.status.code(), Some(2));
    let out = run(&fit_args(
        &csv,
        &dir.path().join("f.json"),
        &["--break", "1950Q1"],
    ));
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("outside the sample"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn ingest_errors_name_rows_and_exit_two() {
    let dir = TempDir::new().unwrap();
    let gap = dir.path().join("gap.csv");
    let mut text = String::from("observation_date,GDPC1\n");
    for (y, q) in (1961..1971).flat_map(|y| (0..4).map(move |q| (y, q))) {
        if (y, q) != (1962, 2) {
            text.push_str(&format!("{y}-{:02}-01,{}\n", 3 * q + 1, 3000 + 10 * y));
        }
    }
    std::fs::write(&gap, &text).unwrap();
    let out = run(&[
        "gph",
        "--input",
        s(&gap),
        "--out",
        s(&dir.path().join("g.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing 1962Q3"), "{}", stderr(&out));
    assert!(stderr(&out).contains("rows 7 and 8"), "{}", stderr(&out));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,v\n2000-01-01,1\n2000-04-01,.\n2000-04-01,3\n").unwrap();
    let out = run(&[
        "gph",
        "--input",
        s(&bad),
        "--out",
        s(&dir.path().join("g.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 3 ('.')"), "{}", stderr(&out));

    let out = run(&["fit", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(2), "missing --out is a usage error");
}

#[test]
fn gph_records_transform_and_bandwidth() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("level.csv");
    let mut text = String::from("date,level\n");
    let mut x: f64 = 100.0;
    for t in 0..120u32 {
        x *= 1.0 + 0.01 * ((t * 37 % 11) as f64 - 5.0) / 5.0;
        text.push_str(&format!("{}-{:02}-01,{x}\n", 1990 + t / 12, t % 12 + 1));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("gph.json");
    ok(&run(&[
        "gph",
        "--input",
        s(&csv),
        "--log",
        "--scale",
        "100",
        "--alpha",
        "0.6",
        "--out",
        s(&out),
    ]));
    let doc = read_json(&out);
    assert_eq!(doc["dataset"]["frequency"], "monthly");
    assert_eq!(doc["dataset"]["transform"]["log"], true);
    assert_eq!(doc["dataset"]["transform"]["scale"], 100.0);
    assert_eq!(doc["differenced"], true);
    assert_eq!(
        doc["estimate"]["bandwidth"],
        (119f64).powf(0.6).floor() as u64
    );
    assert!(doc["estimate"]["d"].is_number());
}

#[test]
fn coefficient_maps_are_cached() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let csv = simulated_csv(dir.path(), 40, 2);
    let fit = dir.path().join("fit.json");
    let args = fit_args(&csv, &fit, &["--p", "0"]);
    let first = run_with_cache(&args, &cache);
    ok(&first);
    assert!(stderr(&first).contains("building"));
    let files: Vec<_> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files.len(), 1);
    assert!(
        files[0].to_str().unwrap().contains("arma2x2-n40"),
        "{files:?}"
    );
    let before = std::fs::read(&fit).unwrap();
    let second = run_with_cache(&args, &cache);
    ok(&second);
    assert!(!stderr(&second).contains("building"));
    let strip = |b: &[u8]| {
        let mut v: Value = serde_json::from_slice(b).unwrap();
        v.as_object_mut().unwrap().remove("metadata");
        v
    };
    assert_eq!(strip(&before), strip(&std::fs::read(&fit).unwrap()));
}

#[test]
fn monte_carlo_summarizes_replications() {
    let dir = TempDir::new().unwrap();
    simulated_csv(dir.path(), 40, 1);
    let params = dir.path().join("truth.json");
    let out = dir.path().join("mc.json");
    let mut args = vec![
        "mc",
        "--params",
        s(&params),
        "--n",
        "40",
        "--reps",
        "2",
        "--seed",
        "9",
        "--starts",
        "2",
        "--fit-model",
        "tc",
        "--out",
        s(&out),
    ];
    args.extend(APPROX);
    ok(&run(&args));
    let doc = read_json(&out);
    assert_eq!(doc["summary"]["reps"], 2);
    assert_eq!(doc["fit_spec"]["d_mode"]["fixed"], 1.0);
    assert_eq!(doc["dgp_params"]["d"], 1.3);
    assert_eq!(doc["metadata"]["seed"], 9);
    let names: Vec<&str> = doc["summary"]["params"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "phi1",
            "sigma_eta2",
            "sigma_eta_eps",
            "sigma_eps2",
            "mu0",
            "mu1"
        ]
    );

    let pos = args.iter().position(|a| *a == "--reps").unwrap();
    args[pos + 1] = "1";
    let one = run(&args);
    assert_eq!(one.status.code(), Some(2), "{}", stderr(&one));
}
