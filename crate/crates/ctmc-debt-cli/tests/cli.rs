// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the `ctmc-debt` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CURVE: &str = "t,discount
0.26,0.986944
0.47,0.976019
0.72,0.964123
0.97,0.953152
1.22,0.943283
1.47,0.934357
1.72,0.926202
2.0,0.917553
3.0,0.888740
4.0,0.861950
";

const HULL_WHITE: &str = r#"{
  "model": {"kind": "hull_white", "kappa": 1.0, "sigma": 0.2, "r0": 0.04},
  "grid": {"lower": -1.2, "upper": 1.0, "m": 160},
  "time": {"dt": 0.003968253968253968},
  "policy": "permissive",
  "instruments": [
    {"name": "callable", "type": "callable_putable",
     "bond": {"face": 100.0, "coupon_rate": 0.05, "frequency": 2, "maturity": 4.0},
     "call": [{"start": 2.0, "end": 4.0, "price": 100.0}]}
  ]
}"#;

const VASICEK: &str = r#"{
  "model": {"kind": "vasicek", "kappa": 1.0, "theta": 0.04, "sigma": 0.2, "r0": 0.04},
  "grid": {"lower": -1.2, "upper": 1.0, "m": 160},
  "time": {"dt": 4.0},
  "policy": "permissive",
  "instruments": [
    {"name": "zcb4", "type": "zcb", "maturity": 4.0},
    {"name": "spot", "type": "zcb", "start": 4.0, "maturity": 4.0}
  ],
  "monte_carlo": {"paths": 20000, "steps_per_year": 50, "antithetic": true},
  "seed": 3
}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        ws.write("curve.csv", CURVE);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ctmc-debt")).current_dir(self.dir.path()).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
    (headers, rows)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (headers, rows) = read_csv(path);
    let i = headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {headers:?}"));
    rows.into_iter().map(|r| r[i].clone()).collect()
}

fn numbers(path: &Path, name: &str) -> Vec<f64> {
    column(path, name).iter().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn hull_white_calibration_reprices_the_knots() {
    let ws = Workspace::new();
    ws.write("hw.json", HULL_WHITE);
    ws.ok(&["calibrate", "--config", "hw.json", "--curve", "curve.csv", "--out", "out"]);
    let residuals = numbers(&ws.path("out/residuals.csv"), "residual");
    assert_eq!(residuals.len(), 10);
    assert!(residuals.iter().all(|r| r.abs() < 1e-10), "{residuals:?}");
    let (headers, rows) = read_csv(&ws.path("out/theta.csv"));
    assert_eq!(headers, ["t_n", "theta_star"]);
    assert!(rows.len() > 1000);
    // The residual was computed as model − market in memory; the identity
    // survives the file only if all three columns are written losslessly.
    let model = numbers(&ws.path("out/residuals.csv"), "model");
    let market = numbers(&ws.path("out/residuals.csv"), "market");
    for i in 0..residuals.len() {
        assert_eq!((model[i] - market[i]).to_bits(), residuals[i].to_bits(), "knot {i}");
    }
    assert!(ws.path("out/manifest.json").exists());
}

#[test]
fn shifted_model_uses_the_closed_form_shift() {
    let ws = Workspace::new();
    ws.write(
        "cirpp.json",
        r#"{
          "model": {"kind": "cir_pp", "kappa": 2.0, "alpha": 0.035, "sigma": 0.2, "r0": 0.04},
          "grid": {"lower": 0.0004, "upper": 0.28, "m": 160},
          "time": {"dt": 0.003968253968253968},
          "policy": "permissive"
        }"#,
    );
    ws.ok(&["calibrate", "--config", "cirpp.json", "--curve", "curve.csv", "--out", "out"]);
    let residuals = numbers(&ws.path("out/residuals.csv"), "residual");
    assert!(residuals.iter().all(|r| r.abs() < 1e-12), "{residuals:?}");
}

#[test]
fn flat_curve_with_nearly_deterministic_ho_lee_needs_no_drift() {
    let ws = Workspace::new();
    let flat: String = std::iter::once("t,discount".to_owned())
        .chain((1..=10).map(|i| format!("{},{}", 0.5 * i as f64, (-0.03 * 0.5 * i as f64).exp())))
        .collect::<Vec<_>>()
        .join("\n");
    ws.write("flat.csv", &flat);
    ws.write(
        "ho_lee.json",
        r#"{
          "model": {"kind": "ho_lee", "sigma": 0.0001, "r0": 0.03},
          "grid": {"kind": "uniform", "lower": 0.02, "upper": 0.04, "m": 41},
          "time": {"dt": 0.05}
        }"#,
    );
    ws.ok(&["calibrate", "--config", "ho_lee.json", "--curve", "flat.csv", "--out", "out"]);
    let theta = numbers(&ws.path("out/theta.csv"), "theta_star");
    assert!(theta.iter().all(|t| t.abs() < 1e-6), "{:?}", theta.iter().fold(0.0f64, |m, t| m.max(t.abs())));
}

#[test]
fn calibration_errors_exit_nonzero() {
    let ws = Workspace::new();
    ws.write("vasicek.json", VASICEK);
    let out = ws.run(&["calibrate", "--config", "vasicek.json", "--curve", "curve.csv", "--out", "out"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no θ-schedule"));

    ws.write("bad.csv", "t,discount\n0.25,0.99\n0.5,1e-30\n");
    ws.write(
        "hw.json",
        r#"{"model": {"kind": "hull_white", "kappa": 1.0, "sigma": 0.1, "r0": 0.04},
            "grid": {"lower": -0.5, "upper": 0.6, "m": 40}, "time": {"dt": 0.25}, "policy": "permissive"}"#,
    );
    let out = ws.run(&["calibrate", "--config", "hw.json", "--curve", "bad.csv", "--out", "out"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.5"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn callable_bond_record() {
    let ws = Workspace::new();
    ws.write("hw.json", HULL_WHITE);
    let stdout = ws.ok(&["price", "--config", "hw.json", "--curve", "curve.csv", "--out", "out"]);
    let value = numbers(&ws.path("out/prices.csv"), "value")[0];
    assert!((value - 95.6073132).abs() / 95.607 <= 5e-5, "{value}");
    // Nine decimals on the console.
    assert!(stdout.contains(&format!("{value:.9}")), "{stdout}");
    assert_eq!(column(&ws.path("out/prices.csv"), "method"), ["piecewise"]);
}

#[test]
fn zero_coupon_prices_with_simulation_cross_check() {
    let ws = Workspace::new();
    ws.write("v.json", VASICEK);
    ws.ok(&["price", "--config", "v.json", "--out", "a"]);
    let prices = ws.path("a/prices.csv");
    let value = numbers(&prices, "value");
    assert!((value[0] - 0.8964877).abs() < 5e-6, "{value:?}");
    assert_eq!(value[1], 1.0);
    let mc = column(&prices, "mc_value");
    let se = column(&prices, "mc_std_error");
    let (m, s): (f64, f64) = (mc[0].parse().unwrap(), se[0].parse().unwrap());
    assert!((m - value[0]).abs() < 4.0 * s + 1e-3, "{m} ± {s}");
    assert!(mc[1].is_empty(), "forward-start bonds are not simulated");
    assert_eq!(column(&prices, "method")[0], "homogeneous");

    // Same seed, same estimate; another seed moves it.
    ws.ok(&["price", "--config", "v.json", "--out", "b"]);
    assert_eq!(column(&ws.path("b/prices.csv"), "mc_value"), mc);
    ws.ok(&["price", "--config", "v.json", "--out", "c", "--seed", "4"]);
    assert_ne!(column(&ws.path("c/prices.csv"), "mc_value")[0], mc[0]);
}

#[test]
fn manifest_rerun_reproduces_the_outputs() {
    let ws = Workspace::new();
    ws.write("v.json", VASICEK);
    ws.ok(&["price", "--config", "v.json", "--out", "first", "--m", "120", "--seed", "9"]);
    ws.ok(&["price", "--config", "first/manifest.json", "--out", "second"]);
    for name in ["value", "mc_value", "mc_std_error", "method", "name"] {
        assert_eq!(column(&ws.path("first/prices.csv"), name), column(&ws.path("second/prices.csv"), name), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("second/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved_config"]["grid"]["m"], 120);
    assert_eq!(manifest["resolved_config"]["seed"], 9);
    assert_eq!(manifest["command"], "price");
}

#[test]
fn convertibles_price_through_the_two_layer_chain() {
    let ws = Workspace::new();
    ws.write(
        "cb.json",
        r#"{
          "model": {"kind": "vasicek", "kappa": 1.0, "theta": 0.04, "sigma": 0.01, "r0": 0.04},
          "grid": {"kind": "uniform", "lower": 0.0117, "upper": 0.0683, "m": 20},
          "time": {"dt": 0.02},
          "equity": {"s0": 100.0, "sigma": 0.25, "rho": -0.3, "big_m": 80, "kind": "uniform"},
          "instruments": [
            {"name": "eu", "type": "cb_european", "face": 100.0, "conversion_ratio": 1.0, "maturity": 1.0,
             "coupon_rate": 0.05, "credit_spread": 0.03},
            {"name": "am", "type": "cb_american", "face": 100.0, "conversion_ratio": 1.0, "maturity": 1.0,
             "coupon_rate": 0.05, "credit_spread": 0.03}
          ]
        }"#,
    );
    ws.ok(&["price", "--config", "cb.json", "--out", "out"]);
    let v = numbers(&ws.path("out/prices.csv"), "value");
    assert!(v[1] >= v[0] - 1e-10 * v[0] && v[0] > 100.0, "{v:?}");
    assert_eq!(column(&ws.path("out/prices.csv"), "method"), ["fast", "fast"]);

    ws.ok(&["price", "--config", "cb.json", "--out", "finer", "--big-m", "120"]);
    let finer = numbers(&ws.path("finer/prices.csv"), "value");
    assert!((finer[0] - v[0]).abs() / v[0] < 2e-3, "{finer:?} vs {v:?}");
}

#[test]
fn unknown_instrument_type_is_rejected() {
    let ws = Workspace::new();
    ws.write(
        "x.json",
        r#"{"model": {"kind": "vasicek", "kappa": 1.0, "theta": 0.04, "sigma": 0.1, "r0": 0.04},
            "grid": {"lower": -0.5, "upper": 0.6}, "instruments": [{"type": "swaption", "expiry": 1.0}]}"#,
    );
    let out = ws.run(&["price", "--config", "x.json", "--out", "out"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("swaption"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_coupon_convergence_study_against_the_closed_form() {
    let ws = Workspace::new();
    ws.write("v.json", VASICEK);
    ws.ok(&["convergence", "--config", "v.json", "--out", "out", "--m", "50,100,200,300"]);
    let study = ws.path("out/study.csv");
    let (headers, _) = read_csv(&study);
    assert_eq!(headers, ["m", "value", "abs_error", "rate", "elapsed_sec"]);
    let rates = column(&study, "rate");
    assert!(rates[0].is_empty());
    let rates: Vec<f64> = rates[1..].iter().map(|r| r.parse().unwrap()).collect();
    assert!(rates.iter().all(|r| (r - 2.0).abs() < 0.1), "{rates:?}");
    let errors = numbers(&study, "abs_error");
    assert!(errors.windows(2).all(|w| w[1] < w[0]));

    ws.ok(&["convergence", "--config", "v.json", "--out", "single", "--m", "80"]);
    assert_eq!(column(&ws.path("single/study.csv"), "rate"), [""]);
}

#[test]
fn study_without_closed_form_needs_the_self_benchmark() {
    let ws = Workspace::new();
    let config = HULL_WHITE.replace(
        "\"policy\": \"permissive\",",
        "\"policy\": \"permissive\", \"convergence\": {\"self_benchmark\": false},",
    );
    ws.write("hw.json", &config);
    let out = ws.run(&["convergence", "--config", "hw.json", "--curve", "curve.csv", "--out", "out", "--m", "40,60"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("self_benchmark"));
}
