use std::fs;
use std::path::Path;

use mscahn::cli::{drivers, main_with_args, RunConfig};
use mscahn::mobility::{weighted_projections, ModelKind, ModelSpec};
use mscahn::Matrix;

const BASE: &str = r#"{
    "model": {"kind": "elliott_garcke", "n": 3},
    "grid": {"nx": 24, "length": 1.0},
    "time": {"dt": 1e-4, "t_end": 1e-3},
    "initial": {"kind": "perturbed_uniform", "amplitude": 0.1, "seed": 5},
    "output": {"stride": 2}
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["mscahn"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", BASE);
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);

    let trace = read_rows(&out.join("trace.csv"));
    assert_eq!(
        trace[0].join(","),
        "t,H,E,H_delta,E_delta,lyapunov,mass_1,mass_2,mass_3,min_c,neg_1,neg_2,neg_3,diss_laplacian,diss_sqrt,diss_projected,newton_iters,eps_used"
    );
    // initial row plus every second of ten steps
    assert_eq!(trace.len(), 1 + 1 + 5);
    let lyap: Vec<f64> = trace[1..].iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(lyap.windows(2).all(|w| w[1] <= w[0]));

    let fin = read_rows(&out.join("final_state.csv"));
    assert_eq!(fin[0].join(","), "x,c_1,c_2,c_3");
    assert_eq!(fin.len(), 25);
    for row in &fin[1..] {
        let c: Vec<f64> = row[1..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(c[2], 1.0 - (c[0] + c[1]));
    }

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    for key in ["config", "lambda_m", "lambda_M", "C1", "rho_certified", "version"] {
        assert!(meta.get(key).is_some(), "{key}");
    }
    assert_eq!(meta["config"]["grid"]["nx"], 24);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", BASE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]), 0);
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]), 0);
    for f in ["trace.csv", "final_state.csv", "meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn constant_data_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &BASE.replace("\"amplitude\": 0.1", "\"amplitude\": 0.0"));
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let trace = read_rows(&out.join("trace.csv"));
    let first = &trace[1];
    for row in &trace[1..] {
        assert_eq!(row[5], first[5]);
        for col in 13..16 {
            assert_eq!(row[col].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", &BASE.replace("\"nx\": 24", "\"nx\": 3"));
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["run", "--config", &bad, "--out", out.to_str().unwrap()]), 2);
    let garbage = write_config(dir.path(), "g.json", "{not json");
    assert_eq!(run_cli(&["run", "--config", &garbage]), 2);
    assert_eq!(run_cli(&["run", "--config", "/nonexistent/x.json"]), 2);
    assert_eq!(run_cli(&["frobnicate"]), 2);
}

#[test]
fn newton_failure_exits_three_and_dumps_state() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace(
        "\"initial\"",
        "\"scheme\": {\"newton_tol\": 1e-30, \"newton_max_iter\": 1}, \"initial\"",
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 3);
    assert_eq!(read_rows(&out.join("final_state.csv")).len(), 25);
    assert_eq!(read_rows(&out.join("trace.csv")).len(), 2);
}

#[test]
fn custom_csv_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let seed_cfg = write_config(dir.path(), "c.json", BASE);
    let out = dir.path().join("first");
    assert_eq!(run_cli(&["run", "--config", &seed_cfg, "--out", out.to_str().unwrap()]), 0);
    fs::copy(out.join("final_state.csv"), dir.path().join("start.csv")).unwrap();

    let text = BASE.replace(
        "\"kind\": \"perturbed_uniform\", \"amplitude\": 0.1, \"seed\": 5",
        "\"kind\": \"custom_csv\", \"path\": \"start.csv\"",
    );
    let cfg = RunConfig::load(Path::new(&write_config(dir.path(), "d.json", &text))).unwrap();
    let sim = drivers::Simulation::new(&cfg).unwrap();
    let s0 = sim.initial_state().unwrap();
    let fin = read_rows(&out.join("final_state.csv"));
    for (j, row) in fin[1..].iter().enumerate() {
        assert_eq!(s0.c[0][j], row[1].parse::<f64>().unwrap());
    }
}

#[test]
fn sweep_and_refine_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", BASE);
    let out = dir.path().join("sweep");
    assert_eq!(
        run_cli(&["sweep-delta", "--config", &cfg, "--deltas", "1e-2,1e-3", "--out", out.to_str().unwrap()]),
        0
    );
    let rows = read_rows(&out.join("sweep_delta.csv"));
    assert_eq!(rows.len(), 3);
    // smooth data far from the boundary never goes negative
    assert!(rows[1..].iter().all(|r| r.last().unwrap() == "no-negativity"));

    let refine = dir.path().join("refine");
    assert_eq!(
        run_cli(&["dt-refine", "--config", &cfg, "--dts", "2e-4,1e-4,5e-5", "--out", refine.to_str().unwrap()]),
        0
    );
    assert_eq!(read_rows(&refine.join("dt_refine.csv")).len(), 4);
    assert_eq!(run_cli(&["dt-refine", "--config", &cfg, "--dts", "2e-4,1e-4,3e-5"]), 2);

    let ws = dir.path().join("ws");
    assert_eq!(
        run_cli(&["weak-strong", "--config", &cfg, "--amplitudes", "1e-2,5e-3", "--out", ws.to_str().unwrap()]),
        0
    );
    assert_eq!(read_rows(&ws.join("weak_strong.csv")).len(), 3);
}

#[test]
fn verify_matrices_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(
        dir.path(),
        "ms.json",
        r#"{"kind": "maxwell_stefan_classic", "n": 3, "k": [[0,1,1],[1,0,1],[1,1,0]]}"#,
    );
    assert_eq!(run_cli(&["verify-matrices", "--model", &good, "--samples", "500", "--seed", "3"]), 0);
    // an overstated floor makes the upper spectral bound too small
    let bad = write_config(
        dir.path(),
        "weak.json",
        r#"{"kind": "maxwell_stefan_classic", "n": 3, "k": [[0,0.1,0.1],[0.1,0,0.1],[0.1,0.1,0]], "rho": 1.0}"#,
    );
    assert_eq!(run_cli(&["verify-matrices", "--model", &bad, "--samples", "50", "--seed", "3"]), 4);
}

#[test]
fn binary_maxwell_stefan_is_half_projection() {
    let spec = ModelSpec {
        kind: ModelKind::MaxwellStefanClassic,
        n: 2,
        k: Some(vec![vec![0.0, 2.0], vec![2.0, 0.0]]),
        beta: None,
        rho: None,
    };
    let model = spec.build().unwrap();
    for c1 in [0.1, 0.37, 0.5, 0.93] {
        let c = [c1, 1.0 - c1];
        let dbd = model.bott_duffin_inverse(&c).unwrap();
        let half: Matrix = weighted_projections(&c).p_l * 0.5;
        assert!((dbd - half).amax() < 1e-14);
    }
    let rep = drivers::verify_matrices(&spec, 200, 11).unwrap();
    assert!(rep.passed());
    assert_eq!(rep, drivers::verify_matrices(&spec, 200, 11).unwrap());
}
