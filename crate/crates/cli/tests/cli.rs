use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use serde_json::{json, Value};
use tempfile::TempDir;
use uniqode::ode::{builtin_system, rk4_integrate, sample_dataset, BuiltinCase, Trajectory};

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn config(&self, value: &Value) -> PathBuf {
        self.write("config.json", &value.to_string())
    }

    fn out(&self, name: &str) -> PathBuf {
        let p = self.path(name);
        fs::create_dir_all(&p).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
}

fn uniqode(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uniqode"));
    cmd.args(args).env_remove("UNIQODE_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(args: &[&str]) -> Output {
    uniqode(args, &[])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> usize {
    csv.lines().count() - 1
}

fn entries(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().count()
}

/// Chemotherapy states with exact derivatives at hand-picked points: two
/// pairs share `N` with different `C`, so beta = 1 is recovered exactly.
fn chemo_pairs(states: &[[f64; 2]]) -> String {
    let system = builtin_system(BuiltinCase::ChemoInjection);
    let m = states.len();
    let s = Array2::from_shape_fn((m, 2), |(p, k)| states[p][k]);
    Trajectory::with_analytic_derivatives((0..m).map(|p| p as f64).collect(), s, &system)
        .unwrap()
        .to_csv_string()
}

#[test]
fn simulate_lotka_volterra() {
    let r = Run::new();
    let cfg = r.config(&json!({"system": "lotka_volterra"}));
    let out = r.out("a");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = r.read("a/trajectory.csv");
    assert_eq!(data_rows(&csv), 10001);
    assert!(csv.starts_with("t,x1,x2,dx1,dx2\n"));
    let back = Trajectory::from_csv_str(&csv).unwrap();
    assert_eq!(back.span(), Some((0.0, 10.0)));
}

#[test]
fn zero_noise_equals_no_noise() {
    let r = Run::new();
    let base = json!({"system": "chemo_injection", "data": {"samples": 101}});
    let mut noisy = base.clone();
    noisy["data"]["noise"] = json!({"fraction": 0.0, "seed": 9});
    for (name, cfg) in [("plain", &base), ("zero", &noisy)] {
        let c = r.write(&format!("{name}.json"), &cfg.to_string());
        let o = run(&["simulate", "--config", s(&c), "--out", s(&r.out(name))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let plain = r.read("plain/trajectory.csv");
    assert_eq!(data_rows(&plain), 101);
    assert_eq!(plain, r.read("zero/trajectory.csv"));

    noisy["data"]["noise"]["fraction"] = json!(0.1);
    let c = r.config(&noisy);
    assert_eq!(code(&run(&["simulate", "--config", s(&c), "--out", s(&r.out("n"))])), 0);
    let n = r.read("n/trajectory.csv");
    assert_ne!(n, plain);
    assert!(n.starts_with("t,x1,x2\n"));
}

#[test]
fn bad_configs_exit_2_without_output() {
    let r = Run::new();
    let out = r.out("o");
    let cfg = r.write("bad.json", "{\n  \"system\": \"lotka_volterra\",\n  \"data\": {\"dt\": }\n}");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(entries(&out), 0);

    let cfg = r.config(&json!({"system": "lotka_volterra", "trian": {}}));
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trian"));

    let cfg = r.config(&json!({"system": "predator_prey"}));
    assert_eq!(code(&run(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["simulate", "--out", s(&out)])), 2);
    assert_eq!(entries(&out), 0);
}

#[test]
fn inline_system_simulates() {
    let r = Run::new();
    let cfg = r.config(&json!({
        "system": {
            "states": ["N", "C"],
            "x0": [0.1, 0.2],
            "t_span": [0.0, 1.0],
            "components": [
                {"structured": {"g": "y*(1-y)", "beta_true": 1.0, "c": "-C", "h1": ["N"], "u_true": "y"}},
                {"known": "-0.3*N*C + exp(-5*(t-4)^2)"}
            ]
        },
        "data": {"dt": 0.01}
    }));
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&r.out("o"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let inline = Trajectory::from_csv_str(&r.read("o/trajectory.csv")).unwrap();
    let system = builtin_system(BuiltinCase::ChemoInjection);
    let builtin = rk4_integrate(&system, &[0.1, 0.2], (0.0, 1.0), 0.01).unwrap();
    let diff = (inline.states() - builtin.states()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(diff < 1e-14, "{diff}");
}

#[test]
fn identify_recovers_beta() {
    let r = Run::new();
    let data = r.write("d.csv", &chemo_pairs(&[[0.5, 1.0], [0.3, 0.4], [0.5, 2.0], [0.3, 1.5]]));
    let cfg = r.config(&json!({"system": "chemo_injection"}));
    let out = r.out("o");
    let o = run(&["identify", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert: Value = serde_json::from_str(&r.read("o/certificate.json")).unwrap();
    let beta = cert["certificate"]["recovered_beta"].as_f64().unwrap();
    assert!((beta - 1.0).abs() < 1e-10, "{beta}");
    assert_eq!(cert["pairs_found"], 2);
    assert_eq!(cert["formula_variant"], "verbatim");

    let o = run(&[
        "identify",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--formula-variant",
        "alternative",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert: Value = serde_json::from_str(&r.read("o/certificate.json")).unwrap();
    assert_eq!(cert["formula_variant"], "alternative");
}

#[test]
fn identify_without_pairs_exits_3() {
    let r = Run::new();
    let data = r.write("d.csv", &chemo_pairs(&[[0.5, 1.0], [0.5, 1.0], [0.3, 1.0], [0.2, 1.0]]));
    let cfg = r.config(&json!({"system": "chemo_injection"}));
    let out = r.out("o");
    let o = run(&["identify", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    let misses: Vec<&str> = err.lines().filter(|l| l.starts_with("  ")).collect();
    assert_eq!(misses.len(), 6, "{err}");
    for line in misses {
        let gap: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
        assert_eq!(gap, 0.0);
    }
    assert_eq!(entries(&out), 0);
}

#[test]
fn bounds_contain_truth() {
    let r = Run::new();
    let data = r.write("d.csv", &chemo_pairs(&[[0.5, 1.0], [0.501, 2.0]]));
    let cfg = r.config(&json!({
        "system": "chemo_injection",
        "identify": {"d": 0.002, "lipschitz": 1.0}
    }));
    let o = run(&[
        "bounds",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&r.out("o")),
        "--formula-variant",
        "alternative",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b: Value = serde_json::from_str(&r.read("o/bounds.json")).unwrap();
    assert_eq!(b["variant"], "alternative");
    let (est, radius) = (b["beta_estimate"].as_f64().unwrap(), b["beta_radius"].as_f64().unwrap());
    assert!(radius > 0.0 && (est - 1.0).abs() <= radius, "{est} ± {radius}");

    let cfg = r.config(&json!({"system": "chemo_injection", "identify": {"d": 0.002}}));
    let o = run(&["bounds", "--config", s(&cfg), "--data", s(&data), "--out", s(&r.out("p"))]);
    assert_eq!(code(&o), 2);
}

fn fit_config(r: &Run, seed: u64) -> PathBuf {
    r.config(&json!({
        "system": "lotka_volterra",
        "unknowns": {"initial_constants": [1.5, 0.5], "hidden": [6], "trajectory_hidden": [8, 8]},
        "train": {"epochs": 7, "collocation_count": 32, "seed": seed}
    }))
}

fn lv_data(r: &Run) -> (PathBuf, PathBuf) {
    let system = builtin_system(BuiltinCase::LotkaVolterra);
    let traj = sample_dataset(&rk4_integrate(&system, &system.x0, system.t_span, 1e-2).unwrap(), 51).unwrap();
    (
        r.write("exact.csv", &traj.to_csv_string()),
        r.write("states.csv", &traj.without_derivatives().to_csv_string()),
    )
}

#[test]
fn fit_modes_and_preconditions() {
    let r = Run::new();
    let (exact, states) = lv_data(&r);
    let cfg = fit_config(&r, 0);
    let o = run(&["fit", "--config", s(&cfg), "--data", s(&exact), "--mode", "direct", "--out", s(&r.out("d"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let loss = r.read("d/loss.csv");
    assert!(loss.starts_with("epoch,total,data,ode\n"));
    assert_eq!(data_rows(&loss), 7);
    let fit: Value = serde_json::from_str(&r.read("d/fit.json")).unwrap();
    assert_eq!(fit["mode"], "direct");
    assert_eq!(fit["constants"][0]["initial"], 1.5);

    let o = run(&["fit", "--config", s(&cfg), "--data", s(&states), "--mode", "upinn", "--out", s(&r.out("u"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(data_rows(&r.read("u/loss.csv")), 7);

    let out = r.out("x");
    let o = run(&["fit", "--config", s(&cfg), "--data", s(&states), "--mode", "direct", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(entries(&out), 0);

    let missing = r.path("nope.csv");
    assert_eq!(code(&run(&["fit", "--config", s(&cfg), "--data", s(&missing), "--out", s(&out)])), 4);
}

#[test]
fn fits_are_reproducible_and_seedable() {
    let r = Run::new();
    let (_, states) = lv_data(&r);
    let fit = |cfg: &Path, out: &str, env: &[(&str, &str)], extra: &[&str]| {
        let o = r.out(out);
        let mut args = vec!["fit", "--config", s(cfg), "--data", s(&states), "--mode", "upinn", "--out", s(&o)];
        args.extend_from_slice(extra);
        let res = uniqode(&args, env);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        r.read(&format!("{out}/fit.json"))
    };
    let seed0 = fit_config(&r, 0);
    let a = fit(&seed0, "a", &[], &[]);
    let b = fit(&seed0, "b", &[], &[]);
    assert_eq!(a, b);

    let seed5 = r.write("seed5.json", &fs::read_to_string(fit_config(&r, 5)).unwrap());
    let c = fit(&seed5, "c", &[], &[]);
    assert_ne!(a, c);
    assert_eq!(fit(&seed0, "d", &[("UNIQODE_SEED", "5")], &[]), c);
    assert_eq!(fit(&seed5, "e", &[("UNIQODE_SEED", "5")], &["--seed", "0"]), a);

    let o = uniqode(
        &["fit", "--config", s(&seed0), "--data", s(&states), "--out", s(&r.out("f"))],
        &[("UNIQODE_SEED", "five")],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn reproduce_tables_and_ids() {
    let r = Run::new();
    let cfg = r.config(&json!({
        "experiment": {"epochs": 1, "collocation_count": 8},
        "sweep": {"seeds": [0], "threads": 2}
    }));
    let out = r.out("o");
    let o = run(&["reproduce", "table3", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t3 = r.read("o/table3.csv");
    assert_eq!(data_rows(&t3), 9);
    assert!(t3.starts_with("Length,Pred. beta,beta %Error\n"));
    assert_eq!(data_rows(&r.read("o/table4.csv")), 9);

    let o = run(&["reproduce", "table1", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(data_rows(&r.read("o/table1.csv")), 7);
    assert_eq!(data_rows(&r.read("o/table2.csv")), 7);

    let o = run(&["reproduce", "case1", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(r.path("o/case1_u_n.json").exists() && r.path("o/case1_u_n2.json").exists());

    let empty = r.out("e");
    assert_eq!(code(&run(&["reproduce", "table9", "--out", s(&empty)])), 2);
    assert_eq!(entries(&empty), 0);
}

#[test]
fn sweep_commands_take_flags() {
    let r = Run::new();
    let cfg = r.config(&json!({"experiment": {"epochs": 1, "collocation_count": 8, "samples": 20}}));
    let o = run(&[
        "sweep-noise",
        "--config",
        s(&cfg),
        "--levels",
        "0,0.3",
        "--seeds",
        "1",
        "--out",
        s(&r.out("n")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(data_rows(&r.read("n/table1.csv")), 2);
    assert!(r.path("n/sweep_noise.json").exists());

    let o = run(&["sweep-noise", "--levels", "2", "--out", s(&r.out("m"))]);
    assert_eq!(code(&o), 2);
}
