use uniqode::experiments::*;
use uniqode::identify::{find_matched_pairs, Samples};
use uniqode::train::FitMode;
use uniqode::Error;

/// A few epochs on small data, enough to exercise the plumbing.
fn quick(epochs: usize) -> CaseOverrides {
    CaseOverrides {
        epochs: Some(epochs),
        samples: Some(40),
        collocation_count: Some(16),
        ..CaseOverrides::default()
    }
}

#[test]
fn case_ids_round_trip() {
    for case in CaseId::ALL {
        assert_eq!(case.name().parse::<CaseId>().unwrap(), case);
        assert_eq!(case.to_string(), case.name());
    }
    assert_eq!(" CASE1-U-N2 ".parse::<CaseId>().unwrap(), CaseId::Case1UN2);
    assert!(matches!("case6".parse::<CaseId>(), Err(Error::Config(_))));
}

#[test]
fn overrides_layer_over_defaults() {
    let d = CaseConfig::defaults(CaseId::Case5);
    assert_eq!(d.samples, 1024);
    assert_eq!(d.train.collocation_count, 1024);
    assert_eq!(d.train.omega_de, 0.001);
    assert_eq!(d.hidden, vec![10, 10]);
    assert_eq!(d.trajectory_hidden, Some(vec![20, 20, 20]));

    let o = CaseOverrides {
        seed: Some(7),
        noise: Some(0.1),
        no_early_stop: true,
        ..CaseOverrides::default()
    };
    let c = CaseConfig::resolve(CaseId::Case4, &o).unwrap();
    assert_eq!((c.train.seed, c.noise_seed, c.noise), (7, 7, 0.1));
    assert!(c.train.early_stop.is_none());

    let noisy_direct = CaseOverrides {
        noise: Some(0.1),
        ..CaseOverrides::default()
    };
    assert!(matches!(CaseConfig::resolve(CaseId::Case1UN, &noisy_direct), Err(Error::Config(_))));
    let err = serde_json::from_str::<CaseOverrides>(r#"{"epochs": 3, "epoks": 4}"#).unwrap_err();
    assert!(err.to_string().contains("epoks"));
}

#[test]
fn every_case_runs_briefly() {
    for case in CaseId::ALL {
        let report = run_case(case, &quick(2)).unwrap();
        assert_eq!(report.config.case, case);
        assert_eq!(report.epochs_run, 2);
        assert!(report.wall_seconds >= 0.0);
        for c in &report.constants {
            let want = 100.0 * (c.predicted - c.truth).abs() / c.truth.abs();
            assert_eq!(c.percent_error, want, "{case} {}", c.name);
        }
        let expected_constants = match case {
            CaseId::Case2 => 0,
            CaseId::Case3 | CaseId::Case4 => 2,
            _ => 1,
        };
        assert_eq!(report.constants.len(), expected_constants, "{case}");
        assert!(!report.functions.is_empty());
        for f in &report.functions {
            assert_eq!(f.y.len(), FUNCTION_GRID);
            assert!(f.y.windows(2).all(|w| w[0] < w[1]));
        }
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["config"]["case"], case.name());
        assert!(json.get("fit").is_none());
    }
}

#[test]
fn function_grid_stays_in_observed_range() {
    let report = run_case(CaseId::Case3, &quick(1)).unwrap();
    let fit = report.fit.as_ref().unwrap();
    assert_eq!(fit.mode, FitMode::Direct);
    let system = report.config.system().unwrap();
    let truth = ground_truth(&system).unwrap();
    let data = uniqode::ode::sample_dataset(&truth, 40).unwrap();
    for f in &report.functions {
        let col = data.states().column(f.component);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f.y[0], lo);
        assert!((f.y[f.y.len() - 1] - hi).abs() <= 1e-12 * hi.abs());
    }
    assert_eq!(report.functions.len(), 4);
    assert!(report.function("u_x").is_some() && report.function("growth_y").is_some());
}

#[test]
fn write_case_emits_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_case(CaseId::Case1UN, &quick(3)).unwrap();
    write_case(&report, dir.path()).unwrap();
    let loss = std::fs::read_to_string(dir.path().join("case1_u_n_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let u = std::fs::read_to_string(dir.path().join("case1_u_n_u_N.csv")).unwrap();
    assert!(u.starts_with("y,true,predicted\n"));
    assert_eq!(u.lines().count(), FUNCTION_GRID + 1);
    assert!(dir.path().join("case1_u_n_growth_N.csv").exists());
    let back: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("case1_u_n.json")).unwrap()).unwrap();
    assert_eq!(back["constants"][0]["name"], "beta");
}

#[test]
fn reports_are_reproducible() {
    let a = run_case(CaseId::Case4, &quick(3)).unwrap();
    let b = run_config(&a.config).unwrap();
    assert_eq!(a.constants, b.constants);
    assert_eq!(a.functions, b.functions);
    assert_eq!((a.r2, a.mape, a.total_loss), (b.r2, b.mape, b.total_loss));
}

#[test]
fn small_sweeps_fill_tables() {
    let base = CaseOverrides {
        epochs: Some(2),
        collocation_count: Some(16),
        ..CaseOverrides::default()
    };
    let s = sweep_length(&[16, 8, 4], &[0, 1], &base, 2).unwrap();
    assert_eq!(s.entries.len(), 6);
    let t = s.constants_table();
    assert_eq!(t.headers, vec!["Length", "Pred. beta", "beta %Error"]);
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.rows[2][0], 4.0);
    let csv = s.losses_table().to_csv();
    assert_eq!(csv.lines().next().unwrap(), "Length,Data Loss,ODE Loss,R²,MAPE");
    assert_eq!(csv.lines().count(), 4);
    let errs: Vec<f64> = s.at(8.0).map(|e| e.report.constants[0].percent_error).collect();
    assert_eq!(t.rows[1][2], median(&errs));

    let base = CaseOverrides {
        samples: Some(30),
        ..base
    };
    let n = sweep_noise(&[0.0, 0.3], &[3], &base, 1).unwrap();
    let t = n.constants_table();
    assert_eq!(t.headers, vec!["% Noise", "Pred. alpha", "Pred. gamma", "alpha %Error", "gamma %Error"]);
    assert_eq!(t.rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![0.0, 30.0]);

    assert!(matches!(sweep_noise(&[1.5], &[0], &base, 1), Err(Error::Config(_))));
    assert!(matches!(sweep_length(&[0], &[0], &base, 1), Err(Error::Config(_))));
    assert!(matches!(sweep_length(&[8], &[], &base, 1), Err(Error::Config(_))));
}

#[test]
fn median_handles_parity() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

/// Minimum `|C_i - C_j|` for a pair to separate the two unknowns; closer
/// pairs are merely neighbouring samples along the trajectory.
const INFORMATIVE_C_GAP: f64 = 0.05;

/// Both unknown functions of case 2 are recovered where the data holds
/// matched pairs, the only region where they are identifiable.
#[test]
fn case2_functions_agree_where_pairs_exist() {
    let report = run_case(CaseId::Case2, &CaseOverrides::default()).unwrap();
    let system = report.config.system().unwrap();
    let data = uniqode::ode::sample_dataset(&ground_truth(&system).unwrap(), report.config.samples).unwrap();
    let (q, term) = system.structured().next().unwrap();
    let samples = Samples::from_term(term, q, &data).unwrap();
    let pairs: Vec<_> = find_matched_pairs(&samples, 1e-3)
        .into_iter()
        .filter(|p| p.c_gap.abs() >= INFORMATIVE_C_GAP)
        .collect();
    assert!(!pairs.is_empty());
    let ys = pairs.iter().flat_map(|p| [samples.y[p.i][0], samples.y[p.j][0]]);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    for name in ["u_N", "growth_N"] {
        let err = report.function(name).unwrap().max_relative_error_within(lo, hi);
        println!("{name}: max relative error {err:.4} on N in [{lo:.4}, {hi:.4}]");
        assert!(err < 0.05, "{name}: {err}");
    }
}
