use std::f64::consts::PI;

use super::*;
use crate::linalg::Mat;
use crate::system::{CoefficientSample, DisturbanceRealization};

const EXAMPLE2_TOML: &str = include_str!("../../../../scenarios/example2.toml");
const EXAMPLE1_TOML: &str = include_str!("../../../../scenarios/example1.toml");

fn small_multi_agent(horizon: usize) -> ScenarioConfig {
    let mut cfg = example2(1).unwrap();
    cfg.horizon = horizon;
    cfg
}

#[test]
fn example1_preset_parameters() {
    let cfg = example1();
    let SystemSpec::Mathieu(p) = &cfg.system else { panic!("mathieu expected") };
    assert_eq!((p.omega, p.omega0, p.epsilon, p.dt), (2.0 * PI, PI, 0.3, 0.1));
    assert_eq!(p.sample, CoefficientSample::End);
    let ag = &cfg.agents[0];
    assert_eq!(ag.x0, InitialState::Fixed(vec![0.5, 0.0]));
    assert_eq!(ag.x_hat0, vec![0.0, 0.0]);
    assert_eq!(ag.p0.as_mat(), &Mat::identity(2).scale(10.5));
    assert_eq!(ag.q.as_mat(), &Mat::scalar(0.0025));
    assert_eq!(ag.r.as_mat(), &Mat::scalar(0.0025));
    let sin = DisturbanceRealization::Sinusoidal { amplitude: vec![0.05], frequency: 2.0 * PI, phase: 0.0, dt: 0.1 };
    assert_eq!((&ag.w, &ag.v), (&sin, &sin));
    assert_eq!(cfg.horizon, 200);
}

#[test]
fn shipped_files_match_presets() {
    assert_eq!(parse_config(EXAMPLE1_TOML).unwrap(), example1());
    let parsed = parse_config(EXAMPLE2_TOML).unwrap();
    let preset = example2(1).unwrap();
    assert_eq!(parsed.agents, preset.agents);
    assert_eq!(parsed.graph, preset.graph);
    assert_eq!(parsed.leader_x0, preset.leader_x0);
    let (d1, d2) = (parsed.design.unwrap(), preset.design.unwrap());
    assert_eq!((d1.q, d1.certificate, d1.p0, d1.q_bar), (d2.q, d2.certificate, d2.p0, d2.q_bar));
    assert!((d1.circle.unwrap().c0 - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn non_pd_initial_shape_is_named_with_line() {
    let src = EXAMPLE1_TOML.replace("p0 = 10.5", "p0 = [[1.0, 2.0], [2.0, 1.0]]");
    let line = src.lines().position(|l| l.starts_with("p0 =")).unwrap() + 1;
    match parse_config(&src) {
        Err(ScenarioError::Validation(v)) => {
            assert_eq!(v.len(), 1, "{v:?}");
            assert_eq!(v[0].path, "filter.p0");
            assert_eq!(v[0].line, Some(line));
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn missing_graph_is_rejected() {
    let start = EXAMPLE2_TOML.find("# Directed edges").unwrap();
    let end = EXAMPLE2_TOML.find("[design]").unwrap();
    let src = format!("{}{}", &EXAMPLE2_TOML[..start], &EXAMPLE2_TOML[end..]);
    match parse_config(&src) {
        Err(ScenarioError::Validation(v)) => assert!(v.iter().any(|x| x.path == "graph"), "{v:?}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn all_violations_are_reported() {
    let src = EXAMPLE2_TOML
        .replacen("x_hat0 = [50.0, -50.0]", "x_hat0 = [50.0]", 1)
        .replace("[leader]\nx0 = [5.0, -5.0]", "[leader]\nx0 = [5.0]");
    match parse_config(&src) {
        Err(ScenarioError::Validation(v)) => {
            assert!(v.len() >= 2, "{v:?}");
            assert!(v.iter().all(|x| x.line.is_some()), "{v:?}");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn syntax_errors_carry_a_line() {
    let src = "mode = \"single-filter\"\nhorizon = 3\n[system\n";
    match parse_config(src) {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, Some(3)),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let unknown = EXAMPLE1_TOML.replace("seed = 0", "seed = 0\nsede = 1");
    assert!(matches!(parse_config(&unknown), Err(ScenarioError::Parse { line: Some(_), .. })));
}

#[test]
fn bad_enumerations_are_rejected() {
    let src = EXAMPLE1_TOML.replace("sample = \"end\"", "sample = \"middle\"").replace("mode = \"single-filter\"", "mode = \"x\"");
    match parse_config(&src) {
        Err(ScenarioError::Validation(v)) => {
            assert!(v.iter().any(|x| x.path == "system.sample"));
            assert!(v.iter().any(|x| x.path == "mode"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn metrics_cover_every_sample() {
    let run = run_scenario(&small_multi_agent(5)).unwrap();
    assert_eq!(run.report.samples, 6);
    let RunDetail::Multi(m) = &run.detail else { panic!() };
    assert_eq!(m.records.len(), 6);
    let files: Vec<&str> = run.tables.iter().map(|t| t.file.as_str()).collect();
    assert_eq!(
        files,
        ["metrics.csv", "trace_agent_1.csv", "trace_agent_2.csv", "trace_agent_3.csv", "trace_agent_4.csv", "global.csv", "design.csv"]
    );
    for t in &run.tables[1..] {
        assert!(t.rows.iter().all(|r| r.len() == t.header.len()));
    }
    let mean = m.delta_bar().iter().sum::<f64>() / 6.0;
    assert!((run.report.sync.as_ref().unwrap().mean_delta_bar - mean).abs() < 1e-15);
}

#[test]
fn single_filter_metrics_match_logs() {
    let mut cfg = example1();
    cfg.horizon = 10;
    let run = run_scenario(&cfg).unwrap();
    let RunDetail::Single(steps) = &run.detail else { panic!() };
    assert_eq!(steps.len(), 11);
    let mean = steps.iter().map(|s| crate::linalg::norm(&s.error())).sum::<f64>() / 11.0;
    assert!((run.report.mean_abs_error - mean).abs() < 1e-15);
    assert_eq!(run.report.containment_violations, 0);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = small_multi_agent(8);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    for (x, y) in a.tables.iter().zip(&b.tables) {
        assert_eq!(x.to_bytes().unwrap(), y.to_bytes().unwrap(), "{}", x.file);
    }
    let mut other = cfg.clone();
    other.seed = 1;
    let c = run_scenario(&other).unwrap();
    assert_ne!(a.tables[5].to_bytes().unwrap(), c.tables[5].to_bytes().unwrap());
}

#[test]
fn floats_round_trip_through_csv() {
    for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, -7.25e12, f64::MIN_POSITIVE] {
        assert_eq!(run::fmt17(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn metrics_round_trip_and_write() {
    let run = run_scenario(&small_multi_agent(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = run.write(dir.path()).unwrap();
    assert_eq!(written.len(), run.tables.len());
    let back = MetricsReport::from_csv(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(back, run.report);
}

#[test]
fn comparison_of_identical_runs_has_identical_columns() {
    let report = run_scenario(&small_multi_agent(3)).unwrap().report;
    let cmp = compare_runs(&[report.clone(), report]).unwrap();
    assert!(cmp.table.rows.iter().all(|r| r[1] == r[2]));
    assert!(cmp.text.lines().count() == cmp.table.rows.len() + 1);
}

#[test]
fn comparison_errors() {
    assert!(matches!(compare_runs(&[]), Err(ScenarioError::NotEnoughRuns(0))));
    let a = run_scenario(&small_multi_agent(3)).unwrap().report;
    assert!(matches!(compare_runs(&[a.clone()]), Err(ScenarioError::NotEnoughRuns(1))));
    let mut b = a.clone();
    b.horizon = 4;
    assert!(matches!(compare_runs(&[a, b]), Err(ScenarioError::HorizonMismatch { first: 3, other: 4, .. })));
}

#[test]
fn unknown_preset_and_setting() {
    assert!(preset("example3", 1).is_none());
    assert!(example2(4).is_none());
    assert_eq!(example2(3).unwrap().name, "example2-setting3");
}

#[test]
fn oversized_sinusoid_is_rejected_per_agent() {
    let mut cfg = small_multi_agent(3);
    cfg.agents[1].v = DisturbanceRealization::Sinusoidal { amplitude: vec![10.0], frequency: 1.0, phase: 1.0, dt: 1.0 };
    match run_scenario(&cfg) {
        Err(ScenarioError::Validation(v)) => assert!(v.iter().any(|x| x.path.starts_with("agents[2]")), "{v:?}"),
        other => panic!("{other:?}"),
    }
}
